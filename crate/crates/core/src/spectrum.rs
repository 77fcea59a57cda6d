//! The spectrum of `(D^R)* D^R` with multiplicities, its cross-validation
//! against truncated matrices, Schatten traces and zeta values.

use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{count_g_checked, count_g_f64, FieldParams};
use crate::operators::{self, DepthClosure};
use crate::qspecial::{self, RootTable};
use crate::tree::TreeWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub m: u32,
    pub n: usize,
    pub lambda: f64,
    /// `p^(2m/e) lambda_n`.
    pub value: f64,
    pub multiplicity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub params: FieldParams,
    /// Sorted by value, ties broken by `(m, n)`.
    pub entries: Vec<SpectrumEntry>,
}

impl SpectrumTable {
    /// Values repeated according to multiplicity, ascending, at most `limit`.
    pub fn expanded(&self, limit: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for e in &self.entries {
            for _ in 0..e.multiplicity {
                if out.len() >= limit {
                    return out;
                }
                out.push(e.value);
            }
        }
        out
    }
}

/// All `p^(2m/e) lambda_n` for `m <= m_max`, `n <= n_max`, with multiplicity
/// 1 for `m = 0` and `p^(mf) - p^((m-1)f)` otherwise.
pub fn full_spectrum(params: &FieldParams, roots: &RootTable, m_max: u32, n_max: usize) -> Result<SpectrumTable> {
    if roots.len() <= n_max {
        return Err(Error::InvalidArgument(format!(
            "need {} roots, table has {}",
            n_max + 1,
            roots.len()
        )));
    }
    let mut entries = Vec::new();
    for m in 0..=m_max {
        let multiplicity = count_g_checked(params, m)
            .ok_or_else(|| Error::InvalidArgument(format!("multiplicity at m = {m} overflows u64")))?;
        let scale = params.pow_e(2 * m as i64);
        for n in 0..=n_max {
            let lambda = roots.value(n);
            entries.push(SpectrumEntry {
                m,
                n,
                lambda,
                value: scale * lambda,
                multiplicity,
            });
        }
    }
    entries.sort_by(|a, b| a.value.total_cmp(&b.value).then((a.m, a.n).cmp(&(b.m, b.n))));
    Ok(SpectrumTable {
        params: *params,
        entries,
    })
}

/// Sizes of runs of values that agree to relative `tol`.
pub fn multiplicity_pattern(sorted: &[f64], tol: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i > 0 && (v - sorted[i - 1]).abs() <= tol * v.abs() {
            *out.last_mut().unwrap() += 1;
        } else {
            out.push(1);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub params: FieldParams,
    pub depth: u32,
    pub closure: DepthClosure,
    pub k: usize,
    /// Analytic values are only compared below `p^(2(N-2)/e)`.
    pub cutoff: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_errors: Vec<f64>,
    pub max_rel_error: f64,
    pub analytic_pattern: Vec<usize>,
    pub numeric_pattern: Vec<usize>,
    pub pattern_match: bool,
    /// Relative change of the lowest eigenvalue from depth `N` to `N + 2`.
    pub drift: Option<f64>,
    pub tol: f64,
    pub passed: bool,
}

/// Relative tolerance for grouping eigenvalues into multiplicity clusters.
const CLUSTER_TOL: f64 = 1e-8;

/// Matches the `k` lowest eigenvalues of `D*D` on the depth-`N` window of the
/// `R` tree against the analytic multiset.
pub fn validate_spectrum(
    params: &FieldParams,
    depth: u32,
    k: usize,
    tol: f64,
    closure: DepthClosure,
    with_drift: bool,
) -> Result<ValidationReport> {
    if depth < 2 {
        return Err(Error::InvalidArgument("validation needs depth N >= 2".into()));
    }
    let n_roots = depth as usize;
    let roots = qspecial::roots_for(params, n_roots)?;
    let table = full_spectrum(params, &roots, depth, n_roots - 1)?;
    validate_against(&table, depth, k, tol, closure, with_drift)
}

/// As [`validate_spectrum`] with a given analytic table, e.g. one read back
/// from a file.
pub fn validate_against(
    table: &SpectrumTable,
    depth: u32,
    k: usize,
    tol: f64,
    closure: DepthClosure,
    with_drift: bool,
) -> Result<ValidationReport> {
    let params = &table.params;
    if depth < 2 {
        return Err(Error::InvalidArgument("validation needs depth N >= 2".into()));
    }
    let cutoff = params.pow_e(2 * (depth as i64 - 2));
    let below: Vec<f64> = table
        .expanded(usize::MAX)
        .into_iter()
        .filter(|&v| v < cutoff)
        .collect();
    if below.len() < k {
        return Err(Error::CutoffTooLow {
            cutoff,
            available: below.len(),
            requested: k,
        });
    }
    let analytic = below[..k].to_vec();
    let window = TreeWindow::ring(*params, depth)?;
    let numeric = operators::lowest_eigenvalues(&window, closure, k)?;
    if numeric.len() < k {
        return Err(Error::NotConverged(format!(
            "only {} of {k} eigenvalues available",
            numeric.len()
        )));
    }
    let drift = if with_drift {
        let deeper = TreeWindow::ring(*params, depth + 2)?;
        let lo = operators::lowest_eigenvalues(&deeper, closure, 1)?;
        Some((lo[0] - numeric[0]).abs() / numeric[0])
    } else {
        None
    };
    let mut report = ValidationReport {
        params: *params,
        depth,
        closure,
        k,
        cutoff,
        analytic,
        numeric,
        rel_errors: Vec::new(),
        max_rel_error: 0.0,
        analytic_pattern: Vec::new(),
        numeric_pattern: Vec::new(),
        pattern_match: false,
        drift,
        tol,
        passed: false,
    };
    report.rescore();
    Ok(report)
}

impl ValidationReport {
    /// Recomputes errors, patterns and the verdict from `analytic` and `numeric`.
    pub fn rescore(&mut self) {
        self.rel_errors = self
            .analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs() / a.abs())
            .collect();
        self.max_rel_error = self.rel_errors.iter().copied().fold(0.0, f64::max);
        self.analytic_pattern = multiplicity_pattern(&self.analytic, CLUSTER_TOL);
        self.numeric_pattern = multiplicity_pattern(&self.numeric, CLUSTER_TOL);
        self.pattern_match = self.analytic_pattern == self.numeric_pattern;
        self.passed = self.max_rel_error < self.tol && self.pattern_match;
    }
}

/// `1 + sum_{m=1}^{m_max} p^(-2ms/e) (p^(mf) - p^((m-1)f))`.
pub fn m_factor_direct(params: &FieldParams, s: f64, m_max: u32) -> f64 {
    let mut acc = 0.0;
    for m in (1..=m_max).rev() {
        let c = count_g_f64(params, m);
        acc += c * (params.p() as f64).powf(-2.0 * m as f64 * s / params.e() as f64);
    }
    1.0 + acc
}

/// The limit of [`m_factor_direct`]:
/// `1 + (1 - p^-f) p^(f - 2s/e) / (1 - p^(f - 2s/e))`, finite iff `s > ef/2`.
pub fn m_factor_closed(params: &FieldParams, s: f64) -> Result<f64> {
    let threshold = params.degree() as f64 / 2.0;
    if s <= threshold {
        return Err(Error::Divergent { s, threshold });
    }
    let p = params.p() as f64;
    let x = p.powf(params.f() as f64 - 2.0 * s / params.e() as f64);
    Ok(1.0 + (1.0 - p.powi(-(params.f() as i32))) * x / (1.0 - x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchattenPartial {
    pub s: f64,
    pub m_max: u32,
    pub n_max: usize,
    pub m_factor_direct: f64,
    pub m_factor_closed: f64,
    /// `m_factor_direct * sum_{n <= n_max} lambda_n^-s`.
    pub value: f64,
    /// Partial sums over `n`, for Cauchy checks.
    pub partial_sums: Vec<f64>,
}

/// Partial trace of `((D^R)* D^R)^-s`.
pub fn schatten_partial(params: &FieldParams, roots: &RootTable, s: f64, m_max: u32, n_max: usize) -> Result<SchattenPartial> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("s = {s} must be positive")));
    }
    let closed = m_factor_closed(params, s)?;
    if roots.len() <= n_max {
        return Err(Error::InvalidArgument(format!(
            "need {} roots, table has {}",
            n_max + 1,
            roots.len()
        )));
    }
    let direct = m_factor_direct(params, s, m_max);
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = (0..=n_max)
        .map(|n| {
            acc += roots.value(n).powf(-s);
            direct * acc
        })
        .collect();
    Ok(SchattenPartial {
        s,
        m_max,
        n_max,
        m_factor_direct: direct,
        m_factor_closed: closed,
        value: *partial_sums.last().unwrap(),
        partial_sums,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaValue {
    pub s_re: f64,
    pub s_im: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub n_roots_used: usize,
    /// Bound on the modulus of the omitted part of the sum.
    pub tail_bound: f64,
}

impl ZetaValue {
    pub fn s(&self) -> Complex64 {
        Complex64::new(self.s_re, self.s_im)
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }
}

/// Relative size below which the denominator of the factor counts as zero.
const POLE_TOL: f64 = 1e-12;

/// `(1 - p^(-2s/e)) / (1 - p^(f - 2s/e))`.
pub fn zeta_factor(params: &FieldParams, s: Complex64) -> Result<Complex64> {
    let ln_p = (params.p() as f64).ln();
    let e = params.e() as f64;
    let num = Complex64::new(1.0, 0.0) - (-s * 2.0 / e * ln_p).exp();
    let den = Complex64::new(1.0, 0.0) - ((Complex64::new(params.f() as f64, 0.0) - s * 2.0 / e) * ln_p).exp();
    if den.norm() < POLE_TOL {
        return Err(Error::Pole { re: s.re, im: s.im });
    }
    Ok(num / den)
}

/// Lower bound `lambda_n >= kappa Q^n` for all `n >= n0 >= 1`.
fn tail_kappa(big_q: f64, n0: usize) -> f64 {
    let qn = big_q.powi(n0 as i32);
    f64::max(1.0 - 1.0 / (qn - 1.0), 1.0 / big_q)
}

/// `sum_{n < n_roots} lambda_n^-s` with a bound on the remainder.
pub fn zeta_d0(params: &FieldParams, roots: &RootTable, s: Complex64, n_roots: usize) -> Result<ZetaValue> {
    if !(s.re > 0.0) {
        return Err(Error::OutOfDomain { re: s.re, im: s.im });
    }
    if n_roots == 0 || n_roots > roots.len() {
        return Err(Error::InvalidArgument(format!(
            "n_roots = {n_roots} must be in 1..={}",
            roots.len()
        )));
    }
    let sum: Complex64 = (0..n_roots)
        .map(|n| (-s * roots.value(n).ln()).exp())
        .sum();
    let big_q = params.q_inv();
    let sigma = s.re;
    let kappa = tail_kappa(big_q, n_roots);
    let tail = kappa.powf(-sigma) * big_q.powf(-(n_roots as f64) * sigma) / (1.0 - big_q.powf(-sigma));
    Ok(ZetaValue {
        s_re: s.re,
        s_im: s.im,
        value_re: sum.re,
        value_im: sum.im,
        n_roots_used: n_roots,
        tail_bound: tail,
    })
}

/// `zeta_{D^R}(s) = factor(s) zeta_{D_0}(s)`.
pub fn zeta_dr(params: &FieldParams, roots: &RootTable, s: Complex64, n_roots: usize) -> Result<ZetaValue> {
    let factor = zeta_factor(params, s)?;
    let z0 = zeta_d0(params, roots, s, n_roots)?;
    let v = factor * z0.value();
    Ok(ZetaValue {
        value_re: v.re,
        value_im: v.im,
        tail_bound: factor.norm() * z0.tail_bound,
        ..z0
    })
}

/// Poles of the factor, `s = (e/2)(f - 2 pi i k / ln p)`.
pub fn factor_poles(params: &FieldParams, ks: RangeInclusive<i64>) -> Vec<Complex64> {
    let ln_p = (params.p() as f64).ln();
    let e = params.e() as f64;
    ks.map(|k| {
        Complex64::new(
            e / 2.0 * params.f() as f64,
            -e * std::f64::consts::PI * k as f64 / ln_p,
        )
    })
    .collect()
}

/// Zeros of the factor's numerator, `s = pi i k e / ln p`.
pub fn factor_zeros(params: &FieldParams, ks: RangeInclusive<i64>) -> Vec<Complex64> {
    let ln_p = (params.p() as f64).ln();
    let e = params.e() as f64;
    ks.map(|k| Complex64::new(0.0, std::f64::consts::PI * k as f64 * e / ln_p))
        .collect()
}

/// The second pole family `s = 2 pi i k e / ln p`, which comes from the
/// continuation of `zeta_{D_0}` and is listed for reference only.
pub fn continuation_pole_reference(params: &FieldParams, ks: RangeInclusive<i64>) -> Vec<Complex64> {
    let ln_p = (params.p() as f64).ln();
    let e = params.e() as f64;
    ks.map(|k| Complex64::new(0.0, 2.0 * std::f64::consts::PI * k as f64 * e / ln_p))
        .collect()
}
