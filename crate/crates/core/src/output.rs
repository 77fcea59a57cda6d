//! Machine-readable runs: configs, result rows, and JSON/CSV rendering.
//!
//! Output is a pure function of the config, so equal configs render to
//! byte-identical text.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldParams;
use crate::operators::{self, DepthClosure};
use crate::qspecial;
use crate::seminorms;
use crate::spectrum::{self, SpectrumEntry, SpectrumTable};
use crate::testfn::library_with_seed;
use crate::tree::TreeWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsOut {
    pub p: u32,
    pub e: u32,
    pub f: u32,
}

impl From<&FieldParams> for ParamsOut {
    fn from(fp: &FieldParams) -> Self {
        Self {
            p: fp.p(),
            e: fp.e(),
            f: fp.f(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<R> {
    pub params: ParamsOut,
    pub command: String,
    pub results: Vec<R>,
    pub meta: Meta,
}

/// A result row with a fixed CSV layout.
pub trait Row: Serialize {
    fn header() -> &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render<R: Row>(doc: &Document<R>, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc).expect("rows serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = R::header().join(",");
            s.push('\n');
            for r in &doc.results {
                let cells: Vec<String> = r.cells().iter().map(|c| csv_field(c)).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            s
        }
    }
}

fn meta(seed: u64, tolerances: &[(&str, f64)]) -> Meta {
    Meta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        tolerances: tolerances.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

// ---- spectrum ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub m: u32,
    pub n: usize,
    pub lambda: f64,
    pub value: f64,
    pub multiplicity: u64,
}

impl Row for SpectrumRow {
    fn header() -> &'static [&'static str] {
        &["m", "n", "lambda", "value", "multiplicity"]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.m.to_string(),
            self.n.to_string(),
            fmt_float(self.lambda),
            fmt_float(self.value),
            self.multiplicity.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    pub params: FieldParams,
    pub m_max: u32,
    pub n_max: usize,
    pub seed: u64,
}

pub fn run_spectrum(cfg: &SpectrumConfig) -> Result<Document<SpectrumRow>> {
    let roots = qspecial::roots_for(&cfg.params, cfg.n_max + 1)?;
    let table = spectrum::full_spectrum(&cfg.params, &roots, cfg.m_max, cfg.n_max)?;
    let results = table
        .entries
        .iter()
        .map(|e| SpectrumRow {
            m: e.m,
            n: e.n,
            lambda: e.lambda,
            value: e.value,
            multiplicity: e.multiplicity,
        })
        .collect();
    Ok(Document {
        params: (&cfg.params).into(),
        command: "spectrum".into(),
        results,
        meta: meta(cfg.seed, &[("root_residual", qspecial::QSeriesContext::from_params(&cfg.params).target_tol)]),
    })
}

/// Reads the output of [`run_spectrum`] in JSON form back into a table.
pub fn spectrum_table_from_json(text: &str) -> Result<SpectrumTable> {
    let doc: Document<SpectrumRow> =
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("spectrum json: {e}")))?;
    let params = FieldParams::new(doc.params.p, doc.params.e, doc.params.f)?;
    if doc.command != "spectrum" {
        return Err(Error::InvalidArgument(format!(
            "expected a spectrum document, got {:?}",
            doc.command
        )));
    }
    let mut entries: Vec<SpectrumEntry> = doc
        .results
        .into_iter()
        .map(|r| SpectrumEntry {
            m: r.m,
            n: r.n,
            lambda: r.lambda,
            value: r.value,
            multiplicity: r.multiplicity,
        })
        .collect();
    entries.sort_by(|a, b| a.value.total_cmp(&b.value).then((a.m, a.n).cmp(&(b.m, b.n))));
    Ok(SpectrumTable { params, entries })
}

// ---- validate ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Row for CheckRow {
    fn header() -> &'static [&'static str] {
        &["check", "measured", "tolerance", "passed", "detail"]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.check.clone(),
            fmt_float(self.measured),
            fmt_float(self.tolerance),
            self.passed.to_string(),
            self.detail.clone(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateConfig {
    pub params: FieldParams,
    /// Depth of the spectrum window.
    pub depth: u32,
    pub k: usize,
    pub tol: f64,
    pub closure: DepthClosure,
    /// Also solve at depth `N + 2` and report the drift of the lowest eigenvalue.
    pub drift: bool,
    pub drift_tol: f64,
    /// Depth of the seminorm comparison.
    pub seminorm_depth: u32,
    pub seed: u64,
    /// Analytic table to compare against instead of a fresh one.
    pub spectrum: Option<SpectrumTable>,
    /// Perturbs the lowest numeric eigenvalue by this relative amount, as a
    /// negative control.
    pub corrupt: Option<f64>,
}

impl ValidateConfig {
    pub fn default_for(params: FieldParams) -> Self {
        Self {
            params,
            depth: if params.q_res() <= 3 { 10 } else { 6 },
            k: 8,
            tol: 1e-6,
            closure: DepthClosure::Transparent,
            drift: true,
            drift_tol: 1e-8,
            seminorm_depth: 8,
            seed: 7,
            spectrum: None,
            corrupt: None,
        }
    }
}

/// HS closed form is checked for `m <= HS_M_MAX` with this many kernel terms.
const HS_M_MAX: u32 = 10;
const HS_TERMS: usize = 200;
const HS_TOL: f64 = 1e-12;
const HS_TOTAL_M: u32 = 80;
const HS_TOTAL_TOL: f64 = 1e-10;
const COMMUTATOR_TOL: f64 = 1e-8;

fn check(name: impl Into<String>, measured: f64, tolerance: f64, passed: bool, detail: impl Into<String>) -> CheckRow {
    CheckRow {
        check: name.into(),
        measured,
        tolerance,
        passed,
        detail: detail.into(),
    }
}

pub fn run_validate(cfg: &ValidateConfig) -> Result<Document<CheckRow>> {
    let params = &cfg.params;
    let mut rows = Vec::new();

    let mut report = match &cfg.spectrum {
        Some(table) => {
            if table.params != *params {
                return Err(Error::InvalidArgument("spectrum table is for different parameters".into()));
            }
            spectrum::validate_against(table, cfg.depth, cfg.k, cfg.tol, cfg.closure, cfg.drift)?
        }
        None => spectrum::validate_spectrum(params, cfg.depth, cfg.k, cfg.tol, cfg.closure, cfg.drift)?,
    };
    if let Some(eps) = cfg.corrupt {
        report.numeric[0] *= 1.0 + eps;
        report.rescore();
    }
    rows.push(check(
        "spectrum_rel_error",
        report.max_rel_error,
        cfg.tol,
        report.max_rel_error < cfg.tol,
        format!("N={} k={} closure={:?}", cfg.depth, cfg.k, cfg.closure),
    ));
    let mismatch = report
        .analytic_pattern
        .iter()
        .zip(&report.numeric_pattern)
        .filter(|(a, b)| a != b)
        .count()
        + report.analytic_pattern.len().abs_diff(report.numeric_pattern.len());
    rows.push(check(
        "spectrum_multiplicity_pattern",
        mismatch as f64,
        0.0,
        report.pattern_match,
        format!("analytic {:?} numeric {:?}", report.analytic_pattern, report.numeric_pattern),
    ));
    if let Some(d) = report.drift {
        rows.push(check(
            "spectrum_drift_n_to_n_plus_2",
            d,
            cfg.drift_tol,
            d < cfg.drift_tol,
            format!("N={} vs N={}", cfg.depth, cfg.depth + 2),
        ));
    }

    let window = TreeWindow::ring(*params, cfg.seminorm_depth)?;
    for a in library_with_seed(params, cfg.seed) {
        let r = seminorms::seminorm_report(&window, &a)?;
        let lo = r.lower_constant * r.l1;
        let hi = r.upper_constant * r.l1;
        // positive when an inequality is violated
        let excess = f64::max(lo - r.ld_formula, r.ld_formula - hi)
            .max(lo - r.commutator_norm)
            .max(r.commutator_norm - hi);
        rows.push(check(
            format!("seminorm_sandwich:{}", a.id),
            excess,
            0.0,
            r.sandwich_ok(),
            format!(
                "{:.6e} <= L_D {:.6e} (commutator {:.6e}) <= {:.6e}",
                lo, r.ld_formula, r.commutator_norm, hi
            ),
        ));
        let rel = r.formula_gap / r.commutator_norm.max(f64::MIN_POSITIVE);
        let measured = if r.commutator_norm == 0.0 { r.formula_gap } else { rel };
        rows.push(check(
            format!("seminorm_formula_vs_commutator:{}", a.id),
            measured,
            COMMUTATOR_TOL,
            measured <= COMMUTATOR_TOL,
            format!("formula {:.16e} commutator {:.16e}", r.ld_formula, r.commutator_norm),
        ));
    }

    let hs_err = (0..=HS_M_MAX)
        .map(|m| {
            let closed = operators::hs_norm_dg_inverse(params, m);
            (operators::hs_norm_dg_inverse_direct(params, m, HS_TERMS) - closed).abs() / closed
        })
        .fold(0.0, f64::max);
    rows.push(check(
        "hs_closed_form",
        hs_err,
        HS_TOL,
        hs_err <= HS_TOL,
        format!("m <= {HS_M_MAX}"),
    ));
    let sums = operators::hs_partial_sums(params, HS_TOTAL_M);
    if params.degree() < 2 {
        let r = 1.0 - params.q();
        let closed = spectrum::m_factor_closed(params, 1.0)? / (r * r);
        let err = (sums[HS_TOTAL_M as usize] - closed).abs();
        rows.push(check(
            "hs_total_converges",
            err,
            HS_TOTAL_TOL,
            err <= HS_TOTAL_TOL,
            format!("limit {closed:.16e}"),
        ));
    } else {
        let first = sums[1] - sums[0];
        let last = sums[HS_TOTAL_M as usize] - sums[HS_TOTAL_M as usize - 1];
        let ratio = last / first;
        rows.push(check(
            "hs_total_increments_nondecaying",
            ratio,
            1.0,
            ratio >= 1.0 - 1e-12,
            format!("increment at m={HS_TOTAL_M} over increment at m=1"),
        ));
    }

    Ok(Document {
        params: params.into(),
        command: "validate".into(),
        results: rows,
        meta: meta(
            cfg.seed,
            &[
                ("spectrum_rel", cfg.tol),
                ("drift", cfg.drift_tol),
                ("commutator", COMMUTATOR_TOL),
                ("hs_closed_form", HS_TOL),
                ("hs_total", HS_TOTAL_TOL),
            ],
        ),
    })
}

pub fn all_passed(doc: &Document<CheckRow>) -> bool {
    doc.results.iter().all(|r| r.passed)
}

// ---- zeta ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaRow {
    pub s_re: f64,
    pub s_im: f64,
    pub zeta_re: Option<f64>,
    pub zeta_im: Option<f64>,
    pub tail_bound: Option<f64>,
    pub n_roots_used: usize,
    /// `"ok"` or `"pole"`.
    pub flag: String,
}

impl Row for ZetaRow {
    fn header() -> &'static [&'static str] {
        &["s_re", "s_im", "zeta_re", "zeta_im", "tail_bound", "n_roots_used", "flag"]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            fmt_float(self.s_re),
            fmt_float(self.s_im),
            fmt_opt(self.zeta_re),
            fmt_opt(self.zeta_im),
            fmt_opt(self.tail_bound),
            self.n_roots_used.to_string(),
            self.flag.clone(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZetaConfig {
    pub params: FieldParams,
    pub s: Vec<Complex64>,
    pub n_roots: Vec<usize>,
    pub seed: u64,
}

pub fn run_zeta(cfg: &ZetaConfig) -> Result<Document<ZetaRow>> {
    if let Some(s) = cfg.s.iter().find(|s| !(s.re > 0.0)) {
        return Err(Error::OutOfDomain { re: s.re, im: s.im });
    }
    let max_roots = cfg.n_roots.iter().copied().max().unwrap_or(0);
    if max_roots == 0 {
        return Err(Error::InvalidArgument("n_roots must be positive".into()));
    }
    let roots = qspecial::roots_for(&cfg.params, max_roots)?;
    let mut rows = Vec::new();
    for &s in &cfg.s {
        for &n in &cfg.n_roots {
            let row = match spectrum::zeta_dr(&cfg.params, &roots, s, n) {
                Ok(z) => ZetaRow {
                    s_re: s.re,
                    s_im: s.im,
                    zeta_re: Some(z.value_re),
                    zeta_im: Some(z.value_im),
                    tail_bound: Some(z.tail_bound),
                    n_roots_used: n,
                    flag: "ok".into(),
                },
                Err(Error::Pole { .. }) => ZetaRow {
                    s_re: s.re,
                    s_im: s.im,
                    zeta_re: None,
                    zeta_im: None,
                    tail_bound: None,
                    n_roots_used: n,
                    flag: "pole".into(),
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(Document {
        params: (&cfg.params).into(),
        command: "zeta".into(),
        results: rows,
        meta: meta(cfg.seed, &[("root_residual", qspecial::QSeriesContext::from_params(&cfg.params).target_tol)]),
    })
}
