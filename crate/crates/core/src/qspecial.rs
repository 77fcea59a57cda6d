//! The q-Pochhammer symbol, the series
//! `1phi1(0; q; q, z) = sum_n (-1)^n q^(n(n-1)/2) z^n / (q;q)_n^2`,
//! its positive roots, and the radial eigenvectors built from them.
//!
//! The roots sit extremely close to `Q^n = q^-n` (for `Q = 4`,
//! `lambda_5 = 1024 - 4.6e-19`), and the series cancels through terms of size
//! about `exp(c n^2)`. Everything that depends on a root is therefore evaluated
//! with MPFR floats whose precision is chosen from the size of the largest
//! term.

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldParams;

/// Absolute tail tolerance used by the multi-precision series.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSeriesContext {
    /// `0 < q < 1`.
    pub q: f64,
    /// Tail tolerance of [`phi11`] and residual tolerance of root refinement.
    pub target_tol: f64,
    pub max_terms: usize,
    /// `(p, e)` with `q = p^(-2/e)`, when known; used to form `q` exactly.
    pub exact: Option<(u32, u32)>,
}

impl QSeriesContext {
    pub fn new(q: f64, target_tol: f64, max_terms: usize) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("q = {q} is not in (0, 1)")));
        }
        if !(target_tol > 0.0) || max_terms == 0 {
            return Err(Error::InvalidArgument("tolerance and term budget must be positive".into()));
        }
        Ok(Self {
            q,
            target_tol,
            max_terms,
            exact: None,
        })
    }

    pub fn from_params(params: &FieldParams) -> Self {
        Self {
            q: params.q(),
            target_tol: 1e-12,
            max_terms: 100_000,
            exact: Some((params.p(), params.e())),
        }
    }

    /// `Q = 1/q`.
    pub fn big_q(&self) -> f64 {
        1.0 / self.q
    }

    fn mp_big_q(&self, prec: u32) -> Float {
        match self.exact {
            Some((p, e)) => {
                let p2 = Float::with_val(prec, p) * p;
                if e == 1 {
                    p2
                } else if e == 2 {
                    Float::with_val(prec, p)
                } else {
                    p2.root(e)
                }
            }
            None => Float::with_val(prec, 1) / Float::with_val(prec, self.q),
        }
    }
}

/// `(q; q)_n = prod_{k=1..n} (1 - q^k)`.
pub fn q_pochhammer(q: f64, n: usize) -> f64 {
    let mut acc = 1.0;
    let mut qk = 1.0;
    for _ in 0..n {
        qk *= q;
        acc *= 1.0 - qk;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    /// Bound on `|sum of the omitted terms|`.
    pub tail_bound: f64,
    pub terms: usize,
}

/// Ratio `|t_{n+1} / t_n| = q^n |z| / (1 - q^(n+1))^2`; decreasing in `n`.
fn term_ratio(q: f64, n: usize, z: f64) -> f64 {
    let d = 1.0 - q.powi(n as i32 + 1);
    q.powi(n as i32) * z.abs() / (d * d)
}

/// Double-precision evaluation of `1phi1(0; q; q, z)`.
///
/// Summation stops once the geometric bound on the remaining terms,
/// `|t_{n+1}| / (1 - ratio_{n+1})`, drops below `target_tol * max(1, |sum|)`.
/// Large `z` loses accuracy to cancellation; see [`phi11_mp`].
pub fn phi11(ctx: &QSeriesContext, z: f64) -> Result<SeriesValue> {
    let q = ctx.q;
    let mut sum: f64 = 1.0;
    let mut term = 1.0;
    for n in 0..ctx.max_terms {
        let next = -term * term_ratio(q, n, z);
        let rho = term_ratio(q, n + 1, z);
        if rho < 1.0 {
            let tail = next.abs() / (1.0 - rho);
            if tail <= ctx.target_tol * sum.abs().max(1.0) {
                return Ok(SeriesValue {
                    value: sum,
                    tail_bound: tail,
                    terms: n + 1,
                });
            }
        }
        sum += next;
        term = next;
    }
    Err(Error::SeriesNotConverged {
        max_terms: ctx.max_terms,
    })
}

/// `log2` of the largest term modulus of the series at `z`.
fn log2_max_term(q: f64, z: f64) -> f64 {
    let mut best = 0.0f64;
    let mut cur = 0.0f64;
    let mut n = 0usize;
    loop {
        let r = term_ratio(q, n, z);
        if r < 1.0 && n > 0 {
            break;
        }
        cur += r.log2();
        best = best.max(cur);
        n += 1;
        if n > 100_000 {
            break;
        }
    }
    best
}

/// Working precision for evaluating the series at `|z| <= z_max`.
pub fn precision_for(q: f64, z_max: f64) -> u32 {
    let bits = 192.0 + log2_max_term(q, z_max.abs().max(1.0));
    (bits.ceil() as u32).max(192)
}

#[derive(Debug, Clone)]
pub struct MpSeriesValue {
    pub value: Float,
    pub tail_bound: f64,
    pub terms: usize,
}

/// Multi-precision evaluation at `z`, with working precision `z.prec()`.
pub fn phi11_mp(ctx: &QSeriesContext, z: &Float) -> Result<MpSeriesValue> {
    let prec = z.prec();
    let q = Float::with_val(prec, 1) / ctx.mp_big_q(prec);
    let zf = z.to_f64();
    let mut sum = Float::with_val(prec, 1);
    let mut term = Float::with_val(prec, 1);
    let mut qn = Float::with_val(prec, 1); // q^n
    let mut qn1 = q.clone(); // q^(n+1)
    for n in 0..ctx.max_terms {
        // t_{n+1} = -t_n z q^n / (1 - q^(n+1))^2
        let mut den = Float::with_val(prec, 1);
        den -= &qn1;
        den.square_mut();
        term *= z;
        term *= &qn;
        term /= &den;
        term = -term;
        let rho = term_ratio(ctx.q, n + 1, zf);
        if rho < 1.0 {
            let tail = term.to_f64().abs() / (1.0 - rho);
            // the sum is accurate to about 2^-prec in absolute terms, so sum
            // until the tail is below that too
            if tail <= 2f64.powi(-(prec.min(1000) as i32)) {
                return Ok(MpSeriesValue {
                    value: sum,
                    tail_bound: tail,
                    terms: n + 1,
                });
            }
        }
        sum += &term;
        qn *= &q;
        qn1 *= &q;
    }
    Err(Error::SeriesNotConverged {
        max_terms: ctx.max_terms,
    })
}

/// Which enclosure of `lambda_n` is used for bracketing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BracketRule {
    /// `p^(n/e) (1 - p^(-2n/e) / (1 - p^(-2n/e))) <= lambda_n <= p^(n/e)` for
    /// `n >= 1`, and `lambda_0` in `(1e-12, lower(1))`.
    PowerHalf,
    /// `max(Q^n - 1/(1 - Q^-n), Q^(n-1)) <= lambda_n <= Q^n` for `n >= 1`, and
    /// `lambda_0` in `(1e-12, 1)`, with `Q = p^(2/e) = 1/q`. `lambda_0 < 1`
    /// because the Rayleigh quotient of the first basis vector is 1.
    InverseQ,
}

const LAMBDA0_FLOOR: f64 = 1e-12;

/// The bracket for root `n` as multi-precision endpoints.
fn bracket_mp(ctx: &QSeriesContext, rule: BracketRule, n: usize, prec: u32) -> (Float, Float) {
    let big_q = ctx.mp_big_q(prec);
    match rule {
        BracketRule::PowerHalf => {
            // p^(n/e) = Q^(n/2)
            let lower = |k: usize| {
                let s = Float::with_val(prec, (&big_q).pow(k as u32)).sqrt();
                let qk = Float::with_val(prec, 1) / Float::with_val(prec, (&big_q).pow(k as u32));
                let mut one_minus = Float::with_val(prec, 1);
                one_minus -= &qk;
                let mut factor = Float::with_val(prec, 1);
                factor -= Float::with_val(prec, &qk / &one_minus);
                (Float::with_val(prec, &s * &factor), s)
            };
            if n == 0 {
                (Float::with_val(prec, LAMBDA0_FLOOR), lower(1).0)
            } else {
                lower(n)
            }
        }
        BracketRule::InverseQ => {
            if n == 0 {
                (Float::with_val(prec, LAMBDA0_FLOOR), Float::with_val(prec, 1))
            } else {
                let qn = Float::with_val(prec, (&big_q).pow(n as u32));
                let qn1 = Float::with_val(prec, &qn / &big_q);
                let mut denom = Float::with_val(prec, 1);
                denom -= Float::with_val(prec, 1) / &qn;
                let mut a = qn.clone();
                a -= Float::with_val(prec, 1) / denom;
                let lo = if a > qn1 { a } else { qn1 };
                (lo, qn)
            }
        }
    }
}

/// The bracket for root `n` in double precision.
pub fn bracket(ctx: &QSeriesContext, rule: BracketRule, n: usize) -> (f64, f64) {
    let (lo, hi) = bracket_mp(ctx, rule, n, 128);
    (lo.to_f64(), hi.to_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootEntry {
    pub n: usize,
    pub value: f64,
    /// `|1phi1(lambda_n)|` at the refined multi-precision root.
    pub residual: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub precision_bits: u32,
    pub bisection_steps: usize,
}

/// Roots `lambda_0 < lambda_1 < ...` of `1phi1(0; q; q, z)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootTable {
    pub q: f64,
    pub rule: BracketRule,
    pub entries: Vec<RootEntry>,
    #[serde(skip)]
    precise: Vec<Float>,
    #[serde(skip)]
    ctx: Option<QSeriesContext>,
}

impl RootTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn value(&self, n: usize) -> f64 {
        self.entries[n].value
    }

    /// The refined root at full working precision.
    pub fn precise(&self, n: usize) -> Option<&Float> {
        self.precise.get(n)
    }

    pub fn context(&self) -> Option<&QSeriesContext> {
        self.ctx.as_ref()
    }

    /// A table built from given values (no multi-precision data).
    pub fn from_values(q: f64, values: Vec<f64>) -> Self {
        let entries = values
            .into_iter()
            .enumerate()
            .map(|(n, v)| RootEntry {
                n,
                value: v,
                residual: f64::NAN,
                bracket_lo: f64::NAN,
                bracket_hi: f64::NAN,
                precision_bits: 53,
                bisection_steps: 0,
            })
            .collect();
        Self {
            q,
            rule: BracketRule::InverseQ,
            entries,
            precise: Vec::new(),
            ctx: None,
        }
    }
}

fn sign_of(ctx: &QSeriesContext, z: &Float) -> Result<(i32, Float)> {
    let v = phi11_mp(ctx, z)?.value;
    let s = if v.is_zero() {
        0
    } else if v.is_sign_negative() {
        -1
    } else {
        1
    };
    Ok((s, v))
}

/// Locates root `n` by bisection on its bracket.
pub fn find_root(ctx: &QSeriesContext, rule: BracketRule, n: usize) -> Result<(RootEntry, Float)> {
    let (lo_f, hi_f) = bracket(ctx, rule, n);
    // near Q^n the root sits within about Q^(-n^2/2) of the bracket end
    let extra = (n * n) as f64 * ctx.big_q().log2() / 2.0 + 32.0;
    let prec = precision_for(ctx.q, hi_f) + extra.ceil() as u32;
    let (mut lo, mut hi) = bracket_mp(ctx, rule, n, prec);
    // for large n the bracket is narrower than an f64 ulp, so test it here
    if !(hi > lo) || !hi.is_sign_positive() {
        return Err(Error::BracketFailure {
            n,
            lo: lo_f,
            hi: hi_f,
        });
    }
    let (s_lo, _) = sign_of(ctx, &lo)?;
    let (s_hi, _) = sign_of(ctx, &hi)?;
    if s_lo == 0 {
        hi = lo.clone();
    } else if s_hi == 0 {
        lo = hi.clone();
    } else if s_lo == s_hi {
        return Err(Error::BracketFailure {
            n,
            lo: lo_f,
            hi: hi_f,
        });
    }
    let mut steps = 0usize;
    let max_steps = prec as usize + 64;
    let (root, residual) = loop {
        let mid = Float::with_val(prec, &lo + &hi) / 2u32;
        let (s_mid, v_mid) = sign_of(ctx, &mid)?;
        let width = Float::with_val(prec, &hi - &lo).to_f64();
        let res = v_mid.to_f64().abs();
        // bisect to the working precision: the eigenvector recurrence
        // amplifies any root error
        let exhausted = mid == lo || mid == hi || width <= mid.to_f64() * 2f64.powi(8 - prec as i32);
        if s_mid == 0 || (exhausted && res < ctx.target_tol) {
            break (mid, res);
        }
        if steps >= max_steps || exhausted {
            return Err(Error::NotConverged(format!(
                "bisection for root {n} stalled with residual {res:.3e}"
            )));
        }
        if s_mid == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    };
    Ok((
        RootEntry {
            n,
            value: root.to_f64(),
            residual,
            bracket_lo: lo_f,
            bracket_hi: hi_f,
            precision_bits: prec,
            bisection_steps: steps,
        },
        root,
    ))
}

/// The first `n_roots` roots, each bracketed by `rule`. A bracket without a
/// sign change is reported as [`Error::BracketFailure`].
pub fn find_roots(ctx: &QSeriesContext, n_roots: usize, rule: BracketRule) -> Result<RootTable> {
    let mut entries = Vec::with_capacity(n_roots);
    let mut precise = Vec::with_capacity(n_roots);
    for n in 0..n_roots {
        let (e, r) = find_root(ctx, rule, n)?;
        if let Some(prev) = entries.last().map(|p: &RootEntry| p.value) {
            if !(e.value > prev) {
                return Err(Error::NotConverged(format!(
                    "roots {} and {n} are not increasing",
                    n - 1
                )));
            }
        }
        entries.push(e);
        precise.push(r);
    }
    Ok(RootTable {
        q: ctx.q,
        rule,
        entries,
        precise,
        ctx: Some(*ctx),
    })
}

/// Roots for a field, bracketed by the rule that encloses them.
pub fn roots_for(params: &FieldParams, n_roots: usize) -> Result<RootTable> {
    find_roots(&QSeriesContext::from_params(params), n_roots, BracketRule::InverseQ)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceResult {
    /// `phi(0), .., phi(L-1)` with `phi(0) = 1`.
    pub values: Vec<f64>,
    /// `sum_{l > L/2} phi(l)^2`.
    pub tail_mass: f64,
}

fn recurrence_mp(ctx: &QSeriesContext, lambda: &Float, len: usize) -> Result<Vec<Float>> {
    if len < 2 {
        return Err(Error::InvalidArgument("recurrence needs L >= 2".into()));
    }
    let prec = lambda.prec() + 64;
    let big_q = ctx.mp_big_q(prec);
    let one_plus_q = Float::with_val(prec, &big_q + 1u32);
    let mut out = vec![Float::with_val(prec, 1)];
    let mut first = Float::with_val(prec, 1);
    first -= lambda;
    out.push(first);
    let mut qpow = Float::with_val(prec, 1); // Q^-(l-1)
    for l in 1..len - 1 {
        // phi(l+1) = [(1+Q) phi(l) - phi(l-1) - lambda Q^-(l-1) phi(l)] / Q
        let mut next = Float::with_val(prec, &one_plus_q * &out[l]);
        next -= &out[l - 1];
        let mut t = Float::with_val(prec, lambda * &qpow);
        t *= &out[l];
        next -= &t;
        next /= &big_q;
        out.push(next);
        qpow /= &big_q;
    }
    Ok(out)
}

fn working_lambda(ctx: &QSeriesContext, lambda: f64) -> Float {
    let lq = lambda.abs().max(1.0).log2() / ctx.big_q().log2();
    let bits = 256.0 + 2.0 * lq * lq * ctx.big_q().log2();
    Float::with_val(bits.ceil() as u32, lambda)
}

fn tail_mass(values: &[Float]) -> f64 {
    let len = values.len();
    values[(len / 2 + 1).min(len)..]
        .iter()
        .map(|v| {
            let f = v.to_f64();
            f * f
        })
        .sum()
}

/// Forward propagation of the radial eigenvalue equation from
/// `phi(0) = 1`, `phi(1) = 1 - lambda`, treating `lambda` as exact.
pub fn eigvec_recurrence(ctx: &QSeriesContext, lambda: f64, len: usize) -> Result<RecurrenceResult> {
    eigvec_recurrence_mp(ctx, &working_lambda(ctx, lambda), len)
}

/// As [`eigvec_recurrence`] for a multi-precision `lambda`.
pub fn eigvec_recurrence_mp(ctx: &QSeriesContext, lambda: &Float, len: usize) -> Result<RecurrenceResult> {
    let v = recurrence_mp(ctx, lambda, len)?;
    Ok(RecurrenceResult {
        tail_mass: tail_mass(&v),
        values: v.iter().map(|x| x.to_f64()).collect(),
    })
}

/// Eigenvector series coefficients `c(2), c(4), .., c(2K)`:
/// `c(2k) = (-lambda / (1 - Q^-1))^(k-1) c(2) Q^(k(k-1)/2) (Q - 1)^(k-2)
///   / [(Q^2-1)^2 .. (Q^(k-1)-1)^2 (Q^k - 1)]` for `k >= 2`.
pub fn eigvec_series_c_mp(ctx: &QSeriesContext, lambda: &Float, k_max: usize, c2: &Float) -> Vec<Float> {
    let prec = lambda.prec().max(c2.prec()) + 64;
    let big_q = ctx.mp_big_q(prec);
    let one = Float::with_val(prec, 1);
    let mut ratio = Float::with_val(prec, &one / &big_q);
    ratio = Float::with_val(prec, &one - &ratio);
    let base = -Float::with_val(prec, lambda / &ratio); // -lambda / (1 - 1/Q)
    let qm1 = Float::with_val(prec, &big_q - 1u32);
    let mut out = Vec::with_capacity(k_max);
    if k_max >= 1 {
        out.push(Float::with_val(prec, c2));
    }
    // running product of (Q^j - 1)^2 for j = 2 .. k-1
    let mut sq_prod = Float::with_val(prec, 1);
    for k in 2..=k_max {
        let qk = Float::with_val(prec, (&big_q).pow(k as u32));
        let qk_m1 = Float::with_val(prec, &qk - 1u32);
        let mut c = Float::with_val(prec, (&base).pow((k - 1) as u32));
        c *= c2;
        c *= Float::with_val(prec, (&big_q).pow((k * (k - 1) / 2) as u32));
        c *= Float::with_val(prec, (&qm1).pow((k - 2) as u32));
        c /= &sq_prod;
        c /= &qk_m1;
        out.push(c);
        sq_prod *= Float::with_val(prec, (&qk_m1).square_ref());
    }
    out
}

/// Double-precision view of [`eigvec_series_c_mp`] for an exact `lambda`.
pub fn eigvec_series_c(ctx: &QSeriesContext, lambda: f64, k_max: usize, c2: f64) -> Vec<f64> {
    let lam = working_lambda(ctx, lambda);
    let c2 = Float::with_val(lam.prec(), c2);
    eigvec_series_c_mp(ctx, &lam, k_max, &c2)
        .iter()
        .map(|c| c.to_f64())
        .collect()
}

/// `phi(l) = sum_k c(2k) Q^(-l k)` from series coefficients.
fn series_value(ctx: &QSeriesContext, coeffs: &[Float], l: usize) -> Float {
    let prec = coeffs[0].prec();
    let big_q = ctx.mp_big_q(prec);
    let step = Float::with_val(prec, (&big_q).pow(l as u32)).recip();
    let mut pow = step.clone();
    let mut acc = Float::with_val(prec, 0);
    for c in coeffs {
        acc += Float::with_val(prec, c * &pow);
        pow *= &step;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCheck {
    pub n: usize,
    pub lambda: f64,
    pub tail_mass: f64,
    /// `c(2)` that makes the series reproduce `phi(1)` of the recurrence.
    pub c2: f64,
    /// `max_{l <= l_max} |series(l) - recurrence(l)| / |recurrence(l)|`.
    pub max_rel_mismatch: f64,
    pub recurrence: Vec<f64>,
    pub series: Vec<f64>,
}

/// Builds the eigenvector of root `n` both ways: by forward recurrence over
/// `len` levels and by the series with `k_max` coefficients, normalised so
/// that the two agree at `l = 1`.
pub fn dual_construction(table: &RootTable, n: usize, len: usize, k_max: usize, l_max: usize) -> Result<DualCheck> {
    let ctx = table
        .context()
        .ok_or_else(|| Error::InvalidArgument("root table has no multi-precision data".into()))?;
    let lambda = table
        .precise(n)
        .ok_or_else(|| Error::InvalidArgument(format!("root {n} not in table")))?;
    let rec = recurrence_mp(ctx, lambda, len.max(l_max + 2))?;
    let prec = rec[0].prec();
    let unit = Float::with_val(prec, 1);
    let shape = eigvec_series_c_mp(ctx, &Float::with_val(prec, lambda), k_max, &unit);
    let at1 = series_value(ctx, &shape, 1);
    let c2 = Float::with_val(prec, &rec[1] / &at1);
    let coeffs: Vec<Float> = shape.iter().map(|c| Float::with_val(prec, c * &c2)).collect();
    let mut worst = 0.0f64;
    let mut series = Vec::new();
    for (l, r) in rec.iter().enumerate().take(l_max + 1) {
        let s = series_value(ctx, &coeffs, l);
        let diff = Float::with_val(prec, &s - r).abs();
        let rel = Float::with_val(prec, &diff / r.clone().abs()).to_f64();
        worst = worst.max(rel);
        series.push(s.to_f64());
    }
    Ok(DualCheck {
        n,
        lambda: lambda.to_f64(),
        tail_mass: tail_mass(&rec[..len]),
        c2: c2.to_f64(),
        max_rel_mismatch: worst,
        recurrence: rec[..len].iter().map(|x| x.to_f64()).collect(),
        series,
    })
}
