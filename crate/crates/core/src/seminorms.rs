//! Lipschitz and spectral seminorms on a window, and their comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Center, FieldParams};
use crate::operators::{self, rho_values};
use crate::testfn::TestFunction;
use crate::tree::TreeWindow;

/// `((p^(1/e) - 1) / (2 p^(1/e) sqrt(p^f)), sqrt((p^f - 1) / p^f))`.
pub fn comparison_constants(params: &FieldParams) -> (f64, f64) {
    let beta = params.beta();
    let q = params.q_res() as f64;
    ((beta - 1.0) / (2.0 * beta * q.sqrt()), ((q - 1.0) / q).sqrt())
}

/// Sup of `|a(x) - a(y)| / |x - y|` over distinct points of the window: all
/// centers of the deepest level `N` together with `pi^N`.
///
/// Points are grouped by the ball in which they first separate, so the sup
/// is found from subtree maxima and minima in one bottom-up pass.
pub fn lipschitz_depth(window: &TreeWindow, a: &TestFunction) -> f64 {
    let params = window.params();
    let depth = window.max_level();
    let q = window.branching();
    let leaves = window.level_range(depth);
    let mut mx = Vec::with_capacity(leaves.len());
    let mut mn = Vec::with_capacity(leaves.len());
    for v in leaves {
        let y = a.eval(params, &window.center_of(v));
        mx.push(y);
        mn.push(y);
    }
    // the zero leaf also contains pi^N, at distance p^(-N/e) from 0
    let pi_n = a.eval(params, &Center::pi_power(window.min_level(), depth));
    let mut best = (mx[0] - pi_n).abs() * params.pow_e(depth);
    mx[0] = mx[0].max(pi_n);
    mn[0] = mn[0].min(pi_n);
    for n in (window.min_level()..depth).rev() {
        let scale = params.pow_e(n);
        let size = window.level_size(n);
        let mut nmx = Vec::with_capacity(size);
        let mut nmn = Vec::with_capacity(size);
        for i in 0..size {
            let cmx = &mx[i * q..(i + 1) * q];
            let cmn = &mn[i * q..(i + 1) * q];
            for s in 0..q {
                for t in 0..q {
                    if s != t {
                        best = best.max((cmx[s] - cmn[t]) * scale);
                    }
                }
            }
            nmx.push(cmx.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            nmn.push(cmn.iter().copied().fold(f64::INFINITY, f64::min));
        }
        mx = nmx;
        mn = nmn;
    }
    best
}

/// Per-level ingredients shared by the two spectral formulas.
struct LevelTerms {
    /// `(1/p^f) sum_i |a(x) - a(x + s_i pi^n)|^2 p^(2n/e)`, maxed over `x != 0`.
    nonzero: f64,
    /// `|a(pi^n) - a(pi^(n+1))|^2 p^(2n/e)`.
    radial: f64,
    /// `sum_i |a(pi^n) - a(s_i pi^n)|^2 p^(2n/e)`.
    zero_children: f64,
}

fn level_terms(window: &TreeWindow, a: &TestFunction) -> Vec<LevelTerms> {
    let params = window.params();
    let r = rho_values(window, a);
    let q = window.branching() as f64;
    let mut out = Vec::new();
    for n in window.min_level()..window.max_level() {
        let big = params.pow_e(2 * n);
        let mut nonzero = 0.0f64;
        for v in window.level_range(n).skip(1) {
            let s: f64 = window.children(v).map(|c| (r[v] - r[c]).powi(2)).sum();
            nonzero = nonzero.max(s * big / q);
        }
        let z = window.zero_vertex(n);
        let mut ch = window.children(z);
        let z_child = ch.next().unwrap();
        let radial = (r[z] - r[z_child]).powi(2) * big;
        let zero_children = ch.map(|c| (r[z] - r[c]).powi(2)).sum::<f64>() * big;
        out.push(LevelTerms {
            nonzero,
            radial,
            zero_children,
        });
    }
    out
}

/// The sup formula for the spectral seminorm on the window, taken term by
/// term: the max over `n <= N-1` of the three families
/// `(1/p^f) sum_i |a(x) - a(x + s_i pi^n)|^2 p^(2n/e)` (`x != 0`),
/// `(1/p^f) sum_i |a(pi^n) - a(pi^(n+1))|^2 p^(2n/e)` (summand independent of `i`),
/// `(1/p^f) sum_i |a(pi^n) - a(s_i pi^n)|^2 p^(2n/e)`, then a square root.
pub fn spectral_seminorm_formula(window: &TreeWindow, a: &TestFunction) -> f64 {
    let q = window.branching() as f64;
    level_terms(window, a)
        .iter()
        .map(|t| {
            t.nonzero
                .max((q - 1.0) / q * t.radial)
                .max(t.zero_children / q)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// The largest row norm of `[D, rho(a)]`. At the zero vertex the radial and
/// sibling differences add up in a single row rather than competing.
pub fn spectral_seminorm_rows(window: &TreeWindow, a: &TestFunction) -> f64 {
    let q = window.branching() as f64;
    level_terms(window, a)
        .iter()
        .map(|t| t.nonzero.max((t.radial + t.zero_children) / q))
        .fold(0.0, f64::max)
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub id: String,
    pub depth: i64,
    pub l1: f64,
    pub ld_formula: f64,
    pub ld_rows: f64,
    pub commutator_norm: f64,
    pub lower_constant: f64,
    pub upper_constant: f64,
    /// `lower * L1 <= ld_formula`.
    pub lower_ok: bool,
    /// `ld_formula <= upper * L1`.
    pub upper_ok: bool,
    /// The same two inequalities for the commutator norm.
    pub commutator_lower_ok: bool,
    pub commutator_upper_ok: bool,
    /// `|ld_formula - commutator_norm|`.
    pub formula_gap: f64,
    pub rows_gap: f64,
}

impl SeminormReport {
    pub fn sandwich_ok(&self) -> bool {
        self.lower_ok && self.upper_ok && self.commutator_lower_ok && self.commutator_upper_ok
    }
}

const SLACK: f64 = 1e-12;

fn within(lo: f64, x: f64, hi: f64) -> (bool, bool) {
    (lo <= x * (1.0 + SLACK) + SLACK, x <= hi * (1.0 + SLACK) + SLACK)
}

/// All depth-`N` seminorm quantities of `a` and both comparison inequalities.
pub fn seminorm_report(window: &TreeWindow, a: &TestFunction) -> Result<SeminormReport> {
    let (lower, upper) = comparison_constants(window.params());
    let l1 = lipschitz_depth(window, a);
    let ld_formula = spectral_seminorm_formula(window, a);
    let ld_rows = spectral_seminorm_rows(window, a);
    let commutator_norm = operators::commutator_norm(window, a)?;
    let (lower_ok, upper_ok) = within(lower * l1, ld_formula, upper * l1);
    let (commutator_lower_ok, commutator_upper_ok) = within(lower * l1, commutator_norm, upper * l1);
    Ok(SeminormReport {
        id: a.id.clone(),
        depth: window.max_level(),
        l1,
        ld_formula,
        ld_rows,
        commutator_norm,
        lower_constant: lower,
        upper_constant: upper,
        lower_ok,
        upper_ok,
        commutator_lower_ok,
        commutator_upper_ok,
        formula_gap: (ld_formula - commutator_norm).abs(),
        rows_gap: (ld_rows - commutator_norm).abs(),
    })
}

/// As [`seminorm_report`], but a violated inequality is an error.
pub fn check_norm_comparison(window: &TreeWindow, a: &TestFunction) -> Result<SeminormReport> {
    let r = seminorm_report(window, a)?;
    if !r.sandwich_ok() {
        return Err(Error::SeminormViolation {
            id: r.id.clone(),
            detail: format!(
                "{:.6e} * {:.6e} <= L_D = {:.6e} (commutator {:.6e}) <= {:.6e} * {:.6e}",
                r.lower_constant, r.l1, r.ld_formula, r.commutator_norm, r.upper_constant, r.l1
            ),
        });
    }
    Ok(r)
}
