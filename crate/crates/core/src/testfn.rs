//! Test functions on `R` and `F` together with a small library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Center, FieldParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionKind {
    Constant(f64),
    /// `|x|`.
    Norm,
    /// `|x - c|`.
    DistanceTo(Center),
    /// Indicator of the ball `c + pi^depth(c) R`.
    BallIndicator(Center),
    /// Constant on the balls of level `depth`; `values` is indexed by the
    /// digit prefix `d_start .. d_{depth-1}` read in base `p^f`.
    LocallyConstant {
        start: i64,
        depth: i64,
        values: Vec<f64>,
    },
    /// `1 / (1 + |x|^alpha)`.
    Decay { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub kind: FunctionKind,
    /// Exact Lipschitz seminorm on `R`, when known.
    pub known_lipschitz: Option<f64>,
    /// Decay exponent and constant: `|a(x)| <= C / (1 + |x|^alpha)`.
    pub decay_alpha: Option<f64>,
    pub decay_constant: Option<f64>,
    /// RNG seed for randomly generated functions.
    pub seed: Option<u64>,
}

impl TestFunction {
    fn plain(id: impl Into<String>, kind: FunctionKind, lipschitz: Option<f64>) -> Self {
        Self {
            id: id.into(),
            kind,
            known_lipschitz: lipschitz,
            decay_alpha: None,
            decay_constant: None,
            seed: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::plain(format!("const({c})"), FunctionKind::Constant(c), Some(0.0))
    }

    pub fn norm() -> Self {
        Self::plain("norm", FunctionKind::Norm, Some(1.0))
    }

    pub fn distance_to(c: Center) -> Self {
        let id = format!("dist{:?}@{}", c.digits(), c.start());
        Self::plain(id, FunctionKind::DistanceTo(c), Some(1.0))
    }

    /// Indicator of a ball in `R`. Its Lipschitz seminorm is the inverse of
    /// the distance from the ball to its complement, `p^((depth-1)/e)`.
    pub fn ball_indicator(params: &FieldParams, c: Center) -> Self {
        let lip = if c.depth() <= c.start() {
            0.0
        } else {
            params.pow_e(c.depth() - 1)
        };
        let id = format!("ball{:?}@{}", c.digits(), c.start());
        Self::plain(id, FunctionKind::BallIndicator(c), Some(lip))
    }

    /// Random values in `[-1, 1]` on the level-`depth` balls of `R`.
    pub fn random_locally_constant(params: &FieldParams, depth: u32, seed: u64) -> Self {
        let q = params.q_res() as usize;
        let len = q.pow(depth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let lip = locally_constant_lipschitz(params, q, depth as usize, &values);
        Self {
            id: format!("random(depth={depth},seed={seed})"),
            kind: FunctionKind::LocallyConstant {
                start: 0,
                depth: depth as i64,
                values,
            },
            known_lipschitz: Some(lip),
            decay_alpha: None,
            decay_constant: None,
            seed: Some(seed),
        }
    }

    /// `1 / (1 + |x|^alpha)`; the recorded Lipschitz seminorm is the one on `R`.
    pub fn decay(params: &FieldParams, alpha: f64) -> Self {
        // On R the sup is attained against y = 0: t^(alpha-1) / (1 + t^alpha), t = p^(-l/e).
        let lip = (0..400)
            .map(|l| {
                let t = params.pow_e(-l);
                t.powf(alpha - 1.0) / (1.0 + t.powf(alpha))
            })
            .fold(0.0, f64::max);
        Self {
            id: format!("decay(alpha={alpha})"),
            kind: FunctionKind::Decay { alpha },
            known_lipschitz: Some(lip),
            decay_alpha: Some(alpha),
            decay_constant: Some(1.0),
            seed: None,
        }
    }

    pub fn eval(&self, params: &FieldParams, x: &Center) -> f64 {
        match &self.kind {
            FunctionKind::Constant(c) => *c,
            FunctionKind::Norm => x.norm(params),
            FunctionKind::DistanceTo(c) => x.point_distance(c, params),
            FunctionKind::BallIndicator(c) => {
                let inside = (c.start()..c.depth()).all(|i| x.digit_at(i) == c.digit_at(i));
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionKind::LocallyConstant {
                start,
                depth,
                values,
            } => {
                let q = params.q_res() as usize;
                let idx = (*start..*depth).fold(0usize, |acc, i| acc * q + x.digit_at(i) as usize);
                values[idx]
            }
            FunctionKind::Decay { alpha } => 1.0 / (1.0 + x.norm(params).powf(*alpha)),
        }
    }

    /// Checks the decay hypothesis `alpha > 1`, `alpha > ef/2` needed for the
    /// compactness of `rho(a) D^-1` on `F`.
    pub fn check_admissible(&self, params: &FieldParams) -> Result<f64> {
        let alpha = self.decay_alpha.ok_or_else(|| Error::Inadmissible {
            id: self.id.clone(),
            reason: "no decay exponent".into(),
        })?;
        let need = f64::max(1.0, params.degree() as f64 / 2.0);
        if alpha > need {
            Ok(alpha)
        } else {
            Err(Error::Inadmissible {
                id: self.id.clone(),
                reason: format!("alpha = {alpha} is not above max(1, ef/2) = {need}"),
            })
        }
    }
}

fn locally_constant_lipschitz(params: &FieldParams, q: usize, depth: usize, values: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            // first differing digit, most significant first
            let mut l = 0;
            let mut span = values.len() / q.max(1);
            while span > 0 && i / span == j / span {
                l += 1;
                span /= q;
            }
            debug_assert!(l < depth);
            let ratio = (values[i] - values[j]).abs() * params.pow_e(l as i64);
            best = best.max(ratio);
        }
    }
    best
}

/// The default library: constants, norms, distances, ball indicators,
/// random locally constant functions and decaying functions.
pub fn library(params: &FieldParams) -> Vec<TestFunction> {
    library_with_seed(params, 7)
}

/// [`library`] with the random members drawn from `seed` and `seed + 4`.
pub fn library_with_seed(params: &FieldParams, seed: u64) -> Vec<TestFunction> {
    let q1 = (params.q_res() - 1) as u32;
    let ring = |d: Vec<u32>| Center::ring(params, d).expect("digits below p^f");
    vec![
        TestFunction::constant(1.5),
        TestFunction::norm(),
        TestFunction::distance_to(ring(vec![1])),
        TestFunction::distance_to(ring(vec![0, 1])),
        TestFunction::distance_to(ring(vec![q1, 0, 1])),
        TestFunction::ball_indicator(params, ring(vec![1])),
        TestFunction::ball_indicator(params, ring(vec![0, 1])),
        TestFunction::ball_indicator(params, ring(vec![1, 0, q1])),
        TestFunction::random_locally_constant(params, 3, seed),
        TestFunction::random_locally_constant(params, 4, seed.wrapping_add(4)),
        TestFunction::decay(params, 2.5),
        TestFunction::decay(params, params.degree() as f64),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(p: u32, e: u32, f: u32) -> FieldParams {
        FieldParams::new(p, e, f).unwrap()
    }

    #[test]
    fn library_contract() {
        for params in [fp(2, 1, 1), fp(3, 1, 1), fp(2, 2, 1), fp(2, 1, 2)] {
            let lib = library(&params);
            assert!(lib.len() >= 10);
            assert!(lib[10].check_admissible(&params).is_ok());
            let ids: std::collections::HashSet<_> = lib.iter().map(|a| a.id.clone()).collect();
            assert_eq!(ids.len(), lib.len());
        }
        let p = fp(2, 1, 1);
        assert!(library(&p)[11].check_admissible(&p).is_err());
        let p = fp(2, 1, 3);
        assert!(library(&p)[11].check_admissible(&p).is_ok());
        assert!(TestFunction::constant(1.0).check_admissible(&p).is_err());
    }

    #[test]
    fn indicator_lipschitz_example() {
        let p = fp(2, 1, 1);
        let a = TestFunction::ball_indicator(&p, Center::ring(&p, vec![0, 1]).unwrap());
        assert_eq!(a.known_lipschitz, Some(2.0));
        let inside = Center::ring(&p, vec![0, 1, 1, 0]).unwrap();
        let outside = Center::ring(&p, vec![0, 0, 1, 0]).unwrap();
        assert_eq!(a.eval(&p, &inside), 1.0);
        assert_eq!(a.eval(&p, &outside), 0.0);
    }

    #[test]
    fn decay_lipschitz_on_ring() {
        let p = fp(2, 1, 1);
        let a = TestFunction::decay(&p, 2.0);
        assert_eq!(a.known_lipschitz, Some(0.5));
        assert_eq!(a.eval(&p, &Center::zero(0, 3)), 1.0);
    }

    #[test]
    fn random_functions_are_reproducible() {
        let p = fp(3, 1, 1);
        let a = TestFunction::random_locally_constant(&p, 3, 5);
        let b = TestFunction::random_locally_constant(&p, 3, 5);
        let c = TestFunction::random_locally_constant(&p, 3, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn locally_constant_lipschitz_brute_force() {
        // compare with a direct sup over points at depth 3
        let p = fp(2, 2, 1);
        let a = TestFunction::random_locally_constant(&p, 3, 3);
        let pts: Vec<Center> = (0..8u32)
            .map(|i| Center::ring(&p, vec![(i >> 2) & 1, (i >> 1) & 1, i & 1]).unwrap())
            .collect();
        let mut best = 0.0f64;
        for x in &pts {
            for y in &pts {
                if x != y {
                    let r = (a.eval(&p, x) - a.eval(&p, y)).abs() / x.point_distance(y, &p);
                    best = best.max(r);
                }
            }
        }
        assert!((best - a.known_lipschitz.unwrap()).abs() < 1e-12);
    }
}
