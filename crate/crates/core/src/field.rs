//! Digit-string model of the ring of integers `R` and the field `F`.
//!
//! An element is a finite digit string `(d_k0, .., d_{n-1})` over the
//! alphabet `{0, .., p^f - 1}` read as `sum d_i pi^i`. Digit `0` is the zero
//! representative and digit `1` the representative of the unit `1`, so the
//! uniformizer power `pi^n` is the string with a single `1` at index `n`.
//! Only prefixes and valuations are ever needed, so no carrying arithmetic is
//! implemented.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The triple `(p, e, f)` of a finite extension of `Q_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldParams {
    p: u32,
    e: u32,
    f: u32,
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl FieldParams {
    pub fn new(p: u32, e: u32, f: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidParams(format!("p = {p} is not prime")));
        }
        if e == 0 {
            return Err(Error::InvalidParams("e must be at least 1".into()));
        }
        if f == 0 {
            return Err(Error::InvalidParams("f must be at least 1".into()));
        }
        if (p as u64).checked_pow(f).map_or(true, |v| v > u32::MAX as u64) {
            return Err(Error::InvalidParams(format!(
                "alphabet size {p}^{f} does not fit in 32 bits"
            )));
        }
        Ok(Self { p, e, f })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn e(&self) -> u32 {
        self.e
    }

    pub fn f(&self) -> u32 {
        self.f
    }

    /// Size `p^f` of the digit alphabet (the residue field).
    pub fn q_res(&self) -> u64 {
        (self.p as u64).pow(self.f)
    }

    /// `ef`, the degree of `F` over `Q_p`.
    pub fn degree(&self) -> u32 {
        self.e * self.f
    }

    /// `p^(k/e)`, evaluated from the exact pair `(k, e)`.
    ///
    /// The integer part of the exponent goes through `powi`, so for `e = 1`
    /// the result is exact whenever `p^k` is representable.
    pub fn pow_e(&self, k: i64) -> f64 {
        let e = self.e as i64;
        let whole = k.div_euclid(e);
        let rem = k.rem_euclid(e);
        let base = self.p as f64;
        let mut v = base.powi(whole as i32);
        if rem != 0 {
            v *= base.powf(rem as f64 / e as f64);
        }
        v
    }

    /// Norm base `p^(1/e)` (the inverse of `|pi|`).
    pub fn beta(&self) -> f64 {
        self.pow_e(1)
    }

    /// `q = p^(-2/e)`, the base of the q-hypergeometric function.
    pub fn q(&self) -> f64 {
        self.pow_e(-2)
    }

    /// `1/q = p^(2/e)`, the level-to-level growth of `D*D`.
    pub fn q_inv(&self) -> f64 {
        self.pow_e(2)
    }

    /// `p^(k f)`.
    pub fn pow_f(&self, k: i64) -> f64 {
        (self.p as f64).powi((k * self.f as i64) as i32)
    }
}

/// Exact valuation of an element: `|x| = p^(-l/e)`, or zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Valuation {
    Zero,
    Finite(i64),
}

impl Valuation {
    pub fn norm(self, params: &FieldParams) -> f64 {
        match self {
            Valuation::Zero => 0.0,
            Valuation::Finite(l) => params.pow_e(-l),
        }
    }
}

/// Preferred center of a ball: digits `d_start, .., d_{depth-1}`.
///
/// The ball is `center + pi^depth R`; its radius is `p^(-depth/e)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Center {
    start: i64,
    digits: Vec<u32>,
}

impl Center {
    pub fn new(params: &FieldParams, start: i64, digits: Vec<u32>) -> Result<Self> {
        let q_res = params.q_res();
        if let Some(&bad) = digits.iter().find(|&&d| d as u64 >= q_res) {
            return Err(Error::DigitOutOfRange { digit: bad, q_res });
        }
        Ok(Self { start, digits })
    }

    /// Center of a ball in `R` (start index 0).
    pub fn ring(params: &FieldParams, digits: Vec<u32>) -> Result<Self> {
        Self::new(params, 0, digits)
    }

    pub(crate) fn from_parts_unchecked(start: i64, digits: Vec<u32>) -> Self {
        Self { start, digits }
    }

    pub fn zero(start: i64, depth: i64) -> Self {
        let len = (depth - start).max(0) as usize;
        Self {
            start,
            digits: vec![0; len],
        }
    }

    /// `pi^n` written as a string starting at `start`, with depth `n + 1`.
    pub fn pi_power(start: i64, n: i64) -> Self {
        assert!(n >= start, "pi^{n} is not representable from index {start}");
        let mut digits = vec![0; (n - start + 1) as usize];
        *digits.last_mut().unwrap() = 1;
        Self { start, digits }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn depth(&self) -> i64 {
        self.start + self.digits.len() as i64
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    /// Digit at index `i`, treating the string as a point with a zero tail.
    pub fn digit_at(&self, i: i64) -> u32 {
        if i < self.start || i >= self.depth() {
            0
        } else {
            self.digits[(i - self.start) as usize]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.digits.iter().all(|&d| d == 0)
    }

    pub fn valuation(&self) -> Valuation {
        match self.digits.iter().position(|&d| d != 0) {
            Some(i) => Valuation::Finite(self.start + i as i64),
            None => Valuation::Zero,
        }
    }

    pub fn norm(&self, params: &FieldParams) -> f64 {
        self.valuation().norm(params)
    }

    /// Index of the first disagreeing digit between the two points.
    pub(crate) fn first_difference(&self, other: &Center) -> Option<i64> {
        let lo = self.start.min(other.start);
        let hi = self.depth().max(other.depth());
        (lo..hi).find(|&i| self.digit_at(i) != other.digit_at(i))
    }

    /// Ultrametric distance between the points represented by two centers,
    /// which may have different starts and depths.
    pub fn point_distance(&self, other: &Center, params: &FieldParams) -> f64 {
        match self.first_difference(other) {
            Some(l) => params.pow_e(-l),
            None => 0.0,
        }
    }

    /// Center one level deeper, extending by digit `s`.
    pub fn child(&self, s: u32) -> Center {
        let mut digits = self.digits.clone();
        digits.push(s);
        Center {
            start: self.start,
            digits,
        }
    }

    /// The same point written at a larger depth.
    pub fn padded(&self, depth: i64) -> Center {
        let mut digits = self.digits.clone();
        if depth > self.depth() {
            digits.resize((depth - self.start) as usize, 0);
        }
        Center {
            start: self.start,
            digits,
        }
    }
}

/// `|c|`: zero for the zero string, otherwise `p^(-l/e)` with `l` the index of
/// the first nonzero digit.
pub fn norm(params: &FieldParams, c: &Center) -> f64 {
    c.norm(params)
}

/// Ultrametric distance between two centers of the same start and depth.
pub fn dist(params: &FieldParams, x: &Center, y: &Center) -> Result<f64> {
    if x.start != y.start || x.depth() != y.depth() {
        return Err(Error::CenterMismatch(format!(
            "start/depth ({}, {}) vs ({}, {})",
            x.start,
            x.depth(),
            y.start,
            y.depth()
        )));
    }
    Ok(x.point_distance(y, params))
}

/// The `(l, g)` coordinates of a vertex `(n, x)` of the `R` tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LgCoords {
    pub l: u32,
    /// `|g| = p^(m/e)`.
    pub m: u32,
    /// Digits `x_l, .., x_{n-1}`; leading digit nonzero, empty iff `g = 0`.
    pub g_tail: Vec<u32>,
}

/// `(n, x) -> (l, g)`: `l` is the valuation of `x` and `g = x / pi^n`.
pub fn to_lg(x: &Center) -> Result<LgCoords> {
    if x.start != 0 {
        return Err(Error::CenterMismatch(format!(
            "(l, g) coordinates need an R-center, got start {}",
            x.start
        )));
    }
    let n = x.digits.len();
    Ok(match x.digits.iter().position(|&d| d != 0) {
        None => LgCoords {
            l: n as u32,
            m: 0,
            g_tail: Vec::new(),
        },
        Some(l) => LgCoords {
            l: l as u32,
            m: (n - l) as u32,
            g_tail: x.digits[l..].to_vec(),
        },
    })
}

/// Inverse of [`to_lg`]: the vertex at depth `l + m`.
pub fn from_lg(params: &FieldParams, lg: &LgCoords) -> Result<Center> {
    if lg.g_tail.len() != lg.m as usize {
        return Err(Error::InvalidArgument(format!(
            "tail of length {} does not match m = {}",
            lg.g_tail.len(),
            lg.m
        )));
    }
    if lg.g_tail.first() == Some(&0) {
        return Err(Error::InvalidArgument("leading digit of g must be nonzero".into()));
    }
    let mut digits = vec![0; lg.l as usize];
    digits.extend_from_slice(&lg.g_tail);
    Center::ring(params, digits)
}

/// Number of `g in F/R` with `|g| = p^(m/e)`.
/// Saturates at `u64::MAX`; see [`count_g_checked`].
pub fn count_g(params: &FieldParams, m: u32) -> u64 {
    count_g_checked(params, m).unwrap_or(u64::MAX)
}

/// `None` when the count does not fit in a `u64`.
pub fn count_g_checked(params: &FieldParams, m: u32) -> Option<u64> {
    if m == 0 {
        Some(1)
    } else {
        let q = params.q_res();
        Some(q.checked_pow(m)? - q.pow(m - 1))
    }
}

/// [`count_g`] in floating point, `p^(mf) (1 - p^-f)` for `m >= 1`.
pub fn count_g_f64(params: &FieldParams, m: u32) -> f64 {
    if m == 0 {
        1.0
    } else {
        let q = params.q_res() as f64;
        q.powi(m as i32) * (1.0 - 1.0 / q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(p: u32, e: u32, f: u32) -> FieldParams {
        FieldParams::new(p, e, f).unwrap()
    }

    /// Every digit string of length `n` over an alphabet of size `q`.
    fn all_strings(q: u32, n: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new()];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|s| {
                    (0..q).map(move |d| {
                        let mut t = s.clone();
                        t.push(d);
                        t
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn rejects_bad_params() {
        assert!(FieldParams::new(4, 1, 1).is_err());
        assert!(FieldParams::new(2, 0, 1).is_err());
        assert!(FieldParams::new(2, 1, 0).is_err());
        assert!(FieldParams::new(1, 1, 1).is_err());
        let fp = params(3, 2, 2);
        assert_eq!(fp.q_res(), 9);
        assert_relative_eq!(fp.beta(), 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(fp.q(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn norm_examples() {
        let fp = params(2, 1, 1);
        let c = Center::ring(&fp, vec![0, 1, 0]).unwrap();
        assert_eq!(norm(&fp, &c), 0.5);
        assert_eq!(norm(&fp, &Center::zero(0, 5)), 0.0);
        let fp = params(2, 2, 1);
        let c = Center::ring(&fp, vec![0, 1]).unwrap();
        assert_relative_eq!(norm(&fp, &c), 2f64.powf(-0.5), max_relative = 1e-15);
    }

    #[test]
    fn dist_examples() {
        let fp = params(3, 1, 1);
        let x = Center::ring(&fp, vec![1, 0]).unwrap();
        let y = Center::ring(&fp, vec![1, 1]).unwrap();
        assert_relative_eq!(dist(&fp, &x, &y).unwrap(), 1.0 / 3.0);
        assert_eq!(dist(&fp, &x, &x).unwrap(), 0.0);
        let fp = params(2, 2, 1);
        let x = Center::ring(&fp, vec![0, 1, 1]).unwrap();
        let y = Center::ring(&fp, vec![0, 1, 0]).unwrap();
        assert_relative_eq!(dist(&fp, &x, &y).unwrap(), 0.5, max_relative = 1e-15);
        let short = Center::ring(&fp, vec![0, 1]).unwrap();
        assert!(matches!(dist(&fp, &x, &short), Err(Error::CenterMismatch(_))));
    }

    #[test]
    fn digits_are_checked() {
        let fp = params(2, 1, 1);
        assert_eq!(
            Center::ring(&fp, vec![0, 2]),
            Err(Error::DigitOutOfRange { digit: 2, q_res: 2 })
        );
    }

    #[test]
    fn lg_examples() {
        let fp = params(2, 1, 1);
        let x = Center::ring(&fp, vec![0, 1, 0]).unwrap();
        let lg = to_lg(&x).unwrap();
        assert_eq!(
            lg,
            LgCoords {
                l: 1,
                m: 2,
                g_tail: vec![1, 0]
            }
        );
        assert_eq!(from_lg(&fp, &lg).unwrap(), x);
        assert_eq!(
            to_lg(&Center::zero(0, 4)).unwrap(),
            LgCoords {
                l: 4,
                m: 0,
                g_tail: vec![]
            }
        );
        let fp = params(3, 1, 1);
        let x = Center::ring(&fp, vec![2]).unwrap();
        assert_eq!(
            to_lg(&x).unwrap(),
            LgCoords {
                l: 0,
                m: 1,
                g_tail: vec![2]
            }
        );
    }

    #[test]
    fn count_g_examples() {
        assert_eq!(count_g(&params(2, 1, 1), 0), 1);
        assert_eq!(count_g(&params(2, 1, 1), 3), 4);
        assert_eq!(count_g(&params(2, 1, 2), 1), 3);
    }

    #[test]
    fn count_g_matches_enumeration() {
        // tails of length m with nonzero leading digit
        for (p, f) in [(2, 1), (3, 1), (2, 2)] {
            let fp = params(p, 1, f);
            let q = fp.q_res() as u32;
            for m in 0..=4u32 {
                let enumerated = if m == 0 {
                    1
                } else {
                    all_strings(q, m as usize)
                        .iter()
                        .filter(|s| s[0] != 0)
                        .count() as u64
                };
                assert_eq!(count_g(&fp, m), enumerated);
            }
            for big_m in 0..=6u32 {
                let total: u64 = (0..=big_m).map(|m| count_g(&fp, m)).sum();
                assert_eq!(total, fp.q_res().pow(big_m));
            }
        }
    }

    #[test]
    fn exhaustive_ultrametric_and_lg_round_trip() {
        for (p, f, max_depth) in [(2, 1, 6), (3, 1, 4), (2, 2, 4)] {
            let fp = params(p, 2, f);
            let q = fp.q_res() as u32;
            for n in 0..=max_depth {
                let centers: Vec<Center> = all_strings(q, n)
                    .into_iter()
                    .map(|d| Center::ring(&fp, d).unwrap())
                    .collect();
                for x in &centers {
                    let lg = to_lg(x).unwrap();
                    assert_eq!(&from_lg(&fp, &lg).unwrap(), x);
                    let zero = Center::zero(0, n as i64);
                    assert_eq!(norm(&fp, x), dist(&fp, x, &zero).unwrap());
                }
                if n <= 3 {
                    for x in &centers {
                        for y in &centers {
                            let dxy = dist(&fp, x, y).unwrap();
                            for z in &centers {
                                let dxz = dist(&fp, x, z).unwrap();
                                let dyz = dist(&fp, y, z).unwrap();
                                assert!(dxz <= dxy.max(dyz));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pow_e_uses_exact_integer_part() {
        let fp = params(3, 1, 1);
        assert_eq!(fp.pow_e(10), 59049.0);
        assert_eq!(fp.pow_e(-2), 1.0 / 9.0);
        let fp = params(2, 2, 1);
        assert_eq!(fp.pow_e(4), 4.0);
        assert_relative_eq!(fp.pow_e(3), 2.0 * 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn pi_power_has_expected_norm() {
        let fp = params(2, 1, 1);
        let c = Center::pi_power(0, 3);
        assert_eq!(c.depth(), 4);
        assert_eq!(norm(&fp, &c), 0.125);
        let c = Center::pi_power(-2, -2);
        assert_eq!(norm(&fp, &c), 4.0);
    }
}
