//! Finite windows of the ball trees of `R` and `F`.
//!
//! Vertices are indexed level-major and lexicographically within a level: the
//! vertex `(n, x)` sits at `offset(n) + i`, where `i` is the digit string of
//! `x` read as a base-`p^f` integer with the most significant digit first.
//! With this layout the children of vertex `i` at level `n` are the contiguous
//! block `q*i .. q*i + q` of level `n + 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Center, FieldParams};

/// Default cap on the number of vertices of a window.
pub const DEFAULT_VERTEX_LIMIT: u64 = 20_000_000;

/// `p^(-n f)`, the measure of a ball at level `n`.
pub fn weight(params: &FieldParams, n: i64) -> f64 {
    params.pow_f(-n)
}

/// Identity of a window, cheap to copy and compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowShape {
    pub params: FieldParams,
    pub min_level: i64,
    pub max_level: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeWindow {
    shape: WindowShape,
    q: usize,
    offsets: Vec<usize>,
}

impl TreeWindow {
    /// Window of the `R` tree with levels `0..=depth`.
    pub fn ring(params: FieldParams, depth: u32) -> Result<Self> {
        Self::build(params, 0, depth as i64, DEFAULT_VERTEX_LIMIT)
    }

    /// Window of the `F` tree with levels `-m..=n`, i.e. `|x| <= p^(m/e)`.
    pub fn field(params: FieldParams, m: u32, n: i64) -> Result<Self> {
        if n < -(m as i64) {
            return Err(Error::InvalidArgument(format!(
                "empty F window: N = {n} below -M = {}",
                -(m as i64)
            )));
        }
        Self::build(params, -(m as i64), n, DEFAULT_VERTEX_LIMIT)
    }

    pub fn with_limit(params: FieldParams, min_level: i64, max_level: i64, limit: u64) -> Result<Self> {
        Self::build(params, min_level, max_level, limit)
    }

    fn build(params: FieldParams, min_level: i64, max_level: i64, limit: u64) -> Result<Self> {
        if max_level < min_level {
            return Err(Error::InvalidArgument("max level below min level".into()));
        }
        let q = params.q_res();
        let mut offsets = Vec::with_capacity((max_level - min_level + 2) as usize);
        let mut total: u64 = 0;
        let mut size: u64 = 1;
        offsets.push(0);
        for _ in min_level..=max_level {
            total = total
                .checked_add(size)
                .filter(|&t| t <= limit)
                .ok_or(Error::WindowTooLarge {
                    vertices: total.saturating_add(size),
                    limit,
                })?;
            offsets.push(total as usize);
            size = size.saturating_mul(q);
        }
        Ok(Self {
            shape: WindowShape {
                params,
                min_level,
                max_level,
            },
            q: q as usize,
            offsets,
        })
    }

    pub fn shape(&self) -> WindowShape {
        self.shape
    }

    pub fn params(&self) -> &FieldParams {
        &self.shape.params
    }

    pub fn min_level(&self) -> i64 {
        self.shape.min_level
    }

    pub fn max_level(&self) -> i64 {
        self.shape.max_level
    }

    pub fn is_ring(&self) -> bool {
        self.shape.min_level == 0
    }

    /// Alphabet size `p^f`, i.e. the number of children of an inner vertex.
    pub fn branching(&self) -> usize {
        self.q
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i64> {
        self.shape.min_level..=self.shape.max_level
    }

    pub fn num_vertices(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn level_pos(&self, n: i64) -> usize {
        assert!(
            self.levels().contains(&n),
            "level {n} outside window {:?}",
            self.levels()
        );
        (n - self.shape.min_level) as usize
    }

    pub fn level_offset(&self, n: i64) -> usize {
        self.offsets[self.level_pos(n)]
    }

    pub fn level_size(&self, n: i64) -> usize {
        let k = self.level_pos(n);
        self.offsets[k + 1] - self.offsets[k]
    }

    pub fn level_range(&self, n: i64) -> std::ops::Range<usize> {
        let k = self.level_pos(n);
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn vertex(&self, n: i64, i: usize) -> usize {
        debug_assert!(i < self.level_size(n));
        self.level_offset(n) + i
    }

    /// `(level, position within level)` of a vertex index.
    pub fn locate(&self, v: usize) -> (i64, usize) {
        assert!(v < self.num_vertices(), "vertex {v} outside window");
        let k = self.offsets.partition_point(|&o| o <= v) - 1;
        (self.shape.min_level + k as i64, v - self.offsets[k])
    }

    pub fn level_of(&self, v: usize) -> i64 {
        self.locate(v).0
    }

    /// Index of the zero center at level `n`.
    pub fn zero_vertex(&self, n: i64) -> usize {
        self.level_offset(n)
    }

    pub fn center_of(&self, v: usize) -> Center {
        let (n, mut i) = self.locate(v);
        let len = (n - self.shape.min_level) as usize;
        let mut digits = vec![0u32; len];
        for d in digits.iter_mut().rev() {
            *d = (i % self.q) as u32;
            i /= self.q;
        }
        Center::from_parts_unchecked(self.shape.min_level, digits)
    }

    pub fn index_of(&self, c: &Center) -> Result<usize> {
        if c.start() != self.shape.min_level || !self.levels().contains(&c.depth()) {
            return Err(Error::CenterMismatch(format!(
                "center with start {} and depth {} is not a vertex of this window",
                c.start(),
                c.depth()
            )));
        }
        let mut i = 0usize;
        for &d in c.digits() {
            if d as usize >= self.q {
                return Err(Error::DigitOutOfRange {
                    digit: d,
                    q_res: self.q as u64,
                });
            }
            i = i * self.q + d as usize;
        }
        Ok(self.vertex(c.depth(), i))
    }

    /// Children ordered by appended digit; empty at the deepest level.
    pub fn children(&self, v: usize) -> std::ops::Range<usize> {
        let (n, i) = self.locate(v);
        if n == self.shape.max_level {
            return v..v;
        }
        let start = self.level_offset(n + 1) + i * self.q;
        start..start + self.q
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        let (n, i) = self.locate(v);
        if n == self.shape.min_level {
            None
        } else {
            Some(self.vertex(n - 1, i / self.q))
        }
    }

    /// `w(v) = p^(-n f)` for a vertex at level `n`.
    pub fn weight(&self, v: usize) -> f64 {
        weight(&self.shape.params, self.level_of(v))
    }

    /// Weights of all vertices in index order.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.num_vertices());
        for n in self.levels() {
            let wn = weight(&self.shape.params, n);
            w.extend(std::iter::repeat(wn).take(self.level_size(n)));
        }
        w
    }

    /// The same window cut at a smaller maximum depth. Its indices are a
    /// prefix of this window's indices.
    pub fn truncated(&self, max_level: i64) -> Result<Self> {
        Self::build(
            self.shape.params,
            self.shape.min_level,
            max_level,
            DEFAULT_VERTEX_LIMIT,
        )
    }
}

/// A function on the vertices of a window, in the weighted space.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedVector {
    pub shape: WindowShape,
    pub values: Vec<Complex64>,
}

impl WeightedVector {
    pub fn zeros(window: &TreeWindow) -> Self {
        Self {
            shape: window.shape(),
            values: vec![Complex64::new(0.0, 0.0); window.num_vertices()],
        }
    }

    pub fn from_real(window: &TreeWindow, values: &[f64]) -> Result<Self> {
        if values.len() != window.num_vertices() {
            return Err(Error::WindowMismatch);
        }
        Ok(Self {
            shape: window.shape(),
            values: values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        })
    }

    pub fn indicator(window: &TreeWindow, v: usize) -> Self {
        let mut out = Self::zeros(window);
        out.values[v] = Complex64::new(1.0, 0.0);
        out
    }

    pub fn norm_sqr(&self, window: &TreeWindow) -> Result<f64> {
        Ok(weighted_inner(window, self, self)?.re)
    }
}

/// `sum_v phi(v) conj(psi(v)) w(v)`.
pub fn weighted_inner(window: &TreeWindow, phi: &WeightedVector, psi: &WeightedVector) -> Result<Complex64> {
    if phi.shape != window.shape() || psi.shape != window.shape() {
        return Err(Error::WindowMismatch);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for n in window.levels() {
        let w = weight(window.params(), n);
        let r = window.level_range(n);
        let s: Complex64 = phi.values[r.clone()]
            .iter()
            .zip(&psi.values[r])
            .map(|(a, b)| a * b.conj())
            .sum();
        acc += s * w;
    }
    Ok(acc)
}

/// Real weighted inner product on plain slices laid out like `window`.
pub fn weighted_dot(window: &TreeWindow, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for n in window.levels() {
        let w = weight(window.params(), n);
        let r = window.level_range(n);
        let s: f64 = a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum();
        acc += s * w;
    }
    acc
}
