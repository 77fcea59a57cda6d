//! Eigen-solvers used by the operator and spectrum code.
//!
//! Dense work is delegated to nalgebra. Large symmetric problems are handled
//! by block subspace iteration with Rayleigh-Ritz projection, either on the
//! operator itself (top of the spectrum) or on its inverse (bottom).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix given by its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal with {} diagonal and {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for (i, &b) in self.off.iter().enumerate() {
            m[(i, i + 1)] = b;
            m[(i + 1, i)] = b;
        }
        m
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence via LDL^T pivots).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = self.diag[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let prev = if d == 0.0 { f64::MIN_POSITIVE } else { d };
            d = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / prev;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.eigenvalue(k)).collect()
    }
}

/// Ascending eigenvalues of a dense symmetric matrix.
pub fn sym_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Descending singular values of a dense matrix.
pub fn singular_values(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.singular_values().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[derive(Debug, Clone, Copy)]
pub struct SubspaceOptions {
    /// Block size; at least `k`.
    pub block: usize,
    /// Relative residual `|A x - theta x| / |theta|` required for each pair.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl SubspaceOptions {
    pub fn for_count(k: usize) -> Self {
        Self {
            block: 2 * k + 8,
            tol: 1e-10,
            max_iter: 2000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ritz values, ascending for [`lowest_eigenpairs`], descending for
    /// [`highest_eigenpairs`].
    pub values: Vec<f64>,
    /// Ritz vectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
    /// The whole Ritz block, usable as a warm start.
    pub basis: DMatrix<f64>,
    pub iterations: usize,
    pub max_residual: f64,
}

fn random_block(n: usize, b: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, b, |_, _| rng.gen_range(-1.0..1.0))
}

fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    x.qr().q()
}

fn apply_columns<F>(x: &DMatrix<f64>, op: &F) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.nrows();
    let mut y = DMatrix::zeros(n, x.ncols());
    for j in 0..x.ncols() {
        let src = &x.as_slice()[j * n..(j + 1) * n];
        let dst = &mut y.as_mut_slice()[j * n..(j + 1) * n];
        op(src, dst);
    }
    y
}

fn start_block(n: usize, b: usize, seed: u64, warm: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let mut x = random_block(n, b, seed);
    if let Some(w) = warm {
        if w.nrows() == n {
            let c = w.ncols().min(b);
            // keep a small random admixture so that no direction is missed
            for j in 0..c {
                let col = w.column(j) + x.column(j) * 1e-3;
                x.set_column(j, &col);
            }
        }
    }
    orthonormalize(x)
}

/// Rayleigh-Ritz on an orthonormal block `q` with `aq = A q`.
fn rayleigh_ritz(q: &DMatrix<f64>, aq: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let h = q.transpose() * aq;
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let v = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, q * &v, aq * &v)
}

fn residuals(x: &DMatrix<f64>, ax: &DMatrix<f64>, vals: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .map(|&i| {
            let r: DVector<f64> = ax.column(i) - x.column(i) * vals[i];
            r.norm()
        })
        .collect()
}

/// The `k` smallest eigenpairs of a symmetric positive definite operator,
/// by subspace iteration with `solve` (`y = A^{-1} x`) and Rayleigh-Ritz
/// projection with `apply` (`y = A x`).
pub fn lowest_eigenpairs<A, S>(
    n: usize,
    apply: A,
    solve: S,
    k: usize,
    opts: SubspaceOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<EigenPairs>
where
    A: Fn(&[f64], &mut [f64]),
    S: Fn(&[f64], &mut [f64]),
{
    let k = k.min(n);
    let b = opts.block.max(k).min(n);
    if n <= 4 * b.max(64) {
        return dense_fallback(n, &apply, k, true);
    }
    let mut q = start_block(n, b, opts.seed, warm);
    let mut last_res = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let z = apply_columns(&q, &solve);
        q = orthonormalize(z);
        let aq = apply_columns(&q, &apply);
        let (vals, x, ax) = rayleigh_ritz(&q, &aq);
        let idx: Vec<usize> = (0..k).collect();
        let res = residuals(&x, &ax, &vals, &idx);
        last_res = res
            .iter()
            .zip(&vals)
            .map(|(r, v)| r / v.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        q = x;
        if last_res <= opts.tol {
            return Ok(EigenPairs {
                values: vals[..k].to_vec(),
                vectors: q.columns(0, k).into_owned(),
                basis: q,
                iterations: it,
                max_residual: last_res,
            });
        }
    }
    Err(Error::NotConverged(format!(
        "subspace iteration for the {k} lowest eigenvalues: residual {last_res:.3e} after {} iterations",
        opts.max_iter
    )))
}

/// The `k` largest eigenpairs of a symmetric positive semidefinite operator.
/// Residuals are measured relative to the largest Ritz value.
pub fn highest_eigenpairs<A>(
    n: usize,
    apply: A,
    k: usize,
    opts: SubspaceOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<EigenPairs>
where
    A: Fn(&[f64], &mut [f64]),
{
    let k = k.min(n);
    let b = opts.block.max(k).min(n);
    if n <= 4 * b.max(64) {
        return dense_fallback(n, &apply, k, false);
    }
    let mut q = start_block(n, b, opts.seed, warm);
    let mut aq = apply_columns(&q, &apply);
    let mut last_res = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (mut vals, mut x, mut ax) = rayleigh_ritz(&q, &aq);
        vals.reverse();
        x = reverse_columns(x);
        ax = reverse_columns(ax);
        let idx: Vec<usize> = (0..k).collect();
        let scale = vals[0].abs().max(f64::MIN_POSITIVE);
        last_res = residuals(&x, &ax, &vals, &idx)
            .iter()
            .fold(0.0, |m, r| f64::max(m, r / scale));
        if last_res <= opts.tol {
            return Ok(EigenPairs {
                values: vals[..k].to_vec(),
                vectors: x.columns(0, k).into_owned(),
                basis: x,
                iterations: it,
                max_residual: last_res,
            });
        }
        q = orthonormalize(ax);
        aq = apply_columns(&q, &apply);
    }
    Err(Error::NotConverged(format!(
        "subspace iteration for the {k} largest eigenvalues: residual {last_res:.3e} after {} iterations",
        opts.max_iter
    )))
}

fn reverse_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    let c = m.ncols();
    DMatrix::from_fn(m.nrows(), c, |r, j| m[(r, c - 1 - j)])
}

fn dense_fallback<A>(n: usize, apply: &A, k: usize, ascending: bool) -> Result<EigenPairs>
where
    A: Fn(&[f64], &mut [f64]),
{
    let a = apply_columns(&DMatrix::identity(n, n), apply);
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    if !ascending {
        order.reverse();
    }
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenPairs {
        values: vals[..k].to_vec(),
        vectors: vecs.columns(0, k).into_owned(),
        basis: vecs,
        iterations: 0,
        max_residual: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_1d(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn sturm_matches_closed_form() {
        let n = 50;
        let t = laplacian_1d(n);
        for k in 0..n {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert_relative_eq!(t.eigenvalue(k), exact, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn sturm_matches_dense() {
        let t = SymTridiagonal::new(vec![1.0, 5.0, 20.0, 80.0], vec![-1.0, -4.0, -16.0]).unwrap();
        let dense = sym_eigenvalues(t.to_dense());
        for (k, d) in dense.iter().enumerate() {
            assert_relative_eq!(t.eigenvalue(k), *d, max_relative = 1e-12);
        }
    }

    #[test]
    fn subspace_iteration_on_large_tridiagonal() {
        let n = 3000;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 / 200.0).exp()).collect();
        let t = SymTridiagonal::new(diag.clone(), vec![0.3; n - 1]).unwrap();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += 0.3 * x[i - 1];
                }
                if i + 1 < n {
                    s += 0.3 * x[i + 1];
                }
                y[i] = s;
            }
        };
        // Thomas algorithm for the inverse
        let solve = |x: &[f64], y: &mut [f64]| {
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            c[0] = 0.3 / diag[0];
            d[0] = x[0] / diag[0];
            for i in 1..n {
                let m = diag[i] - 0.3 * c[i - 1];
                c[i] = 0.3 / m;
                d[i] = (x[i] - 0.3 * d[i - 1]) / m;
            }
            y[n - 1] = d[n - 1];
            for i in (0..n - 1).rev() {
                y[i] = d[i] - c[i] * y[i + 1];
            }
        };
        let low = lowest_eigenpairs(n, apply, solve, 5, SubspaceOptions::for_count(5), None).unwrap();
        for k in 0..5 {
            assert_relative_eq!(low.values[k], t.eigenvalue(k), max_relative = 1e-12);
        }
        let high = highest_eigenpairs(n, apply, 3, SubspaceOptions::for_count(3), None).unwrap();
        for k in 0..3 {
            assert_relative_eq!(high.values[k], t.eigenvalue(n - 1 - k), max_relative = 1e-9);
        }
    }
}
