//! Dense row-major matrices and a real symmetric eigensolver.
//!
//! The solver runs the classic three-stage dense route: Householder
//! reduction to tridiagonal form, implicit-shift QL iteration, and
//! back-transformation of the eigenvectors. Eigenvectors live in matrix
//! *rows* at every stage, so the QL rotations and the reflector
//! applications all walk contiguous memory; that is what makes the
//! (N+1)-site Hamiltonians of this crate tractable at N = a few thousand
//! without an external linear-algebra stack.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

#[allow(unused_imports)]
use num_traits::Float;

/// Square dense matrix of `f64`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of dimension `n` (must be ≥ 1).
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "matrix dimension must be at least 1");
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Identity matrix of dimension `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from an element function `f(row, col)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    /// Matrix dimension.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Row `i` as a mutable slice.
    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.data[i * n..(i + 1) * n]
    }

    /// Two distinct rows `(i, j)`, `i < j`, both mutable.
    #[inline]
    pub fn row_pair_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        assert!(i < j && j < self.n, "row_pair_mut needs i < j < n");
        let n = self.n;
        let (head, tail) = self.data.split_at_mut(j * n);
        (&mut head[i * n..(i + 1) * n], &mut tail[..n])
    }

    /// Swap rows `i` and `j`.
    pub fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (a, b) = self.row_pair_mut(lo, hi);
        a.swap_with_slice(b);
    }

    /// Flat row-major storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Exact elementwise symmetry.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.data[i * self.n + j] != self.data[j * self.n + i] {
                    return false;
                }
            }
        }
        true
    }

    /// Sum of the diagonal.
    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *yi = dot(row, x);
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Plain sequential dot product; summation order is fixed for
/// reproducibility.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("QL iteration did not converge for eigenvalue {index} within {max_iter} sweeps")]
    NoConvergence { index: usize, max_iter: u32 },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
}

/// Eigendecomposition of a real symmetric matrix.
///
/// `values` are ascending; row `k` of `vectors` is the unit eigenvector for
/// `values[k]`, so `vectors · A · vectorsᵀ = diag(values)`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const MAX_QL_SWEEPS: u32 = 50;

/// Full eigendecomposition of a symmetric matrix.
///
/// Only symmetry up to roundoff is assumed; the routine reads the full
/// matrix. Fails on non-finite entries or (pathologically) if the QL
/// iteration stalls.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen, LinalgError> {
    let n = a.dim();
    for i in 0..n {
        for j in 0..n {
            if !a[(i, j)].is_finite() {
                return Err(LinalgError::NonFinite { row: i, col: j });
            }
        }
    }

    let mut work = a.clone();
    let (mut d, mut e, betas) = tridiagonalize(&mut work);
    let mut vectors = Matrix::identity(n);
    tql2(&mut d, &mut e, &mut vectors)?;
    back_transform(&work, &betas, &mut vectors);
    sort_ascending(&mut d, &mut vectors);
    Ok(SymmetricEigen { values: d, vectors })
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// Returns (diagonal d, off-diagonal e with `e[k]` coupling sites k and
/// k+1 and `e[n-1] = 0`, reflector scalars β). Reflector vector k is left
/// in `a.row(k)[k+1..]`; the rest of `a` becomes scratch.
fn tridiagonalize(a: &mut Matrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let mut e = vec![0.0; n];
    let mut betas = vec![0.0; n];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let row_k = a.row(k);
        let x0 = row_k[k + 1];
        let sigma_sq: f64 = row_k[k + 1..].iter().map(|v| v * v).sum();
        if sigma_sq == 0.0 {
            e[k] = 0.0;
            betas[k] = 0.0;
            continue;
        }
        let sigma = sigma_sq.sqrt();
        // Sign choice avoids cancellation in u = x - alpha e1.
        let alpha = if x0 >= 0.0 { -sigma } else { sigma };
        e[k] = alpha;
        let beta = 1.0 / (sigma_sq - alpha * x0); // 2 / uᵀu
        betas[k] = beta;
        a.row_mut(k)[k + 1] = x0 - alpha; // u now lives in row k's tail

        // p = beta * A_block * u over the trailing block (k+1.., k+1..).
        for (i, pi) in p.iter_mut().enumerate().skip(k + 1) {
            // Row i of the block and u are both contiguous tails.
            let (rk, ri) = a.row_pair_mut(k, i);
            *pi = beta * dot(&ri[k + 1..], &rk[k + 1..]);
        }
        // w = p - (beta/2)(uᵀp) u
        let upu: f64 = {
            let u = &a.row(k)[k + 1..];
            u.iter().zip(&p[k + 1..]).map(|(ui, pi)| ui * pi).sum()
        };
        let half_corr = 0.5 * beta * upu;
        for (pi, ui) in p[k + 1..].iter_mut().zip(&a.row(k)[k + 1..]) {
            *pi -= half_corr * ui;
        }
        // Rank-2 update A -= u wᵀ + w uᵀ on the trailing block.
        for i in k + 1..n {
            let (u, row_i) = {
                let (rk, ri) = a.row_pair_mut(k, i);
                (&rk[k + 1..], &mut ri[k + 1..])
            };
            let ui = u[i - k - 1];
            let wi = p[i];
            for ((aij, &uj), &wj) in row_i.iter_mut().zip(u).zip(&p[k + 1..]) {
                *aij -= ui * wj + wi * uj;
            }
        }
    }

    if n >= 2 {
        e[n - 2] = a[(n - 2, n - 1)];
    }
    let d = (0..n).map(|i| a[(i, i)]).collect();
    (d, e, betas)
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix,
/// accumulating eigenvector rows of `z` (which starts as the identity).
///
/// `e[i]` couples `d[i]` and `d[i+1]`; `e[n-1]` is scratch.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut Matrix) -> Result<(), LinalgError> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter: u32 = 0;
        loop {
            // Smallest m ≥ l with a negligible coupling e[m].
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(LinalgError::NoConvergence {
                    index: l,
                    max_iter: MAX_QL_SWEEPS,
                });
            }
            // Wilkinson-style shift.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(if g == 0.0 { 1.0 } else { g }));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // Plane rotation of eigenvector rows i and i+1.
                let (zi, zi1) = z.row_pair_mut(i, i + 1);
                for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *b;
                    *b = s * *a + c * f;
                    *a = c * *a - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Apply the accumulated Householder reflectors to each eigenvector row,
/// turning eigenvectors of the tridiagonal matrix into eigenvectors of the
/// original one.
fn back_transform(work: &Matrix, betas: &[f64], z: &mut Matrix) {
    let n = work.dim();
    if n < 3 {
        return;
    }
    let apply_row = |v: &mut [f64]| {
        for k in (0..n - 2).rev() {
            let beta = betas[k];
            if beta == 0.0 {
                continue;
            }
            let u = &work.row(k)[k + 1..];
            let tail = &mut v[k + 1..];
            let proj = beta * dot(u, tail);
            for (t, &uk) in tail.iter_mut().zip(u) {
                *t -= proj * uk;
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n >= 256 {
            z.data.par_chunks_exact_mut(n).for_each(apply_row);
            return;
        }
    }
    for row in z.data.chunks_exact_mut(n) {
        apply_row(row);
    }
}

fn sort_ascending(d: &mut [f64], z: &mut Matrix) {
    let n = d.len();
    // Selection sort with row swaps: O(n²) comparisons are negligible next
    // to the O(n³) decomposition and keep the permutation in place.
    for i in 0..n {
        let mut min = i;
        for j in i + 1..n {
            if d[j] < d[min] {
                min = j;
            }
        }
        if min != i {
            d.swap(i, min);
            z.swap_rows(i, min);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
        xs.into_iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// ‖A vᵢ − λᵢ vᵢ‖∞ over all eigenpairs.
    fn max_residual(a: &Matrix, eig: &SymmetricEigen) -> f64 {
        let n = a.dim();
        let mut y = vec![0.0; n];
        let mut worst = 0.0_f64;
        for (k, &lam) in eig.values.iter().enumerate() {
            a.mul_vec(eig.vectors.row(k), &mut y);
            let r = max_abs(
                y.iter()
                    .zip(eig.vectors.row(k))
                    .map(|(yi, vi)| yi - lam * vi),
            );
            worst = worst.max(r);
        }
        worst
    }

    fn max_orthonormality_defect(v: &Matrix) -> f64 {
        let n = v.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let g = dot(v.row(i), v.row(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    #[test]
    fn one_by_one() {
        let mut a = Matrix::zeros(1);
        a[(0, 0)] = -3.5;
        let eig = symmetric_eigen(&a).unwrap();
        assert_eq!(eig.values, vec![-3.5]);
        assert_eq!(eig.vectors.row(0), &[1.0]);
    }

    #[test]
    fn two_by_two_analytic() {
        // [[a, b], [b, c]] has eigenvalues mid ± hypot((a-c)/2, b).
        let (a, b, c) = (1.25, -0.4, 0.75);
        let mut m = Matrix::zeros(2);
        m[(0, 0)] = a;
        m[(0, 1)] = b;
        m[(1, 0)] = b;
        m[(1, 1)] = c;
        let eig = symmetric_eigen(&m).unwrap();
        let mid = 0.5 * (a + c);
        let r = (0.5 * (a - c)).hypot(b);
        assert!((eig.values[0] - (mid - r)).abs() < 1e-14);
        assert!((eig.values[1] - (mid + r)).abs() < 1e-14);
        assert!(max_residual(&m, &eig) < 1e-14);
    }

    #[test]
    fn diagonal_matrix_is_fixed_point() {
        let diag = [3.0, -1.0, 2.0, 0.5, 0.5];
        let a = Matrix::from_fn(5, |i, j| if i == j { diag[i] } else { 0.0 });
        let eig = symmetric_eigen(&a).unwrap();
        let mut expect = diag;
        expect.sort_by(f64::total_cmp);
        for (got, want) in eig.values.iter().zip(expect) {
            assert_eq!(*got, want);
        }
        assert!(max_orthonormality_defect(&eig.vectors) < 1e-15);
    }

    #[test]
    fn qubit_bath_arrow_matrix_resonant_pair() {
        // Two-site resonant arrow matrix: f = Ω ± γ.
        let (omega, gamma) = (1.0, 0.05);
        let mut m = Matrix::zeros(2);
        m[(0, 0)] = omega;
        m[(1, 1)] = omega;
        m[(0, 1)] = gamma;
        m[(1, 0)] = gamma;
        let eig = symmetric_eigen(&m).unwrap();
        assert!((eig.values[0] - (omega - gamma)).abs() < 1e-15);
        assert!((eig.values[1] - (omega + gamma)).abs() < 1e-15);
    }

    #[test]
    fn random_dense_residual_orthonormality_trace() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 7, 24, 60] {
            let mut a = Matrix::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    let v = rng.random_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            let eig = symmetric_eigen(&a).unwrap();
            let scale = max_abs(a.data().iter().copied());
            assert!(
                max_residual(&a, &eig) < 1e-12 * scale * n as f64,
                "residual too large at n={n}"
            );
            assert!(max_orthonormality_defect(&eig.vectors) < 1e-12 * n as f64);
            let trace_err = (eig.values.iter().sum::<f64>() - a.trace()).abs();
            assert!(trace_err < 1e-12 * scale * n as f64);
            for w in eig.values.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn degenerate_eigenvalues_keep_orthonormal_basis() {
        // Double eigenvalue hidden behind an orthogonal similarity.
        let mut a = Matrix::zeros(3);
        a[(0, 0)] = 2.0;
        a[(1, 1)] = 2.0;
        a[(2, 2)] = 5.0;
        a[(0, 1)] = 0.0;
        a[(0, 2)] = 0.0;
        // Rotate by an orthogonal similarity so degeneracy is hidden.
        let theta: f64 = 0.7;
        let (s, c) = theta.sin_cos();
        let q = Matrix::from_fn(3, |i, j| match (i, j) {
            (0, 0) => c,
            (0, 2) => -s,
            (2, 0) => s,
            (2, 2) => c,
            (1, 1) => 1.0,
            _ => 0.0,
        });
        // b = q a qᵀ
        let mut tmp = Matrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += q[(i, k)] * a[(k, k)] * q[(j, k)];
                }
                tmp[(i, j)] = acc;
            }
        }
        let eig = symmetric_eigen(&tmp).unwrap();
        assert!((eig.values[0] - 2.0).abs() < 1e-13);
        assert!((eig.values[1] - 2.0).abs() < 1e-13);
        assert!((eig.values[2] - 5.0).abs() < 1e-13);
        assert!(max_orthonormality_defect(&eig.vectors) < 1e-13);
        assert!(max_residual(&tmp, &eig) < 1e-13);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = Matrix::zeros(2);
        a[(0, 1)] = f64::NAN;
        a[(1, 0)] = f64::NAN;
        assert!(matches!(
            symmetric_eigen(&a),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn row_pair_and_swap() {
        let mut m = Matrix::from_fn(3, |i, j| (3 * i + j) as f64);
        {
            let (r0, r2) = m.row_pair_mut(0, 2);
            r0[0] = -1.0;
            r2[2] = -2.0;
        }
        assert_eq!(m[(0, 0)], -1.0);
        assert_eq!(m[(2, 2)], -2.0);
        m.swap_rows(0, 2);
        assert_eq!(m[(2, 0)], -1.0);
        assert_eq!(m[(0, 2)], -2.0);
    }
}
