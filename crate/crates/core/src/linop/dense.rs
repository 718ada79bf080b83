//! Dense symmetric storage and the small set of dense kernels the rest of the
//! crate builds on: Cholesky with triangular substitution and a cyclic Jacobi
//! eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square symmetric matrix, stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    data: DMatrix<f64>,
}

impl DenseSym {
    /// Symmetrizes `m` as `(m + mᵀ)/2`, so the stored entries are exactly
    /// mirror images of each other.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut data = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (data[(i, j)] + data[(j, i)]);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Ok(Self { data })
    }

    /// Like [`DenseSym::from_matrix`] but rejects inputs whose asymmetry
    /// exceeds `tol * max|a_ij|`.
    pub fn from_matrix_checked(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if diff > tol * scale {
                    return Err(Error::NotSymmetric { row: i, col: j, diff });
                }
            }
        }
        Self::from_matrix(m)
    }

    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            data: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.data.diagonal()
    }

    pub fn add(&self, other: &DenseSym) -> Result<DenseSym> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(DenseSym {
            data: &self.data + &other.data,
        })
    }

    /// Congruence `Pᵀ X P`.
    pub fn congruence(&self, p: &DMatrix<f64>) -> Result<DenseSym> {
        if p.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.nrows(),
            });
        }
        DenseSym::from_matrix(p.transpose() * &self.data * p)
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes the lower triangle of `a`. The upper triangle is ignored.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `log det A = 2 Σ log l_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Overwrites `x` with `L⁻¹ x`.
    pub fn solve_lower_in_place(&self, x: &mut [f64]) {
        forward_substitute(&self.l, x);
    }

    /// Overwrites `x` with `L⁻ᵀ x`.
    pub fn solve_upper_in_place(&self, x: &mut [f64]) {
        back_substitute_transposed(&self.l, x);
    }

    /// `A⁻¹ x`.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        self.solve_lower_in_place(y.as_mut_slice());
        self.solve_upper_in_place(y.as_mut_slice());
        y
    }

    /// `A⁻¹ X` column by column.
    pub fn solve_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        for mut col in y.column_iter_mut() {
            let s = col.as_mut_slice();
            self.solve_lower_in_place(s);
            self.solve_upper_in_place(s);
        }
        y
    }
}

/// Forward substitution with a lower-triangular matrix.
pub(crate) fn forward_substitute(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for j in 0..n {
        let xj = x[j] / l[(j, j)];
        x[j] = xj;
        if xj != 0.0 {
            let col = l.column(j);
            for i in (j + 1)..n {
                x[i] -= col[i] * xj;
            }
        }
    }
}

/// Back substitution with `Lᵀ`, where `L` is lower triangular.
pub(crate) fn back_substitute_transposed(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for j in (0..n).rev() {
        let col = l.column(j);
        let mut s = x[j];
        for i in (j + 1)..n {
            s -= col[i] * x[i];
        }
        x[j] = s / l[(j, j)];
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending
/// order and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        scaled * self.vectors.transpose()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for a symmetric matrix (upper triangle used).
pub fn dense_eig_sym(a: &DenseSym) -> Result<SymEigen> {
    jacobi_eigen(a.as_matrix())
}

pub(crate) fn jacobi_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    // Row-major working copy; row access is contiguous.
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = if i <= j { a[(i, j)] } else { a[(j, i)] };
            w[i * n + j] = v;
        }
    }
    // Eigenvectors stored transposed (row k = eigenvector k) for contiguity.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }

    let frob: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = f64::EPSILON * frob;
    let mut converged = n <= 1 || frob == 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&w, n) <= target {
            converged = true;
            break;
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = w[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = w[p * n + p];
                let aqq = w[q * n + q];
                // Negligible against both pivots: annihilate without rotating.
                if sweeps > 3 {
                    let g = 100.0 * apq.abs();
                    if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                        w[p * n + q] = 0.0;
                        w[q * n + p] = 0.0;
                        continue;
                    }
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut w, n, p, q, c, s, t, apq);
                // V ← V J, stored as rows of Vᵀ.
                for k in 0..n {
                    let vp = vt[p * n + k];
                    let vq = vt[q * n + k];
                    vt[p * n + k] = c * vp - s * vq;
                    vt[q * n + k] = s * vp + c * vq;
                }
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&w, n);
        if off > 1e3 * target {
            return Err(Error::NoConvergence { sweeps, off });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps sweep index order on ties.
    order.sort_by(|&i, &j| w[j * n + j].partial_cmp(&w[i * n + i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = DVector::from_iterator(n, order.iter().map(|&i| w[i * n + i]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, col)] = vt[i * n + k];
        }
    }
    Ok(SymEigen { values, vectors })
}

fn off_diagonal_norm(w: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += w[i * n + j] * w[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Applies the rotation `Jᵀ W J` that zeroes `w[p][q]`.
#[allow(clippy::too_many_arguments)]
fn rotate(w: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let tau = s / (1.0 + c);
    w[p * n + p] -= t * apq;
    w[q * n + q] += t * apq;
    w[p * n + q] = 0.0;
    w[q * n + p] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = w[k * n + p];
        let akq = w[k * n + q];
        let new_kp = akp - s * (akq + tau * akp);
        let new_kq = akq + s * (akp - tau * akq);
        w[k * n + p] = new_kp;
        w[p * n + k] = new_kp;
        w[k * n + q] = new_kq;
        w[q * n + k] = new_kq;
    }
}

/// Pseudo-inverse of a symmetric matrix: eigenvalues with
/// `|λ| < rel_tol · max|λ|` are treated as zero.
pub(crate) fn sym_pinv(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let eig = jacobi_eigen(a)?;
    let max = eig.values.amax();
    let n = a.nrows();
    let mut inv_vals = DVector::<f64>::zeros(n);
    for (i, &v) in eig.values.iter().enumerate() {
        if v.abs() > rel_tol * max && max > 0.0 {
            inv_vals[i] = 1.0 / v;
        }
    }
    let scaled = &eig.vectors * DMatrix::from_diagonal(&inv_vals);
    Ok(scaled * eig.vectors.transpose())
}

/// Relative Frobenius distance `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple_loop(a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
        let n = a.nrows();
        let mut y = DVector::zeros(n);
        for i in 0..n {
            for j in 0..n {
                y[i] += a[(i, j)] * x[j];
            }
        }
        y
    }

    fn lcg_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(n, n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn stored_symmetric_exactly() {
        let m = lcg_matrix(7, 3);
        let s = DenseSym::from_matrix(m).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(s.get(i, j), s.get(j, i));
            }
        }
    }

    #[test]
    fn checked_constructor_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        assert!(matches!(
            DenseSym::from_matrix_checked(m, 1e-12),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn cholesky_diag_square_roots() {
        let a = DenseSym::from_diagonal(&[4.0, 9.0]);
        let c = Cholesky::new(a.as_matrix()).unwrap();
        assert_eq!(c.factor()[(0, 0)], 2.0);
        assert_eq!(c.factor()[(1, 1)], 3.0);
        assert_eq!(c.factor()[(1, 0)], 0.0);
    }

    #[test]
    fn cholesky_identity() {
        let c = Cholesky::new(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(c.factor(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn cholesky_random_spd_reconstructs() {
        let m = lcg_matrix(10, 11);
        let a = m.transpose() * &m + DMatrix::identity(10, 10);
        let c = Cholesky::new(&a).unwrap();
        let rec = c.factor() * c.factor().transpose();
        assert!((rec - &a).norm() <= 1e-12 * a.norm());
        let x = DVector::from_fn(10, |i, _| i as f64 - 3.0);
        let y = c.solve(&(&a * &x));
        assert!((y - x).norm() < 1e-10);
    }

    #[test]
    fn cholesky_reports_pivot_index() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0]);
        match Cholesky::new(&a) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dense_multiply_matches_triple_loop() {
        let a = DenseSym::from_matrix(lcg_matrix(8, 5)).unwrap();
        let x = DVector::from_fn(8, |i, _| (i as f64).sin());
        let y = a.as_matrix() * &x;
        assert!((y - triple_loop(a.as_matrix(), &x)).amax() <= 1e-13);
    }

    #[test]
    fn jacobi_diagonal_input() {
        let a = DenseSym::from_diagonal(&[0.25, 1.0, 0.0, 0.5, 0.1, 0.0]);
        let e = dense_eig_sym(&a).unwrap();
        let expected = [1.0, 0.5, 0.25, 0.1, 0.0, 0.0];
        for (v, x) in e.values.iter().zip(expected) {
            assert_eq!(*v, x);
        }
        // columns are a permutation of the identity; tied zeros keep index order
        assert_eq!(e.vectors[(1, 0)], 1.0);
        assert_eq!(e.vectors[(3, 1)], 1.0);
        assert_eq!(e.vectors[(0, 2)], 1.0);
        assert_eq!(e.vectors[(4, 3)], 1.0);
        assert_eq!(e.vectors[(2, 4)], 1.0);
        assert_eq!(e.vectors[(5, 5)], 1.0);
    }

    #[test]
    fn jacobi_identity() {
        let e = dense_eig_sym(&DenseSym::identity(4)).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn jacobi_random_reconstruction_and_residuals() {
        let a = DenseSym::from_matrix(lcg_matrix(12, 99)).unwrap();
        let e = dense_eig_sym(&a).unwrap();
        let norm2 = e.values.amax();
        for k in 0..12 {
            let v = e.vectors.column(k);
            let r = a.as_matrix() * v - v * e.values[k];
            assert!(r.norm() <= 1e-10 * norm2);
        }
        assert!((e.reconstruct() - a.as_matrix()).norm() <= 1e-12 * a.as_matrix().norm());
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - DMatrix::<f64>::identity(12, 12)).amax() < 1e-13);
        for k in 1..12 {
            assert!(e.values[k - 1] >= e.values[k]);
        }
    }

    #[test]
    fn pinv_drops_null_space() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 1e-20]));
        let p = sym_pinv(&a, 1e-12).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
        assert_eq!(p[(2, 2)], 0.0);
    }
}
