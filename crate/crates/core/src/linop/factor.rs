use nalgebra::{DMatrix, DVector};

use super::dense::{back_substitute_transposed, forward_substitute, Cholesky, DenseSym};
use crate::error::{Error, Result};

/// An SPD matrix `A = Q Qᵀ` known only through its factor `Q`.
///
/// `Q` need not be triangular; any invertible factor with cheap products and
/// solves will do.
pub trait FactoredSpd: Send + Sync {
    fn dim(&self) -> usize;
    /// `Q x`
    fn factor_apply(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `Qᵀ x`
    fn factor_adjoint_apply(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `Q⁻¹ x`
    fn factor_solve(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `Q⁻ᵀ x`
    fn factor_adjoint_solve(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `A x = Q Qᵀ x`
    fn spd_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.factor_apply(&self.factor_adjoint_apply(x))
    }

    /// `A⁻¹ x = Q⁻ᵀ Q⁻¹ x`
    fn spd_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.factor_adjoint_solve(&self.factor_solve(x))
    }

    /// `Q⁻¹ X` column by column.
    fn solve_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        map_columns(x, |c| self.factor_solve(c))
    }

    /// `Q⁻ᵀ X` column by column.
    fn adjoint_solve_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        map_columns(x, |c| self.factor_adjoint_solve(c))
    }

    /// `Q X` column by column.
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        map_columns(x, |c| self.factor_apply(c))
    }

    /// Dense `A = Q Qᵀ` (for oracle use at small sizes).
    fn dense_spd(&self) -> DMatrix<f64> {
        let n = self.dim();
        let q = self.apply_block(&DMatrix::identity(n, n));
        &q * q.transpose()
    }
}

pub(crate) fn map_columns<F>(x: &DMatrix<f64>, f: F) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let col = f(&x.column(j).into_owned());
        out.set_column(j, &col);
    }
    out
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    chol: Cholesky,
}

/// Factorizes `a` as `L Lᵀ`.
pub fn cholesky_factor(a: &DenseSym) -> Result<CholeskyFactor> {
    Ok(CholeskyFactor {
        chol: Cholesky::new(a.as_matrix())?,
    })
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        self.chol.factor()
    }

    pub fn logdet(&self) -> f64 {
        self.chol.logdet()
    }
}

impl FactoredSpd for CholeskyFactor {
    fn dim(&self) -> usize {
        self.chol.dim()
    }

    fn factor_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.factor();
        l.lower_triangle() * x
    }

    fn factor_adjoint_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.factor();
        l.lower_triangle().transpose() * x
    }

    fn factor_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        forward_substitute(self.chol.factor(), y.as_mut_slice());
        y
    }

    fn factor_adjoint_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        back_substitute_transposed(self.chol.factor(), y.as_mut_slice());
        y
    }
}

/// `Q = diag(√a_ii)` for a diagonal `A`.
#[derive(Debug, Clone)]
pub struct DiagonalFactor {
    sqrt: DVector<f64>,
}

impl DiagonalFactor {
    pub fn new(diag: &[f64]) -> Result<Self> {
        for (index, &value) in diag.iter().enumerate() {
            if !(value > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: index, value });
            }
        }
        Ok(Self {
            sqrt: DVector::from_iterator(diag.len(), diag.iter().map(|d| d.sqrt())),
        })
    }

    pub fn sqrt_diagonal(&self) -> &DVector<f64> {
        &self.sqrt
    }
}

impl FactoredSpd for DiagonalFactor {
    fn dim(&self) -> usize {
        self.sqrt.len()
    }
    fn factor_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.sqrt)
    }
    fn factor_adjoint_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.sqrt)
    }
    fn factor_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_div(&self.sqrt)
    }
    fn factor_adjoint_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_div(&self.sqrt)
    }
}

/// Symmetric square root `Q = O Σ^{1/2} Oᵀ` of `A = O Σ Oᵀ` with orthogonal `O`.
#[derive(Debug, Clone)]
pub struct EigenSqrtFactor {
    basis: DMatrix<f64>,
    sqrt_values: DVector<f64>,
}

impl EigenSqrtFactor {
    pub fn new(basis: DMatrix<f64>, values: &DVector<f64>) -> Result<Self> {
        if basis.nrows() != basis.ncols() || basis.ncols() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.nrows(),
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: index, value });
            }
        }
        Ok(Self {
            basis,
            sqrt_values: values.map(f64::sqrt),
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    fn scale(&self, x: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut c = self.basis.tr_mul(x);
        if inverse {
            c.component_div_assign(&self.sqrt_values);
        } else {
            c.component_mul_assign(&self.sqrt_values);
        }
        &self.basis * c
    }
}

impl FactoredSpd for EigenSqrtFactor {
    fn dim(&self) -> usize {
        self.sqrt_values.len()
    }
    fn factor_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.scale(x, false)
    }
    fn factor_adjoint_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.scale(x, false)
    }
    fn factor_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.scale(x, true)
    }
    fn factor_adjoint_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.scale(x, true)
    }
    fn solve_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.basis.tr_mul(x);
        for (mut row, s) in c.row_iter_mut().zip(self.sqrt_values.iter()) {
            row /= *s;
        }
        &self.basis * c
    }
    fn adjoint_solve_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.solve_block(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DenseSym {
        let m = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        DenseSym::from_matrix(m.transpose() * &m + DMatrix::identity(n, n)).unwrap()
    }

    fn round_trip(q: &dyn FactoredSpd) {
        let n = q.dim();
        let x = DVector::from_fn(n, |i, _| (i as f64 * 0.7).cos());
        let y = q.factor_adjoint_solve(&q.factor_solve(&q.factor_apply(&q.factor_adjoint_apply(&x))));
        assert!((y - &x).norm() <= 1e-10 * x.norm());
        let z = q.factor_apply(&q.factor_solve(&x));
        assert!((z - &x).norm() <= 1e-10 * x.norm());
        assert!(x.dot(&q.spd_apply(&x)) > 0.0);
    }

    #[test]
    fn cholesky_factor_round_trip() {
        let a = spd(9);
        let q = cholesky_factor(&a).unwrap();
        round_trip(&q);
        assert!((q.dense_spd() - a.as_matrix()).norm() <= 1e-12 * a.as_matrix().norm());
    }

    #[test]
    fn diagonal_factor_round_trip() {
        let q = DiagonalFactor::new(&[1.1, 1.05, 0.375, 0.05, 0.05, 0.05]).unwrap();
        round_trip(&q);
        assert!(DiagonalFactor::new(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn eigen_sqrt_factor_round_trip() {
        let a = spd(8);
        let e = super::super::dense::dense_eig_sym(&a).unwrap();
        let q = EigenSqrtFactor::new(e.vectors.clone(), &e.values).unwrap();
        round_trip(&q);
        assert!((q.dense_spd() - a.as_matrix()).norm() <= 1e-11 * a.as_matrix().norm());
        let blk = q.solve_block(&DMatrix::identity(8, 8));
        let cols = map_columns(&DMatrix::identity(8, 8), |c| q.factor_solve(c));
        assert!((blk - cols).amax() < 1e-13);
    }
}
