//! Matrix-free symmetric operators, dense fallbacks and SPD factor handles.
//!
//! Everything downstream interacts with `S`, `B` and `G = Q⁻¹ B Q⁻ᵀ` through
//! [`Operator`], which only promises matrix-vector products and counts them.

mod dense;
mod factor;
pub mod mm;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use dense::{dense_eig_sym, rel_frobenius, Cholesky, DenseSym, SymEigen};
pub(crate) use dense::{back_substitute_transposed, forward_substitute, jacobi_eigen, sym_pinv};
pub use factor::{cholesky_factor, CholeskyFactor, DiagonalFactor, EigenSqrtFactor, FactoredSpd};

use crate::error::{Error, Result};

/// How an operator computes its products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Dense,
    Diagonal,
    Composed,
    Callback,
}

type Callback = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

enum Kind {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
    /// Applied first to last.
    Chain(Vec<Arc<Operator>>),
    Sum(Vec<Arc<Operator>>),
    Callback(Box<Callback>),
}

/// Opaque `n × n` linear operator with an atomic product counter.
pub struct Operator {
    dim: usize,
    symmetric: bool,
    kind: Kind,
    products: AtomicU64,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator")
            .field("dim", &self.dim)
            .field("flavor", &self.flavor())
            .field("symmetric", &self.symmetric)
            .field("products", &self.products())
            .finish()
    }
}

impl Operator {
    fn with_kind(dim: usize, symmetric: bool, kind: Kind) -> Self {
        Self {
            dim,
            symmetric,
            kind,
            products: AtomicU64::new(0),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(DVector::from_element(n, 1.0))
    }

    pub fn zero(n: usize) -> Self {
        Self::diagonal(DVector::zeros(n))
    }

    pub fn diagonal(d: DVector<f64>) -> Self {
        Self::with_kind(d.len(), true, Kind::Diagonal(d))
    }

    pub fn from_sym(a: &DenseSym) -> Self {
        Self::with_kind(a.dim(), true, Kind::Dense(a.as_matrix().clone()))
    }

    /// Wraps a square matrix. `symmetric` is a promise made by the caller.
    pub fn dense(m: DMatrix<f64>, symmetric: bool) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        Ok(Self::with_kind(m.nrows(), symmetric, Kind::Dense(m)))
    }

    pub fn from_fn<F>(dim: usize, symmetric: bool, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::with_kind(dim, symmetric, Kind::Callback(Box::new(f)))
    }

    /// `x ↦ ops[k-1](… ops[0](x))`. Symmetric only if flagged by the caller.
    pub fn chain(ops: Vec<Arc<Operator>>, symmetric: bool) -> Result<Self> {
        let dim = common_dim(&ops)?;
        Ok(Self::with_kind(dim, symmetric, Kind::Chain(ops)))
    }

    /// `x ↦ Σ ops[k](x)`.
    pub fn sum(ops: Vec<Arc<Operator>>) -> Result<Self> {
        let dim = common_dim(&ops)?;
        let symmetric = ops.iter().all(|o| o.symmetric);
        Ok(Self::with_kind(dim, symmetric, Kind::Sum(ops)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn flavor(&self) -> Flavor {
        match self.kind {
            Kind::Dense(_) => Flavor::Dense,
            Kind::Diagonal(_) => Flavor::Diagonal,
            Kind::Chain(_) | Kind::Sum(_) => Flavor::Composed,
            Kind::Callback(_) => Flavor::Callback,
        }
    }

    /// Number of operator-vector products taken so far.
    pub fn products(&self) -> u64 {
        self.products.load(Ordering::Relaxed)
    }

    pub fn reset_products(&self) {
        self.products.store(0, Ordering::Relaxed);
    }

    pub fn matvec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x.len())?;
        let mut y = DVector::zeros(self.dim);
        self.apply_unchecked(x.as_slice(), y.as_mut_slice());
        Ok(y)
    }

    /// `y ← op(x)` on raw slices.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check(x.len())?;
        self.check(y.len())?;
        self.apply_unchecked(x, y);
        Ok(())
    }

    /// Applies the operator to every column of `x`; counts one product per
    /// column.
    pub fn apply_block(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x.nrows())?;
        if let Kind::Dense(m) = &self.kind {
            self.products.fetch_add(x.ncols() as u64, Ordering::Relaxed);
            return Ok(m * x);
        }
        let mut y = DMatrix::zeros(self.dim, x.ncols());
        for (xc, mut yc) in x.column_iter().zip(y.column_iter_mut()) {
            let xs: Vec<f64> = xc.iter().copied().collect();
            self.apply_unchecked(&xs, yc.as_mut_slice());
        }
        Ok(y)
    }

    /// Materializes the operator column by column (`n` products).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut e = vec![0.0; self.dim];
        for j in 0..self.dim {
            e[j] = 1.0;
            let mut col = m.column_mut(j);
            self.apply_unchecked(&e, col.as_mut_slice());
            e[j] = 0.0;
        }
        m
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64], y: &mut [f64]) {
        self.products.fetch_add(1, Ordering::Relaxed);
        match &self.kind {
            Kind::Dense(m) => {
                y.iter_mut().for_each(|v| *v = 0.0);
                for (j, &xj) in x.iter().enumerate() {
                    if xj != 0.0 {
                        for (yi, mij) in y.iter_mut().zip(m.column(j).iter()) {
                            *yi += mij * xj;
                        }
                    }
                }
            }
            Kind::Diagonal(d) => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(d.iter()) {
                    *yi = di * xi;
                }
            }
            Kind::Chain(ops) => {
                let mut cur = x.to_vec();
                let mut next = vec![0.0; self.dim];
                for op in ops {
                    op.apply_unchecked(&cur, &mut next);
                    std::mem::swap(&mut cur, &mut next);
                }
                y.copy_from_slice(&cur);
            }
            Kind::Sum(ops) => {
                y.iter_mut().for_each(|v| *v = 0.0);
                let mut tmp = vec![0.0; self.dim];
                for op in ops {
                    op.apply_unchecked(x, &mut tmp);
                    for (yi, ti) in y.iter_mut().zip(&tmp) {
                        *yi += ti;
                    }
                }
            }
            Kind::Callback(f) => f(x, y),
        }
    }

    fn check(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

fn common_dim(ops: &[Arc<Operator>]) -> Result<usize> {
    let first = ops
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty operator list".into()))?
        .dim;
    for op in ops {
        if op.dim != first {
            return Err(Error::DimensionMismatch {
                expected: first,
                got: op.dim,
            });
        }
    }
    Ok(first)
}

/// `G = Q⁻¹ B Q⁻ᵀ` as a matrix-free operator.
pub fn whitened_operator(q: Arc<dyn FactoredSpd>, b: Arc<Operator>) -> Result<Operator> {
    if q.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: b.dim(),
        });
    }
    let n = q.dim();
    Ok(Operator::from_fn(n, true, move |x, y| {
        let t = q.factor_adjoint_solve(&DVector::from_column_slice(x));
        let mut bt = vec![0.0; n];
        b.apply_unchecked(t.as_slice(), &mut bt);
        let g = q.factor_solve(&DVector::from_vec(bt));
        y.copy_from_slice(g.as_slice());
    }))
}

/// Dense `Q⁻¹ B Q⁻ᵀ` from a dense `B`.
pub fn whitened_dense(q: &dyn FactoredSpd, b: &DenseSym) -> Result<DenseSym> {
    if q.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: b.dim(),
        });
    }
    let left = q.solve_block(b.as_matrix());
    // (Q⁻¹ B) Q⁻ᵀ = (Q⁻¹ (Q⁻¹ B)ᵀ)ᵀ and B is symmetric.
    let both = q.solve_block(&left.transpose());
    DenseSym::from_matrix(both.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matvec() {
        let op = Operator::identity(3);
        let y = op.matvec(&DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_example_on_ones() {
        let d = [1.1, 1.05, 0.375, 0.05, 0.05, 0.05];
        let op = Operator::diagonal(DVector::from_column_slice(&d));
        let y = op.matvec(&DVector::from_element(6, 1.0)).unwrap();
        assert_eq!(y.as_slice(), &d);
        assert_eq!(op.flavor(), Flavor::Diagonal);
    }

    #[test]
    fn dimension_mismatch_reports_both() {
        let op = Operator::identity(3);
        let err = op.matvec(&DVector::zeros(4)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, got: 4 });
    }

    #[test]
    fn counter_is_exact() {
        let op = Operator::identity(5);
        let x = DVector::from_element(5, 1.0);
        for _ in 0..7 {
            op.matvec(&x).unwrap();
        }
        assert_eq!(op.products(), 7);
        op.apply_block(&DMatrix::zeros(5, 3)).unwrap();
        assert_eq!(op.products(), 10);
    }

    #[test]
    fn chain_and_sum() {
        let a = Arc::new(Operator::diagonal(DVector::from_vec(vec![1.0, 2.0])));
        let b = Arc::new(Operator::dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), true).unwrap());
        let ab = Operator::chain(vec![b.clone(), a.clone()], false).unwrap();
        let y = ab.matvec(&DVector::from_vec(vec![3.0, 5.0])).unwrap();
        assert_eq!(y.as_slice(), &[5.0, 6.0]);
        let s = Operator::sum(vec![a.clone(), b.clone()]).unwrap();
        let y = s.matvec(&DVector::from_vec(vec![3.0, 5.0])).unwrap();
        assert_eq!(y.as_slice(), &[8.0, 13.0]);
        assert_eq!(a.products(), 2);
        assert!(Operator::sum(vec![a, Arc::new(Operator::identity(3))]).is_err());
    }
}
