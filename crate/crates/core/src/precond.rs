//! Preconditioners `P` exposed through `x ↦ P⁻¹ x`.
//!
//! The low-rank family shares one shape, `P = Q (I + W Wᵀ) Qᵀ`:
//!
//! * scaled `Ŝ = Q(I + G_r)Qᵀ` uses `W = U_G Λ_G^{1/2}`;
//! * nonscaled `S̃ = A + B_r` uses `W = Q⁻¹ U_B Λ_B^{1/2}`, because
//!   `A + F Fᵀ = Q(I + Q⁻¹F (Q⁻¹F)ᵀ)Qᵀ`.
//!
//! Both invert the middle factor with the Woodbury identity
//! `(I + W Wᵀ)⁻¹ = I − W (I_r + WᵀW)⁻¹ Wᵀ`, the `r × r` core being Cholesky
//! factored once at build time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{back_substitute_transposed, forward_substitute, Cholesky, DenseSym, FactoredSpd};
use crate::sketch::LowRankEig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    Identity,
    Scaled,
    Nonscaled,
    LiftedScaled,
    Jacobi,
    BlockJacobi,
    Sgs,
    PartialCholesky,
}

/// Work spent building a preconditioner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BuildStats {
    /// Products with the sketched operator (`G` or `B`).
    pub operator_products: u64,
    /// Applications of `Q⁻¹` or `Q⁻ᵀ` to vectors during the build.
    pub factor_solves: u64,
}

/// Contiguous diagonal blocks of sizes `n₁ … n_b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidArgument("block sizes must be positive".into()));
        }
        Ok(Self { sizes })
    }

    /// Blocks of size `block` with a shorter trailing block if needed.
    pub fn uniform(n: usize, block: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        let mut sizes = vec![block; n / block];
        if n % block != 0 {
            sizes.push(n % block);
        }
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn offsets(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect()
    }
}

enum Action {
    Identity,
    /// `P = Q (I + W Wᵀ) Qᵀ`
    Woodbury {
        q: Arc<dyn FactoredSpd>,
        w: DMatrix<f64>,
        core: Cholesky,
    },
    /// `P = Q (c I + U diag(d) Uᵀ) Qᵀ`, `U` orthonormal
    Lifted {
        q: Arc<dyn FactoredSpd>,
        shift: f64,
        basis: DMatrix<f64>,
        d: DVector<f64>,
    },
    Diagonal(DVector<f64>),
    Blocks {
        offsets: Vec<usize>,
        blocks: Vec<DMatrix<f64>>,
        factors: Vec<Cholesky>,
    },
    /// `(D + L) D⁻¹ (D + U)` read off the stored matrix.
    Sgs(DMatrix<f64>),
    /// `Π K blkdiag(I_r, D_schur) Kᵀ Πᵀ`, `K = [F₁₁ 0; F₂₁ I]`
    PartialCholesky {
        pivots: Vec<usize>,
        rest: Vec<usize>,
        f11: DMatrix<f64>,
        f21: DMatrix<f64>,
        schur: DVector<f64>,
    },
}

/// An SPD preconditioner, immutable after construction.
pub struct Preconditioner {
    dim: usize,
    kind: PreconditionerKind,
    rank_used: Option<usize>,
    build_stats: BuildStats,
    applications: AtomicU64,
    action: Action,
}

impl std::fmt::Debug for Preconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Preconditioner")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("rank_used", &self.rank_used)
            .field("build_stats", &self.build_stats)
            .finish()
    }
}

impl Preconditioner {
    fn new(dim: usize, kind: PreconditionerKind, rank_used: Option<usize>, action: Action) -> Self {
        Self {
            dim,
            kind,
            rank_used,
            build_stats: BuildStats::default(),
            applications: AtomicU64::new(0),
            action,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, PreconditionerKind::Identity, None, Action::Identity)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn rank_used(&self) -> Option<usize> {
        self.rank_used
    }

    pub fn build_stats(&self) -> BuildStats {
        self.build_stats
    }

    /// Records the sketch cost incurred by the caller before building.
    pub fn with_operator_products(mut self, products: u64) -> Self {
        self.build_stats.operator_products += products;
        self
    }

    /// Number of `P⁻¹` applications so far.
    pub fn applications(&self) -> u64 {
        self.applications.load(Ordering::Relaxed)
    }

    /// `P⁻¹ x`.
    pub fn inverse_apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x.len())?;
        self.applications.fetch_add(1, Ordering::Relaxed);
        Ok(self.inverse_unchecked(x))
    }

    /// `P x`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x.len())?;
        Ok(self.forward_unchecked(x))
    }

    /// Dense `P⁻¹`, symmetrized (oracle use, small `n`).
    pub fn dense_inverse(&self) -> DMatrix<f64> {
        self.dense_of(|x| self.inverse_unchecked(x))
    }

    /// Dense `P`, symmetrized.
    pub fn dense_form(&self) -> DMatrix<f64> {
        self.dense_of(|x| self.forward_unchecked(x))
    }

    fn dense_of<F: Fn(&DVector<f64>) -> DVector<f64>>(&self, f: F) -> DMatrix<f64> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            m.set_column(j, &f(&e));
            e[j] = 0.0;
        }
        (&m + m.transpose()) * 0.5
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

    fn inverse_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.action {
            Action::Identity => x.clone(),
            Action::Woodbury { q, w, core } => {
                let y = q.factor_solve(x);
                let z = if w.ncols() == 0 {
                    y
                } else {
                    let mut c = w.tr_mul(&y);
                    c = core.solve(&c);
                    y - w * c
                };
                q.factor_adjoint_solve(&z)
            }
            Action::Lifted { q, shift, basis, d } => {
                let y = q.factor_solve(x);
                let mut c = basis.tr_mul(&y);
                for (ci, di) in c.iter_mut().zip(d.iter()) {
                    *ci *= di / (shift + di);
                }
                let z = (y - basis * c) / *shift;
                q.factor_adjoint_solve(&z)
            }
            Action::Diagonal(d) => x.component_div(d),
            Action::Blocks { offsets, factors, .. } => {
                let mut y = x.clone();
                for (&start, chol) in offsets.iter().zip(factors) {
                    let len = chol.dim();
                    let seg = &mut y.as_mut_slice()[start..start + len];
                    chol.solve_lower_in_place(seg);
                    chol.solve_upper_in_place(seg);
                }
                y
            }
            Action::Sgs(s) => {
                let n = s.nrows();
                let mut y = x.clone();
                // (D + L) y = x
                for i in 0..n {
                    let mut v = y[i];
                    for j in 0..i {
                        v -= s[(i, j)] * y[j];
                    }
                    y[i] = v / s[(i, i)];
                }
                for i in 0..n {
                    y[i] *= s[(i, i)];
                }
                // (D + U) z = y
                for i in (0..n).rev() {
                    let mut v = y[i];
                    for j in (i + 1)..n {
                        v -= s[(i, j)] * y[j];
                    }
                    y[i] = v / s[(i, i)];
                }
                y
            }
            Action::PartialCholesky {
                pivots,
                rest,
                f11,
                f21,
                schur,
            } => {
                let mut y1: Vec<f64> = pivots.iter().map(|&i| x[i]).collect();
                forward_substitute(f11, &mut y1);
                let y1v = DVector::from_vec(y1);
                let mut y2 = DVector::from_iterator(rest.len(), rest.iter().map(|&i| x[i]));
                if !rest.is_empty() {
                    y2 -= f21 * &y1v;
                }
                let z2 = y2.component_div(schur);
                let mut w1 = y1v;
                if !rest.is_empty() {
                    w1 -= f21.tr_mul(&z2);
                }
                back_substitute_transposed(f11, w1.as_mut_slice());
                let mut out = DVector::zeros(self.dim);
                for (k, &i) in pivots.iter().enumerate() {
                    out[i] = w1[k];
                }
                for (k, &i) in rest.iter().enumerate() {
                    out[i] = z2[k];
                }
                out
            }
        }
    }

    fn forward_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.action {
            Action::Identity => x.clone(),
            Action::Woodbury { q, w, .. } => {
                let t = q.factor_adjoint_apply(x);
                let u = if w.ncols() == 0 { t } else { &t + w * w.tr_mul(&t) };
                q.factor_apply(&u)
            }
            Action::Lifted { q, shift, basis, d } => {
                let t = q.factor_adjoint_apply(x);
                let c = basis.tr_mul(&t).component_mul(d);
                q.factor_apply(&(&t * *shift + basis * c))
            }
            Action::Diagonal(d) => x.component_mul(d),
            Action::Blocks { offsets, blocks, .. } => {
                let mut y = DVector::zeros(self.dim);
                for (&start, b) in offsets.iter().zip(blocks) {
                    let len = b.nrows();
                    let seg = b * x.rows(start, len);
                    y.rows_mut(start, len).copy_from(&seg);
                }
                y
            }
            Action::Sgs(s) => {
                let n = s.nrows();
                // (D + U) x
                let mut t = DVector::zeros(n);
                for i in 0..n {
                    let mut v = 0.0;
                    for j in i..n {
                        v += s[(i, j)] * x[j];
                    }
                    t[i] = v / s[(i, i)];
                }
                // (D + L) t
                let mut y = DVector::zeros(n);
                for i in 0..n {
                    let mut v = 0.0;
                    for j in 0..=i {
                        v += s[(i, j)] * t[j];
                    }
                    y[i] = v;
                }
                y
            }
            Action::PartialCholesky {
                pivots,
                rest,
                f11,
                f21,
                schur,
            } => {
                let x1 = DVector::from_iterator(pivots.len(), pivots.iter().map(|&i| x[i]));
                let x2 = DVector::from_iterator(rest.len(), rest.iter().map(|&i| x[i]));
                let l11 = f11.lower_triangle();
                let mut t1 = l11.tr_mul(&x1);
                if !rest.is_empty() {
                    t1 += f21.tr_mul(&x2);
                }
                let t2 = x2.component_mul(schur);
                let u1 = &l11 * &t1;
                let mut u2 = t2;
                if !rest.is_empty() {
                    u2 += f21 * &t1;
                }
                let mut out = DVector::zeros(self.dim);
                for (k, &i) in pivots.iter().enumerate() {
                    out[i] = u1[k];
                }
                for (k, &i) in rest.iter().enumerate() {
                    out[i] = u2[k];
                }
                out
            }
        }
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn woodbury(q: Arc<dyn FactoredSpd>, w: DMatrix<f64>, kind: PreconditionerKind, rank: usize) -> Result<Preconditioner> {
    let r = w.ncols();
    let core_matrix = DMatrix::<f64>::identity(r, r) + w.tr_mul(&w);
    let core = Cholesky::new(&core_matrix)?;
    let n = q.dim();
    Ok(Preconditioner::new(n, kind, Some(rank), Action::Woodbury { q, w, core }))
}

/// `A` itself, i.e. `Q Qᵀ` (the `r = 0` member of both low-rank families).
pub fn build_factor_only(q: Arc<dyn FactoredSpd>) -> Preconditioner {
    let n = q.dim();
    Preconditioner::new(
        n,
        PreconditionerKind::Scaled,
        Some(0),
        Action::Woodbury {
            q,
            w: DMatrix::zeros(n, 0),
            core: Cholesky::new(&DMatrix::zeros(0, 0)).expect("empty core"),
        },
    )
}

/// Scaled preconditioner `Ŝ = Q (I + G_r) Qᵀ`.
pub fn build_scaled(q: Arc<dyn FactoredSpd>, gr: &LowRankEig) -> Result<Preconditioner> {
    check_dims(q.dim(), gr.dim())?;
    woodbury(q, gr.factor(), PreconditionerKind::Scaled, gr.rank())
}

/// Nonscaled preconditioner `S̃ = A + B_r` with `A = Q Qᵀ`.
pub fn build_nonscaled(q: Arc<dyn FactoredSpd>, br: &LowRankEig) -> Result<Preconditioner> {
    check_dims(q.dim(), br.dim())?;
    let w = q.solve_block(&br.factor());
    let solves = br.rank() as u64;
    let mut p = woodbury(q, w, PreconditionerKind::Nonscaled, br.rank())?;
    p.build_stats.factor_solves = solves;
    Ok(p)
}

/// Lifted scaled preconditioner `Q (I + G_r + α(I − U Uᵀ)) Qᵀ`.
///
/// Intended for `λ_n(G) ≤ α ≤ λ_{r+1}(G)`; the caller supplies `α`.
pub fn build_lifted_scaled(q: Arc<dyn FactoredSpd>, gr: &LowRankEig, alpha: f64) -> Result<Preconditioner> {
    check_dims(q.dim(), gr.dim())?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("lift α = {alpha} must be finite and nonnegative")));
    }
    let shift = 1.0 + alpha;
    // (1 + α) I + U (Λ − α) Uᵀ has eigenvalues 1 + λ_i on range(U).
    if let Some(&lam) = gr.values().iter().find(|&&l| !(1.0 + l > 0.0)) {
        return Err(Error::IndefiniteInput {
            value: 1.0 + lam,
            tolerance: 0.0,
        });
    }
    let d = gr.values().map(|l| l - alpha);
    let n = q.dim();
    Ok(Preconditioner::new(
        n,
        PreconditionerKind::LiftedScaled,
        Some(gr.rank()),
        Action::Lifted {
            q,
            shift,
            basis: gr.basis().clone(),
            d,
        },
    ))
}

/// Jacobi preconditioner from a diagonal.
pub fn build_jacobi_from_diagonal(diag: &[f64]) -> Result<Preconditioner> {
    for (index, &value) in diag.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveDiagonal { index, value });
        }
    }
    Ok(Preconditioner::new(
        diag.len(),
        PreconditionerKind::Jacobi,
        None,
        Action::Diagonal(DVector::from_column_slice(diag)),
    ))
}

/// Jacobi preconditioner `diag(S)`.
pub fn build_jacobi(s: &DenseSym) -> Result<Preconditioner> {
    build_jacobi_from_diagonal(s.diagonal().as_slice())
}

/// Block Jacobi `blkdiag(E₁ᵀ S E₁, …, E_bᵀ S E_b)`.
pub fn build_block_jacobi(s: &DenseSym, part: &BlockPartition) -> Result<Preconditioner> {
    check_dims(s.dim(), part.total())?;
    let offsets = part.offsets();
    let mut blocks = Vec::with_capacity(offsets.len());
    let mut factors = Vec::with_capacity(offsets.len());
    for (block, (&start, &len)) in offsets.iter().zip(part.sizes()).enumerate() {
        let b = s.as_matrix().view((start, start), (len, len)).into_owned();
        let chol = Cholesky::new(&b).map_err(|_| Error::BlockNotPositiveDefinite { block })?;
        blocks.push(b);
        factors.push(chol);
    }
    Ok(Preconditioner::new(
        s.dim(),
        PreconditionerKind::BlockJacobi,
        None,
        Action::Blocks { offsets, blocks, factors },
    ))
}

/// Symmetric Gauss–Seidel `(D + L) D⁻¹ (D + U)`.
pub fn build_sgs(s: &DenseSym) -> Result<Preconditioner> {
    for (index, &value) in s.diagonal().iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveDiagonal { index, value });
        }
    }
    Ok(Preconditioner::new(
        s.dim(),
        PreconditionerKind::Sgs,
        None,
        Action::Sgs(s.as_matrix().clone()),
    ))
}

/// Partial Cholesky with complete diagonal pivoting.
pub fn build_partial_cholesky(s: &DenseSym, r: usize) -> Result<Preconditioner> {
    let m = s.as_matrix();
    build_partial_cholesky_with(s.dim(), s.diagonal().as_slice(), r, |j| m.column(j).into_owned())
}

/// Partial Cholesky given the diagonal of `S` and a column oracle `j ↦ S e_j`
/// (only `r` columns are requested).
pub fn build_partial_cholesky_with<F>(n: usize, diag: &[f64], r: usize, column: F) -> Result<Preconditioner>
where
    F: Fn(usize) -> DVector<f64>,
{
    check_dims(n, diag.len())?;
    if r > n {
        return Err(Error::InvalidArgument(format!("partial Cholesky rank {r} exceeds {n}")));
    }
    let mut d = DVector::from_column_slice(diag);
    let mut chosen = vec![false; n];
    let mut pivots = Vec::with_capacity(r);
    let mut l = DMatrix::<f64>::zeros(n, r);
    for step in 0..r {
        let (p, &dp) = d
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen[*i])
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("step < n");
        if !(dp > 0.0) {
            return Err(Error::PartialCholeskyBreakdown { step, value: dp });
        }
        let root = dp.sqrt();
        let mut col = column(p);
        check_dims(n, col.len())?;
        for j in 0..step {
            let lpj = l[(p, j)];
            if lpj != 0.0 {
                col.axpy(-lpj, &l.column(j), 1.0);
            }
        }
        for i in 0..n {
            l[(i, step)] = if chosen[i] {
                0.0
            } else if i == p {
                root
            } else {
                col[i] / root
            };
        }
        chosen[p] = true;
        pivots.push(p);
        for i in 0..n {
            if !chosen[i] {
                d[i] -= l[(i, step)] * l[(i, step)];
            }
        }
    }
    let rest: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
    let mut schur = DVector::zeros(rest.len());
    for (k, &i) in rest.iter().enumerate() {
        if !(d[i] > 0.0) {
            return Err(Error::PartialCholeskyBreakdown { step: r, value: d[i] });
        }
        schur[k] = d[i];
    }
    let f11 = DMatrix::from_fn(r, r, |a, b| l[(pivots[a], b)]);
    let f21 = DMatrix::from_fn(rest.len(), r, |a, b| l[(rest[a], b)]);
    Ok(Preconditioner::new(
        n,
        PreconditionerKind::PartialCholesky,
        Some(r),
        Action::PartialCholesky {
            pivots,
            rest,
            f11,
            f21,
            schur,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{cholesky_factor, DiagonalFactor};
    use crate::rng::GaussianStream;

    fn spd(n: usize, seed: u64) -> DenseSym {
        let m = GaussianStream::new(seed, 0).matrix(n, n);
        DenseSym::from_matrix(m.transpose() * &m + DMatrix::identity(n, n)).unwrap()
    }

    fn dense_inverse_check(p: &Preconditioner, expanded: &DMatrix<f64>, tol: f64) {
        let inv = expanded.clone().try_inverse().unwrap();
        let mut g = GaussianStream::new(77, 0);
        for _ in 0..10 {
            let x = g.vector(p.dim());
            let got = p.inverse_apply(&x).unwrap();
            let want = &inv * &x;
            assert!((&got - &want).norm() <= tol * want.norm(), "{:?}", p.kind());
        }
    }

    #[test]
    fn jacobi_cases() {
        let p = build_jacobi(&DenseSym::from_diagonal(&[2.0, 4.0])).unwrap();
        let y = p.inverse_apply(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(y.as_slice(), &[0.5, 0.25]);
        let p = build_jacobi(&DenseSym::identity(3)).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.inverse_apply(&x).unwrap(), x);
        let s = spd(8, 1);
        let p = build_jacobi(&s).unwrap();
        let x = GaussianStream::new(1, 1).vector(8);
        let want = x.component_div(&s.diagonal());
        assert!((p.inverse_apply(&x).unwrap() - want).amax() < 1e-15);
        match build_jacobi(&DenseSym::from_diagonal(&[1.0, 0.0])) {
            Err(Error::NonPositiveDiagonal { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn block_jacobi_cases() {
        let s = spd(9, 2);
        let one = build_block_jacobi(&s, &BlockPartition::new(vec![9]).unwrap()).unwrap();
        let x = GaussianStream::new(2, 1).vector(9);
        let y = one.inverse_apply(&(s.as_matrix() * &x)).unwrap();
        assert!((y - &x).norm() < 1e-10 * x.norm());

        let ones = build_block_jacobi(&s, &BlockPartition::uniform(9, 1).unwrap()).unwrap();
        let jac = build_jacobi(&s).unwrap();
        assert!((ones.inverse_apply(&x).unwrap() - jac.inverse_apply(&x).unwrap()).amax() < 1e-14);

        let three = build_block_jacobi(&s, &BlockPartition::new(vec![3, 3, 3]).unwrap()).unwrap();
        let mut expanded = DMatrix::zeros(9, 9);
        for b in 0..3 {
            expanded
                .view_mut((3 * b, 3 * b), (3, 3))
                .copy_from(&s.as_matrix().view((3 * b, 3 * b), (3, 3)));
        }
        dense_inverse_check(&three, &expanded, 1e-10);
        assert!((three.dense_form() - expanded).amax() < 1e-14);

        assert!(build_block_jacobi(&s, &BlockPartition::new(vec![4, 4]).unwrap()).is_err());
        let bad = DenseSym::from_diagonal(&[1.0, 1.0, -1.0]);
        assert_eq!(
            build_block_jacobi(&bad, &BlockPartition::new(vec![2, 1]).unwrap()).unwrap_err(),
            Error::BlockNotPositiveDefinite { block: 1 }
        );
    }

    #[test]
    fn sgs_expansion() {
        let s = DenseSym::from_row_major(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let p = build_sgs(&s).unwrap();
        // (D+L) D⁻¹ (D+U) expanded by hand
        let dl = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2.0]);
        let dinv = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let du = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let expanded = &dl * dinv * du;
        assert_eq!(expanded, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.5]));
        assert!((p.dense_form() - &expanded).amax() < 1e-15);
        dense_inverse_check(&p, &expanded, 1e-12);

        let diag = DenseSym::from_diagonal(&[3.0, 1.0, 2.0]);
        assert!((build_sgs(&diag).unwrap().dense_form() - diag.as_matrix()).amax() < 1e-15);

        let s = spd(8, 3);
        let m = s.as_matrix();
        let d = DMatrix::from_diagonal(&s.diagonal());
        let lower = m.lower_triangle();
        let upper = m.upper_triangle();
        let expanded = &lower * d.clone().try_inverse().unwrap() * upper;
        dense_inverse_check(&build_sgs(&s).unwrap(), &expanded, 1e-10);
    }

    #[test]
    fn partial_cholesky_cases() {
        let s = DenseSym::from_diagonal(&[3.0, 2.0, 1.0]);
        let p = build_partial_cholesky(&s, 1).unwrap();
        assert!((p.dense_form() - s.as_matrix()).amax() < 1e-15);

        let s = spd(10, 4);
        let full = build_partial_cholesky(&s, 10).unwrap();
        assert!((full.dense_form() - s.as_matrix()).amax() < 1e-10 * s.as_matrix().amax());

        let p = build_partial_cholesky(&s, 4).unwrap();
        let expanded = p.dense_form();
        assert!(Cholesky::new(&expanded).is_ok());
        dense_inverse_check(&p, &expanded, 1e-9);
        // P keeps the diagonal of S
        assert!((expanded.diagonal() - s.diagonal()).amax() < 1e-10 * s.as_matrix().amax());
    }

    #[test]
    fn partial_cholesky_matches_independent_expansion() {
        // Oracle: unpivoted expansion after permuting S by the same pivots.
        let s = spd(7, 5);
        let r = 3;
        let p = build_partial_cholesky(&s, r).unwrap();
        let Action::PartialCholesky { pivots, rest, .. } = &p.action else { unreachable!() };
        let order: Vec<usize> = pivots.iter().chain(rest.iter()).copied().collect();
        let sp = DMatrix::from_fn(7, 7, |i, j| s.get(order[i], order[j]));
        let s11 = sp.view((0, 0), (r, r)).into_owned();
        let s21 = sp.view((r, 0), (7 - r, r)).into_owned();
        let s22 = sp.view((r, r), (7 - r, 7 - r)).into_owned();
        let c = Cholesky::new(&s11).unwrap();
        let f11 = c.factor().clone();
        let f21 = &s21 * f11.transpose().try_inverse().unwrap();
        let schur = &s22 - &s21 * s11.try_inverse().unwrap() * s21.transpose();
        let mut k = DMatrix::identity(7, 7);
        k.view_mut((0, 0), (r, r)).copy_from(&f11);
        k.view_mut((r, 0), (7 - r, r)).copy_from(&f21);
        let mut mid = DMatrix::identity(7, 7);
        for i in 0..7 - r {
            mid[(r + i, r + i)] = schur[(i, i)];
        }
        let pp = &k * mid * k.transpose();
        let dense = p.dense_form();
        let permuted = DMatrix::from_fn(7, 7, |i, j| dense[(order[i], order[j])]);
        assert!((permuted - pp).amax() < 1e-10);
        // pivot sequence follows the largest remaining Schur diagonal
        assert_eq!(pivots[0], s.diagonal().argmax().0);
    }

    #[test]
    fn scaled_with_zero_rank_is_a_solve() {
        let a = spd(6, 6);
        let q: Arc<dyn FactoredSpd> = Arc::new(cholesky_factor(&a).unwrap());
        let p = build_scaled(q.clone(), &LowRankEig::zero(6)).unwrap();
        let x = GaussianStream::new(6, 1).vector(6);
        let want = a.as_matrix().clone().try_inverse().unwrap() * &x;
        assert!((p.inverse_apply(&x).unwrap() - want).norm() < 1e-10 * x.norm());
        let p0 = build_nonscaled(q.clone(), &LowRankEig::zero(6)).unwrap();
        assert!((p0.dense_form() - a.as_matrix()).amax() < 1e-10);
        let base = build_factor_only(q);
        assert!((base.dense_form() - a.as_matrix()).amax() < 1e-10);
    }

    #[test]
    fn lifted_with_zero_alpha_matches_scaled() {
        let q: Arc<dyn FactoredSpd> = Arc::new(DiagonalFactor::new(&[1.0, 2.0, 0.5, 3.0]).unwrap());
        let gr = LowRankEig::new(DMatrix::identity(4, 2), DVector::from_vec(vec![2.0, 1.0])).unwrap();
        let a = build_scaled(q.clone(), &gr).unwrap();
        let b = build_lifted_scaled(q.clone(), &gr, 0.0).unwrap();
        let x = GaussianStream::new(5, 5).vector(4);
        assert!((a.inverse_apply(&x).unwrap() - b.inverse_apply(&x).unwrap()).amax() < 1e-12);
        assert!(build_lifted_scaled(q, &gr, -1.0).is_err());
    }

    #[test]
    fn dimension_checks() {
        let q: Arc<dyn FactoredSpd> = Arc::new(DiagonalFactor::new(&[1.0, 2.0]).unwrap());
        assert!(build_scaled(q.clone(), &LowRankEig::zero(3)).is_err());
        let p = build_scaled(q, &LowRankEig::zero(2)).unwrap();
        assert!(p.inverse_apply(&DVector::zeros(3)).is_err());
        assert!(BlockPartition::new(vec![2, 0]).is_err());
        assert_eq!(BlockPartition::uniform(7, 3).unwrap().sizes(), &[3, 3, 1]);
    }
}
