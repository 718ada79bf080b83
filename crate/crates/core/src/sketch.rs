//! Low-rank symmetric PSD approximations: truncated EVD, randomized EVD with
//! optional power iterations, Nyström in raw and QR-of-sketch form, and the
//! single-pass variant.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::{jacobi_eigen, sym_pinv, DenseSym, Operator};
use crate::rng::GaussianStream;

/// Relative cut below which the Nyström core's eigenvalues are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-12;
/// Computed eigenvalues in `(-NEG_CLAMP_TOL·λ₁, 0)` are rounded to zero.
pub const NEG_CLAMP_TOL: f64 = 1e-10;
/// Strict range finder rejects `|R_ii| < RANK_TOL · max|R_jj|`.
pub const RANK_TOL: f64 = 1e-14;
/// Single-pass core `ΘᵀΩ` is rejected above this condition estimate.
pub const SINGLE_PASS_COND_MAX: f64 = 1e12;

/// Rank-`r` PSD matrix `U diag(λ) Uᵀ` with orthonormal `U`, values descending.
#[derive(Debug, Clone)]
pub struct LowRankEig {
    basis: DMatrix<f64>,
    values: DVector<f64>,
    /// How many slightly negative eigenvalues were rounded to zero.
    pub clamped: usize,
}

impl LowRankEig {
    /// Builds from a basis and values; values are sorted descending (with the
    /// basis columns permuted accordingly).
    pub fn new(basis: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if basis.ncols() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.ncols(),
                got: values.len(),
            });
        }
        if let Some(&v) = values.iter().find(|v| **v < 0.0 || !v.is_finite()) {
            return Err(Error::IndefiniteInput { value: v, tolerance: 0.0 });
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
        let basis = DMatrix::from_fn(basis.nrows(), order.len(), |i, k| basis[(i, order[k])]);
        let values = DVector::from_iterator(order.len(), order.iter().map(|&i| values[i]));
        Ok(Self { basis, values, clamped: 0 })
    }

    /// The zero matrix of dimension `n` (rank 0).
    pub fn zero(n: usize) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
            values: DVector::zeros(0),
            clamped: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// `F = U Λ^{1/2}` so that the represented matrix is `F Fᵀ`.
    pub fn factor(&self) -> DMatrix<f64> {
        let mut f = self.basis.clone();
        for (mut col, v) in f.column_iter_mut().zip(self.values.iter()) {
            col *= v.sqrt();
        }
        f
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let f = self.factor();
        &f * f.transpose()
    }

    pub fn to_sym(&self) -> DenseSym {
        DenseSym::from_matrix(self.to_dense()).expect("square by construction")
    }

    /// Keeps the leading `r` pairs.
    pub fn truncate(mut self, r: usize) -> Self {
        if r < self.rank() {
            self.basis = self.basis.columns(0, r).into_owned();
            self.values = self.values.rows(0, r).into_owned();
        }
        self
    }

    /// `‖UᵀU − I‖_max`.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.rank();
        if r == 0 {
            return 0.0;
        }
        (self.basis.tr_mul(&self.basis) - DMatrix::<f64>::identity(r, r)).amax()
    }
}

/// Target rank, oversampling, power iterations and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchConfig {
    pub rank: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
    /// Gaussian stream index (trial number) under `seed`.
    pub stream: u64,
}

impl SketchConfig {
    pub fn new(rank: usize, oversampling: usize, power_iterations: usize, seed: u64) -> Self {
        Self {
            rank,
            oversampling,
            power_iterations,
            seed,
            stream: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn sketch_size(&self) -> usize {
        self.rank + self.oversampling
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("sketch rank must be at least 1".into()));
        }
        if self.sketch_size() > n {
            return Err(Error::InvalidArgument(format!(
                "rank + oversampling = {} exceeds dimension {n}",
                self.sketch_size()
            )));
        }
        Ok(())
    }

    fn test_matrix(&self, n: usize) -> DMatrix<f64> {
        GaussianStream::new(self.seed, self.stream).matrix(n, self.sketch_size())
    }
}

/// `n × k` standard Gaussian test matrix from stream 0 of `seed`.
pub fn gaussian_test_matrix(n: usize, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    gaussian_test_matrix_stream(n, k, seed, 0)
}

pub fn gaussian_test_matrix_stream(n: usize, k: usize, seed: u64, stream: u64) -> Result<DMatrix<f64>> {
    if k > n {
        return Err(Error::InvalidArgument(format!("test matrix has {k} columns but only {n} rows")));
    }
    Ok(GaussianStream::new(seed, stream).matrix(n, k))
}

/// Rank-`r` eigen-truncation of a dense PSD matrix.
pub fn truncated_evd(g: &DenseSym, r: usize) -> Result<LowRankEig> {
    if r > g.dim() {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds dimension {}", g.dim())));
    }
    let eig = jacobi_eigen(g.as_matrix())?;
    let lambda1 = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let smallest = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < -NEG_CLAMP_TOL * lambda1 {
        return Err(Error::IndefiniteInput {
            value: smallest,
            tolerance: -NEG_CLAMP_TOL * lambda1,
        });
    }
    let values = DVector::from_iterator(r, eig.values.iter().take(r).map(|v| v.max(0.0)));
    Ok(LowRankEig {
        basis: eig.vectors.columns(0, r).into_owned(),
        values,
        clamped: 0,
    })
}

/// Materializes `g` (n products) and truncates its eigendecomposition.
pub fn truncated_evd_op(g: &Operator, r: usize) -> Result<LowRankEig> {
    truncated_evd(&DenseSym::from_matrix(g.to_dense())?, r)
}

/// Thin Householder QR; returns `(Θ, |diag R|)`.
fn thin_qr(y: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let k = y.ncols().min(y.nrows());
    let qr = y.clone().qr();
    let r = qr.r();
    let diag = (0..k).map(|i| r[(i, i)].abs()).collect();
    (qr.q(), diag)
}

fn check_rank(diag: &[f64]) -> Result<()> {
    let max = diag.iter().copied().fold(0.0f64, f64::max);
    for (index, &value) in diag.iter().enumerate() {
        if !(value >= RANK_TOL * max) || max == 0.0 {
            return Err(Error::RankDeficientSketch { index, value });
        }
    }
    Ok(())
}

/// Orthonormal basis of `(G Gᵀ)^q G Ω`, re-orthonormalizing after every
/// product. Consumes exactly `(2q+1)·k` products with `G`.
fn power_range(g: &Operator, omega: &DMatrix<f64>, q: usize, strict: bool) -> Result<DMatrix<f64>> {
    let (mut theta, diag) = thin_qr(&g.apply_block(omega)?);
    if strict {
        check_rank(&diag)?;
    }
    for _ in 0..2 * q {
        let (next, diag) = thin_qr(&g.apply_block(&theta)?);
        if strict {
            check_rank(&diag)?;
        }
        theta = next;
    }
    Ok(theta)
}

/// Range finder `Θ = orth((G Gᵀ)^q G Ω)` with a fresh `n × k` Gaussian `Ω`.
pub fn range_finder(g: &Operator, k: usize, q: usize, seed: u64) -> Result<DMatrix<f64>> {
    let omega = gaussian_test_matrix(g.dim(), k, seed)?;
    range_finder_with(g, &omega, q)
}

/// Range finder for a caller-supplied test matrix. Fails on a numerically
/// rank-deficient sketch.
pub fn range_finder_with(g: &Operator, omega: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    power_range(g, omega, q, true)
}

/// Eigen-form of the symmetric `k × k` matrix `core`, lifted by `lift`
/// (`U = lift · Ṽ`), truncated to `r` and clamped to be PSD.
fn lift_eigen(core: &DMatrix<f64>, lift: &DMatrix<f64>, r: usize) -> Result<LowRankEig> {
    let core = DenseSym::from_matrix(core.clone())?;
    let eig = jacobi_eigen(core.as_matrix())?;
    let r = r.min(eig.values.len());
    let lambda1 = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut clamped = 0;
    let mut values = DVector::zeros(r);
    for i in 0..r {
        let v = eig.values[i];
        if v < 0.0 {
            if v < -NEG_CLAMP_TOL * lambda1 {
                return Err(Error::IndefiniteInput {
                    value: v,
                    tolerance: -NEG_CLAMP_TOL * lambda1,
                });
            }
            clamped += 1;
        }
        values[i] = v.max(0.0);
    }
    if clamped > 0 {
        warn!("clamped {clamped} slightly negative eigenvalue(s) to zero");
    }
    let basis = lift * eig.vectors.columns(0, r);
    Ok(LowRankEig { basis, values, clamped })
}

/// Randomized EVD of a PSD operator: sketch `r + p` columns, power-iterate
/// `q` times, project, eigendecompose and keep the `r` leading pairs.
///
/// Uses `(2q+1)(r+p) + (r+p)` products with `g`.
pub fn randomized_evd(g: &Operator, cfg: &SketchConfig) -> Result<LowRankEig> {
    cfg.validate(g.dim())?;
    randomized_evd_with(g, &cfg.test_matrix(g.dim()), cfg.rank, cfg.power_iterations)
}

/// Randomized EVD with a caller-supplied test matrix.
///
/// A rank-deficient sketch is not an error here: the Householder basis stays
/// orthonormal and the surplus directions receive (near) zero eigenvalues.
pub fn randomized_evd_with(g: &Operator, omega: &DMatrix<f64>, rank: usize, q: usize) -> Result<LowRankEig> {
    let theta = power_range(g, omega, q, false)?;
    let g_theta = g.apply_block(&theta)?;
    let core = theta.tr_mul(&g_theta);
    lift_eigen(&core, &theta, rank)
}

/// Which basis the Nyström approximation is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NystromRange {
    /// `(GΩ)(ΩᵀGΩ)⁺(GΩ)ᵀ`
    Raw,
    /// Same formula with `Ω` replaced by `Θ = qr(GΩ)` (one extra pass).
    QrOfSketch,
}

/// Nyström approximation of a PSD operator with a fresh Gaussian `Ω` of
/// `r + p` columns, truncated to rank `r`.
pub fn nystrom(g: &Operator, cfg: &SketchConfig, mode: NystromRange) -> Result<LowRankEig> {
    cfg.validate(g.dim())?;
    nystrom_with(g, &cfg.test_matrix(g.dim()), cfg.rank, mode)
}

/// Nyström approximation for a caller-supplied test matrix.
pub fn nystrom_with(g: &Operator, omega: &DMatrix<f64>, rank: usize, mode: NystromRange) -> Result<LowRankEig> {
    let first = g.apply_block(omega)?;
    if first.amax() == 0.0 {
        return Err(Error::ZeroSketch);
    }
    let (sketch, y) = match mode {
        NystromRange::Raw => (omega.clone(), first),
        NystromRange::QrOfSketch => {
            let (theta, _) = thin_qr(&first);
            let y = g.apply_block(&theta)?;
            (theta, y)
        }
    };
    nystrom_from_sketch(&sketch, &y, rank)
}

/// Eigen-form of `Y C⁺ Yᵀ` with `C = ΩᵀY`.
fn nystrom_from_sketch(omega: &DMatrix<f64>, y: &DMatrix<f64>, rank: usize) -> Result<LowRankEig> {
    let core = DenseSym::from_matrix(omega.tr_mul(y))?;
    let core_pinv = sym_pinv(core.as_matrix(), PINV_REL_TOL)?;
    let qr = y.clone().qr();
    let (q_y, r_y) = (qr.q(), qr.r());
    let middle = &r_y * core_pinv * r_y.transpose();
    lift_eigen(&middle, &q_y, rank)
}

/// Single-pass randomized EVD: one block product `Y = GΩ` (`r` columns),
/// then `Π` from `Π (ΘᵀΩ) = ΘᵀY`, symmetrized.
pub fn single_pass_evd(g: &Operator, r: usize, seed: u64) -> Result<LowRankEig> {
    if r == 0 || r > g.dim() {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={}", g.dim())));
    }
    let omega = gaussian_test_matrix(g.dim(), r, seed)?;
    single_pass_evd_with(g, &omega)
}

pub fn single_pass_evd_with(g: &Operator, omega: &DMatrix<f64>) -> Result<LowRankEig> {
    let y = g.apply_block(omega)?;
    let (theta, _) = thin_qr(&y);
    let t = theta.tr_mul(omega);
    let sv = t.clone().singular_values();
    let smax = sv.amax();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= SINGLE_PASS_COND_MAX) {
        return Err(Error::IllConditionedCore { condition });
    }
    let rhs = theta.tr_mul(&y);
    // Π T = rhs  ⇔  Tᵀ Πᵀ = rhsᵀ
    let pi_t = t
        .transpose()
        .lu()
        .solve(&rhs.transpose())
        .ok_or(Error::IllConditionedCore { condition })?;
    let pi = pi_t.transpose();
    let pi = (&pi + pi.transpose()) * 0.5;
    lift_eigen(&pi, &theta, omega.ncols())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psd(n: usize, rank: usize, seed: u64) -> DenseSym {
        let f = GaussianStream::new(seed, 0).matrix(n, rank);
        DenseSym::from_matrix(&f * f.transpose()).unwrap()
    }

    #[test]
    fn truncated_evd_diagonal_example() {
        let g = DenseSym::from_diagonal(&[0.9091, 0.4762, 0.6667, 2.0, 0.0, 0.0]);
        let t = truncated_evd(&g, 2).unwrap();
        assert_eq!(t.values().as_slice(), &[2.0, 0.9091]);
        assert_eq!(t.basis()[(3, 0)].abs(), 1.0);
        assert_eq!(t.basis()[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn truncated_evd_full_rank_recovers() {
        let g = psd(9, 9, 1);
        let t = truncated_evd(&g, 9).unwrap();
        assert!((t.to_dense() - g.as_matrix()).amax() <= 1e-10 * g.as_matrix().amax());
    }

    #[test]
    fn truncated_evd_rejects_indefinite() {
        let g = DenseSym::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(truncated_evd(&g, 1), Err(Error::IndefiniteInput { .. })));
    }

    #[test]
    fn test_matrix_requires_k_le_n() {
        assert!(gaussian_test_matrix(3, 4, 0).is_err());
        assert_eq!(gaussian_test_matrix(4, 2, 9).unwrap(), gaussian_test_matrix(4, 2, 9).unwrap());
    }

    #[test]
    fn range_finder_identity_and_products() {
        let n = 12;
        let g = Operator::identity(n);
        for q in 0..3 {
            g.reset_products();
            let theta = range_finder(&g, 5, q, 3).unwrap();
            assert_eq!(g.products(), ((2 * q + 1) * 5) as u64);
            let proj = &theta * theta.transpose();
            let resid = DMatrix::<f64>::identity(n, n) - proj;
            assert!((resid.norm_squared() - (n - 5) as f64).abs() < 1e-10);
            assert!((theta.tr_mul(&theta) - DMatrix::<f64>::identity(5, 5)).amax() < 1e-10);
        }
    }

    #[test]
    fn range_finder_rank_deficient_is_error() {
        let g = Operator::from_sym(&psd(10, 2, 4));
        assert!(matches!(range_finder(&g, 4, 0, 1), Err(Error::RankDeficientSketch { .. })));
        let theta = range_finder(&g, 2, 0, 1).unwrap();
        let gd = g.to_dense();
        assert!((&gd - &theta * theta.tr_mul(&gd)).norm() <= 1e-10 * gd.norm());
    }

    #[test]
    fn randomized_evd_zero_operator() {
        let g = Operator::zero(8);
        let e = randomized_evd(&g, &SketchConfig::new(3, 1, 1, 0)).unwrap();
        assert!(e.values().iter().all(|v| *v == 0.0));
        assert!(e.orthonormality_error() < 1e-10);
    }

    #[test]
    fn randomized_evd_exact_for_low_rank() {
        let g = DenseSym::from_diagonal(&[3.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0]);
        let op = Operator::from_sym(&g);
        let cfg = SketchConfig::new(2, 2, 0, 5);
        let e = randomized_evd(&op, &cfg).unwrap();
        assert!((e.to_dense() - g.as_matrix()).amax() < 1e-8);
        assert_eq!(op.products() as usize, cfg.sketch_size() * 2);
    }

    #[test]
    fn nystrom_formula_cases() {
        let g = Operator::from_sym(&DenseSym::from_diagonal(&[2.0, 1.0]));
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let nys = nystrom_with(&g, &e1, 1, NystromRange::Raw).unwrap();
        let d = nys.to_dense();
        assert!((d[(0, 0)] - 2.0).abs() < 1e-14 && d[(1, 1)].abs() < 1e-14 && d[(0, 1)].abs() < 1e-14);

        let dense = psd(6, 6, 2);
        let op = Operator::from_sym(&dense);
        let full = nystrom_with(&op, &DMatrix::identity(6, 6), 6, NystromRange::Raw).unwrap();
        assert!((full.to_dense() - dense.as_matrix()).amax() < 1e-10 * dense.as_matrix().amax());
    }

    #[test]
    fn nystrom_zero_sketch() {
        let g = Operator::zero(4);
        assert_eq!(
            nystrom(&g, &SketchConfig::new(2, 0, 0, 1), NystromRange::Raw).unwrap_err(),
            Error::ZeroSketch
        );
    }

    #[test]
    fn single_pass_identity() {
        let g = Operator::identity(10);
        let e = single_pass_evd(&g, 4, 3).unwrap();
        for v in e.values().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pass_exact_low_rank() {
        let dense = psd(12, 3, 8);
        let op = Operator::from_sym(&dense);
        let e = single_pass_evd(&op, 3, 2).unwrap();
        assert!((e.to_dense() - dense.as_matrix()).norm() <= 1e-8 * dense.as_matrix().norm());
        assert_eq!(op.products(), 3);
    }

    #[test]
    fn low_rank_sorts_and_validates() {
        let basis = DMatrix::identity(3, 2);
        let e = LowRankEig::new(basis, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(e.values().as_slice(), &[2.0, 1.0]);
        assert_eq!(e.basis()[(1, 0)], 1.0);
        assert!(LowRankEig::new(DMatrix::identity(3, 1), DVector::from_vec(vec![-1.0])).is_err());
        assert_eq!(LowRankEig::zero(4).to_dense(), DMatrix::<f64>::zeros(4, 4));
    }

    #[test]
    fn config_validation() {
        assert!(SketchConfig::new(0, 0, 0, 0).validate(5).is_err());
        assert!(SketchConfig::new(4, 2, 0, 0).validate(5).is_err());
        assert!(SketchConfig::new(4, 1, 0, 0).validate(5).is_ok());
    }
}
