//! Bregman matrix divergences and the randomized suboptimality bounds.
//!
//! `D_LD(X, Y) = tr(X Y⁻¹) − log det(X Y⁻¹) − n` is the log-determinant
//! divergence; the first argument is the approximation and the second the
//! target, so preconditioner quality is `D_LD(P, S)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::{jacobi_eigen, Cholesky, DenseSym};

/// `D_LD` split into its trace and log-determinant parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub value: f64,
    /// `tr(X Y⁻¹)`
    pub trace_term: f64,
    /// `−log det(X Y⁻¹)`
    pub logdet_term: f64,
}

/// Scalar generator `φ(x) = x − log x − 1`.
pub fn scalar_ld(x: f64) -> f64 {
    x - x.ln() - 1.0
}

fn same_dim(x: &DenseSym, y: &DenseSym) -> Result<usize> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(x.dim())
}

/// `D_LD(X, Y)` via Cholesky factors of both arguments.
pub fn divergence_ld(x: &DenseSym, y: &DenseSym) -> Result<DivergenceReport> {
    let n = same_dim(x, y)?;
    let cx = Cholesky::new(x.as_matrix())?;
    let cy = Cholesky::new(y.as_matrix())?;
    let trace_term = cy.solve_matrix(x.as_matrix()).trace();
    let logdet_term = cy.logdet() - cx.logdet();
    Ok(DivergenceReport {
        value: trace_term + logdet_term - n as f64,
        trace_term,
        logdet_term,
    })
}

/// `Σ_{j>r} φ(1/(1+μ_j))`, the divergence `D_LD(Ŝ, S)` attained by the
/// rank-`r` scaled preconditioner, from the eigenvalues `μ` of `G`.
pub fn divergence_scaled_closed_form(mu: &[f64], r: usize) -> f64 {
    let mut sorted = mu.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sorted
        .iter()
        .skip(r)
        .map(|&m| scalar_ld(1.0 / (1.0 + m)))
        .sum()
}

/// Squared Frobenius divergence `‖X − Y‖_F²`.
pub fn divergence_frobenius(x: &DenseSym, y: &DenseSym) -> Result<f64> {
    same_dim(x, y)?;
    Ok((x.as_matrix() - y.as_matrix()).norm_squared())
}

fn spd_log(a: &DenseSym) -> Result<DMatrix<f64>> {
    let e = jacobi_eigen(a.as_matrix())?;
    if let Some((pivot, &value)) = e.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NotPositiveDefinite { pivot, value });
    }
    let logs = e.values.map(f64::ln);
    Ok(&e.vectors * DMatrix::from_diagonal(&logs) * e.vectors.transpose())
}

/// Von Neumann divergence `tr(X log X − X log Y − X + Y)`.
pub fn divergence_von_neumann(x: &DenseSym, y: &DenseSym) -> Result<f64> {
    same_dim(x, y)?;
    let lx = spd_log(x)?;
    let ly = spd_log(y)?;
    let xm = x.as_matrix();
    Ok((xm * (lx - ly)).trace() - xm.trace() + y.as_matrix().trace())
}

/// Eigenbasis decomposition of `D_LD(X, Y)`.
///
/// With `X = Σ λ_i u_i u_iᵀ` and `Y = Σ θ_j v_j v_jᵀ` (both descending),
/// `D_LD(X, Y) = Σ_ij (u_iᵀ v_j)² φ(λ_i / θ_j)`.
#[derive(Debug, Clone)]
pub struct TermMatrix {
    /// `(u_iᵀ v_j)²`, doubly stochastic.
    pub alignment: DMatrix<f64>,
    /// `φ(λ_i / θ_j)`
    pub scalar_terms: DMatrix<f64>,
    pub x_values: DVector<f64>,
    pub y_values: DVector<f64>,
}

impl TermMatrix {
    /// `Σ_ij alignment_ij · scalar_terms_ij`.
    pub fn total(&self) -> f64 {
        self.alignment.component_mul(&self.scalar_terms).sum()
    }

    /// Largest deviation of any row or column sum of `alignment` from 1.
    pub fn stochasticity_error(&self) -> f64 {
        let rows = self.alignment.column_sum().map(|v| (v - 1.0).abs()).amax();
        let cols = self.alignment.row_sum().map(|v| (v - 1.0).abs()).amax();
        rows.max(cols)
    }
}

pub fn divergence_terms(x: &DenseSym, y: &DenseSym) -> Result<TermMatrix> {
    let n = same_dim(x, y)?;
    // Both SPD, as for divergence_ld.
    Cholesky::new(x.as_matrix())?;
    Cholesky::new(y.as_matrix())?;
    let ex = jacobi_eigen(x.as_matrix())?;
    let ey = jacobi_eigen(y.as_matrix())?;
    let inner = ex.vectors.tr_mul(&ey.vectors);
    let alignment = inner.map(|v| v * v);
    let scalar_terms = DMatrix::from_fn(n, n, |i, j| scalar_ld(ex.values[i] / ey.values[j]));
    Ok(TermMatrix {
        alignment,
        scalar_terms,
        x_values: ex.values,
        y_values: ey.values,
    })
}

/// Absolute and relative bounds on the expected excess divergence of the
/// randomized scaled preconditioner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuboptimalityBound {
    pub absolute: f64,
    pub relative: f64,
    pub epsilon: f64,
    pub c_r: f64,
}

fn sorted_desc(spectrum: &[f64]) -> Result<Vec<f64>> {
    if let Some(&v) = spectrum.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("spectrum entry {v} is negative")));
    }
    let mut s = spectrum.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(s)
}

/// Numerical rank: entries above `1e-10 · λ₁`.
fn numerical_rank(desc: &[f64]) -> usize {
    let top = desc.first().copied().unwrap_or(0.0);
    desc.iter().filter(|&&v| v > 1e-10 * top && v > 0.0).count()
}

/// `c_r = ‖(I+G)⁻¹‖_F + r / (1 + λ_{rank(B)}(G))`.
fn c_r(desc: &[f64], r: usize) -> f64 {
    let inv_frob = desc.iter().map(|l| (1.0 + l).powi(-2)).sum::<f64>().sqrt();
    let rank = numerical_rank(desc);
    let lam_rank = if rank == 0 { 0.0 } else { desc[rank - 1] };
    inv_frob + r as f64 / (1.0 + lam_rank)
}

fn tail_norm(desc: &[f64], r: usize) -> f64 {
    desc.iter().skip(r).map(|l| l * l).sum::<f64>().sqrt()
}

/// Expected-suboptimality bound `2 ε c_r` for oversampling `p ≥ 2`.
pub fn suboptimality_bound(g_spectrum: &[f64], r: usize, p: usize) -> Result<SuboptimalityBound> {
    if p < 2 {
        return Err(Error::HypothesisViolated(format!("oversampling p = {p} < 2")));
    }
    let desc = sorted_desc(g_spectrum)?;
    let n = desc.len();
    if r >= n {
        return Err(Error::InvalidArgument(format!("rank {r} must be below dimension {n}")));
    }
    let factor = 1.0 + r as f64 / (p as f64 - 1.0);
    let epsilon = (factor).sqrt() * tail_norm(&desc, r);
    let c = c_r(&desc, r);
    let absolute = 2.0 * epsilon * c;
    let rank = numerical_rank(&desc);
    let lam_rank = if rank == 0 { 0.0 } else { desc[rank - 1] };
    let floor = scalar_ld(1.0 / (1.0 + lam_rank));
    let numerator = 2.0 * c * (factor / (n - r) as f64).sqrt() * desc[r];
    let relative = if numerator == 0.0 {
        0.0
    } else if floor > 0.0 {
        numerator / floor
    } else {
        f64::INFINITY
    };
    Ok(SuboptimalityBound {
        absolute,
        relative,
        epsilon,
        c_r: c,
    })
}

/// High-probability deviation bound for `p ≥ 4` and `u, t ≥ 1`.
///
/// Returns `(bound, probability)` with probability
/// `1 − 2 t^{−p} − e^{−u²/2}` (floored at zero).
pub fn deviation_bound(g_spectrum: &[f64], r: usize, p: usize, u: f64, t: f64) -> Result<(f64, f64)> {
    if p < 4 {
        return Err(Error::HypothesisViolated(format!("oversampling p = {p} < 4")));
    }
    if !(u >= 1.0) || !(t >= 1.0) {
        return Err(Error::InvalidArgument(format!("u = {u} and t = {t} must both be ≥ 1")));
    }
    let desc = sorted_desc(g_spectrum)?;
    if r >= desc.len() {
        return Err(Error::InvalidArgument(format!("rank {r} must be below dimension {}", desc.len())));
    }
    let (rf, pf) = (r as f64, p as f64);
    let c = c_r(&desc, r);
    let frob_part = (1.0 + t * (3.0 * rf / (pf + 1.0)).sqrt()) * tail_norm(&desc, r);
    let spectral_part = u * t * std::f64::consts::E * (rf + pf).sqrt() / (pf + 1.0) * desc[r];
    let bound = 2.0 * c * (frob_part + spectral_part);
    let probability = (1.0 - 2.0 * t.powf(-pf) - (-u * u / 2.0).exp()).max(0.0);
    Ok((bound, probability))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;

    fn spd(n: usize, seed: u64) -> DenseSym {
        let m = GaussianStream::new(seed, 0).matrix(n, n);
        DenseSym::from_matrix(m.transpose() * &m + DMatrix::identity(n, n) * 0.5).unwrap()
    }

    #[test]
    fn identical_arguments_give_zero() {
        let x = spd(6, 1);
        let d = divergence_ld(&x, &x).unwrap();
        assert!(d.value.abs() < 1e-10);
        assert!((d.value - (d.trace_term + d.logdet_term - 6.0)).abs() < 1e-12);
        assert!(divergence_frobenius(&x, &x).unwrap().abs() < 1e-20);
        assert!(divergence_von_neumann(&x, &x).unwrap().abs() < 1e-9);
    }

    #[test]
    fn scalar_identity_case() {
        let x = DenseSym::from_diagonal(&[2.0, 2.0, 2.0]);
        let y = DenseSym::identity(3);
        let d = divergence_ld(&x, &y).unwrap();
        assert!((d.value - 3.0 * (2.0 - 2f64.ln() - 1.0)).abs() < 1e-14);
        assert!((d.value - 3.0 * 0.306853).abs() < 1e-6);
    }

    #[test]
    fn frobenius_and_von_neumann_diagonal() {
        let x = DenseSym::from_diagonal(&[2.0, 1.0]);
        let y = DenseSym::identity(2);
        assert!((divergence_frobenius(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        // per-eigenvalue oracle: (2 log 2 − 2 + 1) + (0 − 1 + 1)
        let want = 2.0 * 2f64.ln() - 1.0;
        assert!((divergence_von_neumann(&x, &y).unwrap() - want).abs() < 1e-13);
        assert!(divergence_von_neumann(&DenseSym::from_diagonal(&[1.0, 0.0]), &y).is_err());
    }

    #[test]
    fn rejects_non_spd() {
        let x = DenseSym::from_diagonal(&[1.0, -1.0]);
        let y = DenseSym::identity(2);
        assert!(matches!(divergence_ld(&x, &y), Err(Error::NotPositiveDefinite { .. })));
        assert!(matches!(divergence_ld(&y, &x), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn closed_form_empty_tail() {
        assert_eq!(divergence_scaled_closed_form(&[2.0, 1.0, 0.0], 2), 0.0);
        assert_eq!(divergence_scaled_closed_form(&[2.0, 1.0], 5), 0.0);
    }

    #[test]
    fn terms_reconstruct_divergence() {
        let x = spd(10, 3);
        let y = spd(10, 4);
        let t = divergence_terms(&x, &y).unwrap();
        let d = divergence_ld(&x, &y).unwrap().value;
        assert!((t.total() - d).abs() <= 1e-8 * (1.0 + d));
        assert!(t.stochasticity_error() < 1e-8);
        assert!(t.scalar_terms.min() >= -1e-12);
    }

    #[test]
    fn terms_diagonal_alignment_is_identity() {
        let x = DenseSym::from_diagonal(&[3.0, 2.0, 1.0]);
        let t = divergence_terms(&x, &x).unwrap();
        assert!((t.alignment.clone() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn bounds_vanish_without_tail() {
        let b = suboptimality_bound(&[3.0, 2.0, 0.0, 0.0], 2, 3).unwrap();
        assert_eq!(b.absolute, 0.0);
        assert_eq!(b.relative, 0.0);
        let b = suboptimality_bound(&[1.0, 0.0], 1, 2).unwrap();
        assert_eq!(b.epsilon, 0.0);
        assert_eq!(b.absolute, 0.0);
        let (bound, _) = deviation_bound(&[3.0, 2.0, 0.0, 0.0, 0.0], 2, 4, 1.0, 1.0).unwrap();
        assert_eq!(bound, 0.0);
    }

    #[test]
    fn bound_hypotheses() {
        assert!(matches!(suboptimality_bound(&[1.0, 0.5], 1, 1), Err(Error::HypothesisViolated(_))));
        assert!(matches!(deviation_bound(&[1.0, 0.5], 1, 3, 1.0, 1.0), Err(Error::HypothesisViolated(_))));
        assert!(deviation_bound(&[1.0, 0.5], 1, 4, 0.5, 1.0).is_err());
    }

    #[test]
    fn deviation_bound_hand_expansion() {
        // spectrum (4, 2, 1, 0.5), r = 1, p = 4, u = t = 1
        let spec = [4.0, 2.0, 1.0, 0.5];
        let (bound, prob) = deviation_bound(&spec, 1, 4, 1.0, 1.0).unwrap();
        let inv_frob = (1.0f64 / 25.0 + 1.0 / 9.0 + 1.0 / 4.0 + 1.0 / 2.25).sqrt();
        let c = inv_frob + 1.0 / 1.5;
        let tail = (4.0f64 + 1.0 + 0.25).sqrt();
        let want = 2.0 * c * ((1.0 + (3.0f64 / 5.0).sqrt()) * tail + std::f64::consts::E * 5f64.sqrt() / 5.0 * 2.0);
        assert!((bound - want).abs() < 1e-12 * want);
        assert_eq!(prob, 0.0);
        let (_, prob) = deviation_bound(&spec, 1, 4, 3.0, 3.0).unwrap();
        assert!((prob - (1.0 - 2.0 / 81.0 - (-4.5f64).exp())).abs() < 1e-15);
    }
}
