//! Preconditioned conjugate gradients and generalized-eigenvalue diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linop::{jacobi_eigen, Cholesky, DenseSym, Operator};
use crate::precond::Preconditioner;

/// Recompute `b − S x` explicitly every this many iterations.
pub const RESIDUAL_REFRESH: usize = 50;

/// Largest dimension `generalized_eigs` will densify.
pub const DENSE_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    /// `pᵀ S p ≤ 0` or `rᵀ P⁻¹ r ≤ 0`: `S` or `P` is not positive definite.
    Breakdown,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
            Termination::Breakdown => "breakdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// `‖b − S x_k‖₂ / ‖b‖₂` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub termination: Termination,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Solves `S x = b` with preconditioner `P`, starting from `x0` (zero if `None`).
pub fn pcg_solve(
    s: &Operator,
    b: &DVector<f64>,
    p: &Preconditioner,
    tol: f64,
    maxit: usize,
    x0: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    pcg_solve_observed(s, b, p, tol, maxit, x0, |_, _| {})
}

/// As [`pcg_solve`], calling `observe(k, x_k)` after every iterate (including `k = 0`).
pub fn pcg_solve_observed<F>(
    s: &Operator,
    b: &DVector<f64>,
    p: &Preconditioner,
    tol: f64,
    maxit: usize,
    x0: Option<&DVector<f64>>,
    mut observe: F,
) -> Result<SolveReport>
where
    F: FnMut(usize, &DVector<f64>),
{
    let n = s.dim();
    for got in [b.len(), p.dim()].into_iter().chain(x0.map(|x| x.len())) {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }

    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
    observe(0, &x);
    let bnorm = b.norm();
    if bnorm == 0.0 {
        // x = 0 is exact; any other start is replaced by it.
        let zero = DVector::zeros(n);
        return Ok(SolveReport {
            solution: zero,
            iterations: 0,
            residual_history: vec![0.0],
            termination: Termination::Converged,
        });
    }

    let mut r = if x0.is_some() { b - s.matvec(&x)? } else { b.clone() };
    let mut history = vec![r.norm() / bnorm];
    let report = |x: DVector<f64>, history: Vec<f64>, termination| SolveReport {
        solution: x,
        iterations: history.len() - 1,
        residual_history: history,
        termination,
    };
    if history[0] <= tol {
        return Ok(report(x, history, Termination::Converged));
    }

    let mut z = p.inverse_apply(&r)?;
    let mut rz = r.dot(&z);
    if !(rz > 0.0) {
        return Ok(report(x, history, Termination::Breakdown));
    }
    let mut dir = z.clone();

    for k in 1..=maxit {
        let sd = s.matvec(&dir)?;
        let curvature = dir.dot(&sd);
        if !(curvature > 0.0) {
            return Ok(report(x, history, Termination::Breakdown));
        }
        let alpha = rz / curvature;
        x.axpy(alpha, &dir, 1.0);
        if k % RESIDUAL_REFRESH == 0 {
            r = b - s.matvec(&x)?;
        } else {
            r.axpy(-alpha, &sd, 1.0);
        }
        observe(k, &x);
        let rel = r.norm() / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(report(x, history, Termination::Converged));
        }
        if k == maxit {
            break;
        }
        z = p.inverse_apply(&r)?;
        let rz_next = r.dot(&z);
        if !(rz_next > 0.0) {
            return Ok(report(x, history, Termination::Breakdown));
        }
        let beta = rz_next / rz;
        rz = rz_next;
        dir = &z + dir * beta;
    }
    Ok(report(x, history, Termination::MaxIter))
}

/// Eigenvalues of `P⁻¹ S`, descending, via `L⁻¹ S L⁻ᵀ` with `P = L Lᵀ`.
pub fn generalized_eigs(p: &Preconditioner, s: &DenseSym) -> Result<DVector<f64>> {
    generalized_eigs_capped(p, s, DENSE_CAP)
}

pub fn generalized_eigs_capped(p: &Preconditioner, s: &DenseSym, cap: usize) -> Result<DVector<f64>> {
    let n = s.dim();
    if p.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p.dim() });
    }
    if n > cap {
        return Err(Error::DenseCapExceeded { n, cap });
    }
    let chol = Cholesky::new(&p.dense_form())?;
    // L⁻¹ S, then (L⁻¹ (L⁻¹ S)ᵀ) = L⁻¹ S L⁻ᵀ.
    let mut m = s.as_matrix().clone();
    lower_solve_columns(&chol, &mut m);
    m.transpose_mut();
    lower_solve_columns(&chol, &mut m);
    let m = (&m + m.transpose()) * 0.5;
    Ok(jacobi_eigen(&m)?.values)
}

fn lower_solve_columns(chol: &Cholesky, m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        chol.solve_lower_in_place(col.as_mut_slice());
    }
}

/// `2 ((√κ − 1)/(√κ + 1))^k`, the classical bound on `‖x − x_k‖_S / ‖x − x_0‖_S`.
pub fn kappa_error_bound(kappa: f64, k: usize) -> f64 {
    let sk = kappa.sqrt();
    2.0 * ((sk - 1.0) / (sk + 1.0)).powi(k as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{cholesky_factor, FactoredSpd};
    use crate::precond::{build_jacobi, build_scaled};
    use crate::rng::GaussianStream;
    use crate::sketch::truncated_evd;
    use std::sync::Arc;

    fn orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
        GaussianStream::new(seed, 0).matrix(n, n).qr().q()
    }

    fn with_spectrum(values: &[f64], seed: u64) -> DenseSym {
        let q = orthogonal(values.len(), seed);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(values));
        DenseSym::from_matrix(&q * d * q.transpose()).unwrap()
    }

    #[test]
    fn identity_system_one_step() {
        let s = Operator::identity(5);
        let b = DVector::from_fn(5, |i, _| i as f64 + 1.0);
        let rep = pcg_solve(&s, &b, &Preconditioner::identity(5), 1e-12, 10, None).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.residual_history.len(), 2);
        assert!(rep.converged());
        assert!((rep.solution - b).amax() < 1e-15);
    }

    #[test]
    fn distinct_eigenvalue_count_bounds_iterations() {
        let mut vals = vec![];
        for (i, v) in [1.0, 3.0, 7.0, 20.0].iter().enumerate() {
            vals.extend(std::iter::repeat(*v).take(5 + (i % 2)));
        }
        vals.truncate(20);
        vals.resize(20, 20.0);
        let s = with_spectrum(&vals, 5);
        let b = GaussianStream::new(6, 0).vector(20);
        let rep = pcg_solve(&Operator::from_sym(&s), &b, &Preconditioner::identity(20), 1e-10, 100, None).unwrap();
        assert!(rep.converged());
        assert!(rep.iterations <= 4, "{} iterations", rep.iterations);
    }

    #[test]
    fn zero_rhs_and_initial_guess() {
        let s = with_spectrum(&[3.0, 2.0, 1.0], 1);
        let op = Operator::from_sym(&s);
        let p = Preconditioner::identity(3);
        let rep = pcg_solve(&op, &DVector::zeros(3), &p, 1e-8, 10, None).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.residual_history, vec![0.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let exact = Cholesky::new(s.as_matrix()).unwrap().solve(&b);
        let rep = pcg_solve(&op, &b, &p, 1e-8, 10, Some(&exact)).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let op = Operator::identity(3);
        let b = DVector::zeros(4);
        assert!(pcg_solve(&op, &b, &Preconditioner::identity(3), 1e-8, 5, None).is_err());
        let b = DVector::zeros(3);
        assert!(pcg_solve(&op, &b, &Preconditioner::identity(4), 1e-8, 5, None).is_err());
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let s = Operator::diagonal(DVector::from_vec(vec![1.0, -1.0]));
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let rep = pcg_solve(&s, &b, &Preconditioner::identity(2), 1e-10, 10, None).unwrap();
        assert_eq!(rep.termination, Termination::Breakdown);
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
    }

    #[test]
    fn maxit_reported() {
        let s = with_spectrum(&(1..=30).map(|i| i as f64).collect::<Vec<_>>(), 2);
        let b = GaussianStream::new(3, 0).vector(30);
        let rep = pcg_solve(&Operator::from_sym(&s), &b, &Preconditioner::identity(30), 1e-14, 3, None).unwrap();
        assert_eq!(rep.termination, Termination::MaxIter);
        assert_eq!(rep.iterations, 3);
        assert_eq!(rep.residual_history.len(), 4);
    }

    #[test]
    fn generalized_eigs_match_dense_oracle() {
        let s = with_spectrum(&[9.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.7, 0.2], 11);
        let p = build_jacobi(&s).unwrap();
        let got = generalized_eigs(&p, &s).unwrap();
        // oracle: eigenvalues of the nonsymmetric P⁻¹ S through nalgebra's Schur form
        let pinv_s = p.dense_inverse() * s.as_matrix();
        let mut want: Vec<f64> = pinv_s.complex_eigenvalues().iter().map(|c| c.re).collect();
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8 * w.abs().max(1.0), "{g} vs {w}");
        }
        let same = generalized_eigs(&Preconditioner::identity(8), &DenseSym::identity(8)).unwrap();
        assert!(same.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn generalized_eigs_cap() {
        let s = DenseSym::identity(5);
        let err = generalized_eigs_capped(&Preconditioner::identity(5), &s, 4).unwrap_err();
        assert_eq!(err, Error::DenseCapExceeded { n: 5, cap: 4 });
    }

    #[test]
    fn scaled_preconditioner_error_monotone_and_bounded() {
        let n = 30;
        let a = with_spectrum(&(0..n).map(|i| 1.0 + i as f64 * 0.1).collect::<Vec<_>>(), 21);
        let bvals: Vec<f64> = (0..n).map(|i| if i < 10 { 50.0 / (i + 1) as f64 } else { 0.0 }).collect();
        let bm = with_spectrum(&bvals, 22);
        let s = a.add(&bm).unwrap();
        let q: Arc<dyn FactoredSpd> = Arc::new(cholesky_factor(&a).unwrap());
        let g = crate::linop::whitened_dense(q.as_ref(), &bm).unwrap();
        let p = build_scaled(q, &truncated_evd(&g, 4).unwrap()).unwrap();
        let eigs = generalized_eigs(&p, &s).unwrap();
        let kappa = eigs[0] / eigs[n - 1];

        let rhs = GaussianStream::new(23, 0).vector(n);
        let x = Cholesky::new(s.as_matrix()).unwrap().solve(&rhs);
        let snorm = |e: &DVector<f64>| e.dot(&(s.as_matrix() * e)).sqrt();
        let mut errors = vec![];
        let rep = pcg_solve_observed(&Operator::from_sym(&s), &rhs, &p, 1e-12, 50, None, |_, xk| {
            errors.push(snorm(&(&x - xk)));
        })
        .unwrap();
        assert!(rep.converged());
        // rank(B) − r + 1 = 7
        assert!(rep.iterations <= 7, "{}", rep.iterations);
        for k in 1..errors.len() {
            assert!(errors[k] <= errors[k - 1] + 1e-10 * errors[0]);
            assert!(errors[k] <= kappa_error_bound(kappa, k) * errors[0] + 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let s = with_spectrum(&(1..=15).map(|i| (i * i) as f64).collect::<Vec<_>>(), 8);
        let b = GaussianStream::new(9, 0).vector(15);
        let p = build_jacobi(&s).unwrap();
        let op = Operator::from_sym(&s);
        let r1 = pcg_solve(&op, &b, &p, 1e-9, 100, None).unwrap();
        let r2 = pcg_solve(&op, &b, &p, 1e-9, 100, None).unwrap();
        assert_eq!(r1, r2);
    }
}
