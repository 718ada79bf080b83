//! Extreme-eigenvalue estimates for large symmetric operators.
//!
//! Plain Lanczos (no reorthogonalization) followed by Sturm-sequence
//! bisection on the tridiagonal. Loss of orthogonality only produces ghost
//! copies of converged Ritz values, which is harmless for the extremes.
//! For the bottom of a clustered spectrum with a good preconditioner,
//! LOBPCG is available too, and Hager's estimator gives 1-norm condition
//! numbers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::{dense_eig_sym, DenseSym, Operator};
use crate::rng::GaussianStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeEigs {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl ExtremeEigs {
    pub fn condition(&self) -> f64 {
        self.max / self.min
    }
}

/// Runs up to `max_steps` Lanczos steps, stopping early once both extreme
/// Ritz values change by less than `rel_tol` (relative) over 25 steps.
pub fn lanczos_extremes(op: &Operator, max_steps: usize, rel_tol: f64, seed: u64) -> Result<ExtremeEigs> {
    if !op.is_symmetric() {
        return Err(Error::InvalidArgument("Lanczos needs a symmetric operator".into()));
    }
    let mut w = vec![0.0; op.dim()];
    lanczos_with(
        op.dim(),
        |v| {
            op.apply(v.as_slice(), &mut w)?;
            Ok(DVector::from_column_slice(&w))
        },
        max_steps,
        rel_tol,
        seed,
    )
}

/// Lanczos on any symmetric map `x ↦ apply(x)` of dimension `n`.
pub fn lanczos_with<F>(n: usize, apply: F, max_steps: usize, rel_tol: f64, seed: u64) -> Result<ExtremeEigs>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    run(n, apply, max_steps, rel_tol, seed, true)
}

/// Like [`lanczos_with`] but stops as soon as the largest Ritz value has
/// settled; `min` is whatever the smallest Ritz value was at that point.
pub fn lanczos_max_with<F>(n: usize, apply: F, max_steps: usize, rel_tol: f64, seed: u64) -> Result<ExtremeEigs>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    run(n, apply, max_steps, rel_tol, seed, false)
}

fn run<F>(n: usize, mut apply: F, max_steps: usize, rel_tol: f64, seed: u64, need_min: bool) -> Result<ExtremeEigs>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let max_steps = max_steps.max(1);
    let check_every = 25;
    let mut v = GaussianStream::new(seed, 0).vector(n);
    v /= v.norm();
    let mut v_prev = DVector::zeros(n);
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut last: Option<(f64, f64)> = None;
    let mut beta_prev = 0.0;
    for step in 1..=max_steps {
        let mut wv = apply(&v)?;
        let a = wv.dot(&v);
        wv.axpy(-a, &v, 1.0);
        wv.axpy(-beta_prev, &v_prev, 1.0);
        alpha.push(a);
        let b = wv.norm();
        let exhausted = b <= 1e-14 * a.abs().max(1.0);
        if step % check_every == 0 || step == max_steps || exhausted {
            let now = tridiagonal_extremes(&alpha, &beta);
            if let Some((lo, hi)) = last {
                let min_ok = !need_min || ((now.0 - lo) / now.0).abs() < rel_tol;
                if min_ok && ((now.1 - hi) / now.1).abs() < rel_tol {
                    return Ok(ExtremeEigs { min: now.0, max: now.1, steps: step });
                }
            }
            if step == max_steps || exhausted {
                return Ok(ExtremeEigs { min: now.0, max: now.1, steps: step });
            }
            last = Some(now);
        }
        beta.push(b);
        v_prev = std::mem::replace(&mut v, wv / b);
        beta_prev = b;
    }
    unreachable!("loop always returns at max_steps")
}

/// Number of eigenvalues of the tridiagonal `(alpha, beta)` strictly below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..alpha.len() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] / q };
        q = alpha[i] - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (alpha[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest and largest eigenvalues of a symmetric tridiagonal matrix.
pub fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let k = alpha.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < k { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let bisect = |target: usize| {
        // smallest x with sturm_count(x) ≥ target
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(alpha, beta, mid) >= target {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(k))
}

/// Hager's estimate of `‖T‖₁` for a symmetric `T` given only `x ↦ T x`.
///
/// A lower bound that is exact in the vast majority of cases; at most
/// `2 · max_iter` applications of `T`.
pub fn hager_norm1<F>(n: usize, mut apply: F, max_iter: usize) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..max_iter.max(1) {
        let y = apply(&x)?;
        est = y.lp_norm(1).max(est);
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        // Tᵀ = T
        let z = apply(&xi)?;
        let j = z.iamax();
        if z[j].abs() <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    Ok(est)
}

/// Result of [`lobpcg_min`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallestEig {
    pub value: f64,
    /// `‖S x − λ x‖` of the returned Ritz pair.
    pub residual: f64,
    pub iterations: usize,
}

/// Smallest eigenvalue of an SPD map by block LOBPCG with block size `k`,
/// preconditioned by `precond ≈ S⁻¹`.
///
/// Much faster than Lanczos when the bottom of the spectrum is clustered
/// but a good preconditioner exists. Stops once the leading Ritz pair has
/// `‖S x − λ x‖ ≤ res_tol · λ`, or after `max_iter` iterations.
pub fn lobpcg_min<A, T>(
    n: usize,
    k: usize,
    mut apply: A,
    mut precond: T,
    max_iter: usize,
    res_tol: f64,
    seed: u64,
) -> Result<SmallestEig>
where
    A: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    T: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    if k == 0 || 3 * k > n {
        return Err(Error::InvalidArgument(format!("block size {k} must lie in 1..={}", n / 3)));
    }
    let mut apply_block = |x: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            out.set_column(j, &apply(&x.column(j).into_owned())?);
        }
        Ok(out)
    };
    let mut x = GaussianStream::new(seed, 0).matrix(n, k).qr().q();
    let mut sx = apply_block(&x)?;
    let mut p: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut last = SmallestEig {
        value: f64::NAN,
        residual: f64::INFINITY,
        iterations: 0,
    };
    for it in 1..=max_iter {
        if it % 50 == 0 {
            // refresh the tracked images against drift
            sx = apply_block(&x)?;
        }
        let rho: Vec<f64> = (0..k).map(|j| x.column(j).dot(&sx.column(j))).collect();
        let resid = &sx - &x * DMatrix::from_diagonal(&DVector::from_column_slice(&rho));
        let r0 = resid.column(0).norm();
        last = SmallestEig {
            value: rho[0],
            residual: r0,
            iterations: it - 1,
        };
        if r0 <= res_tol * rho[0].abs() {
            return Ok(last);
        }
        let mut w = DMatrix::zeros(n, k);
        for j in 0..k {
            w.set_column(j, &precond(&resid.column(j).into_owned())?);
        }
        let sw = apply_block(&w)?;

        // orthonormal basis of span[X, W, P], images carried along
        let mut cols: Vec<(DVector<f64>, DVector<f64>)> = vec![];
        let push = |v: DVector<f64>, sv: DVector<f64>, cols: &mut Vec<(DVector<f64>, DVector<f64>)>| {
            let (mut v, mut sv) = (v, sv);
            let norm0 = v.norm();
            if norm0 == 0.0 {
                return;
            }
            for _ in 0..2 {
                for (q, sq) in cols.iter() {
                    let c = q.dot(&v);
                    v.axpy(-c, q, 1.0);
                    sv.axpy(-c, sq, 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-10 * norm0 {
                cols.push((v / norm, sv / norm));
            }
        };
        for j in 0..k {
            push(x.column(j).into_owned(), sx.column(j).into_owned(), &mut cols);
        }
        if cols.len() < k {
            return Err(Error::NoConvergence {
                sweeps: it,
                off: r0,
            });
        }
        for j in 0..k {
            push(w.column(j).into_owned(), sw.column(j).into_owned(), &mut cols);
        }
        if let Some((pm, spm)) = &p {
            for j in 0..k {
                push(pm.column(j).into_owned(), spm.column(j).into_owned(), &mut cols);
            }
        }
        let m = cols.len();
        let q = DMatrix::from_columns(&cols.iter().map(|c| c.0.clone()).collect::<Vec<_>>());
        let sq = DMatrix::from_columns(&cols.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
        let small = q.tr_mul(&sq);
        let small = DenseSym::from_matrix((&small + small.transpose()) * 0.5)?;
        let eig = dense_eig_sym(&small)?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.values[a].partial_cmp(&eig.values[b]).unwrap());
        let c = DMatrix::from_columns(&order[..k].iter().map(|&i| eig.vectors.column(i).into_owned()).collect::<Vec<_>>());
        let tail = c.rows(k, m - k).into_owned();
        p = Some((q.columns(k, m - k) * &tail, sq.columns(k, m - k) * &tail));
        x = &q * &c;
        sx = &sq * &c;
    }
    Ok(SmallestEig {
        iterations: max_iter,
        ..last
    })
}
