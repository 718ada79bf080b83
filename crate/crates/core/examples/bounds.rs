//! Expected and high-probability suboptimality of the randomized scaled
//! preconditioner, against a Monte Carlo estimate.

use std::sync::Arc;

use bregman_precond::bregman::{deviation_bound, divergence_ld, suboptimality_bound};
use bregman_precond::linop::{DenseSym, DiagonalFactor, FactoredSpd, Operator};
use bregman_precond::precond::build_scaled;
use bregman_precond::rng::GaussianStream;
use bregman_precond::sketch::{randomized_evd, truncated_evd, SketchConfig};
use bregman_precond::testgen::{spectrum, SpectrumParams};
use nalgebra::DMatrix;

fn main() -> bregman_precond::Result<()> {
    let (n, r, p) = (100, 20, 5);
    let lam = spectrum(&SpectrumParams::label("B1")?, n)?;
    let o = GaussianStream::new(5, 0).matrix(n, n).qr().q();
    let g = DenseSym::from_matrix(&o * DMatrix::from_diagonal(&lam) * o.transpose())?;
    let s = DenseSym::from_matrix(g.as_matrix() + DMatrix::identity(n, n))?;
    let q: Arc<dyn FactoredSpd> = Arc::new(DiagonalFactor::new(&vec![1.0; n])?);
    let d = |gr: &bregman_precond::sketch::LowRankEig| -> bregman_precond::Result<f64> {
        Ok(divergence_ld(&DenseSym::from_matrix(build_scaled(q.clone(), gr)?.dense_form())?, &s)?.value)
    };
    let optimal = d(&truncated_evd(&g, r)?)?;

    let op = Operator::from_sym(&g);
    let excess: Vec<f64> = (0..200)
        .map(|seed| Ok(d(&randomized_evd(&op, &SketchConfig::new(r, p, 0, seed))?)? - optimal))
        .collect::<bregman_precond::Result<_>>()?;
    let mean = excess.iter().sum::<f64>() / excess.len() as f64;

    let bound = suboptimality_bound(lam.as_slice(), r, p)?;
    println!("D_LD(Ŝ, S) = {optimal:.5}");
    println!("mean excess over 200 sketches = {mean:.5e}");
    println!("expected bound 2εc_r          = {:.5e} (ε = {:.4e}, c_r = {:.4})", bound.absolute, bound.epsilon, bound.c_r);
    println!("relative bound                = {:.5e}", bound.relative);

    let (u, t) = (2.0, 3.0);
    let (dev, prob) = deviation_bound(lam.as_slice(), r, p, u, t)?;
    let worst = excess.iter().cloned().fold(0.0, f64::max);
    println!("deviation bound (u = {u}, t = {t}) = {dev:.5e} with probability ≥ {prob:.4}; worst draw {worst:.5e}");
    Ok(())
}
