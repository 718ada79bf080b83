//! Randomized EVD of a PSD operator against the exact truncation, with and
//! without power iterations. Only matrix-vector products are used.

use bregman_precond::linop::{rel_frobenius, DenseSym, Operator};
use bregman_precond::rng::GaussianStream;
use bregman_precond::sketch::{range_finder, randomized_evd, truncated_evd, SketchConfig};
use bregman_precond::testgen::{spectrum, SpectrumParams};
use nalgebra::DMatrix;

fn main() -> bregman_precond::Result<()> {
    let (n, r) = (300, 30);
    // slowly decaying spectrum, randomly rotated
    let lam = spectrum(&SpectrumParams::label("B2")?, n)?;
    let o = GaussianStream::new(1, 0).matrix(n, n).qr().q();
    let g = DenseSym::from_matrix(&o * DMatrix::from_diagonal(&lam) * o.transpose())?;
    let exact = truncated_evd(&g, r)?.to_dense();

    let op = Operator::from_sym(&g);
    println!("rank {r}, n = {n}; error relative to the best rank-{r} approximation");
    for p in [0, 5, 10] {
        for q in [0, 1, 2] {
            op.reset_products();
            let approx = randomized_evd(&op, &SketchConfig::new(r, p, q, 7))?;
            let err = rel_frobenius(&approx.to_dense(), g.as_matrix());
            let best = rel_frobenius(&exact, g.as_matrix());
            println!(
                "  p = {p:>2}, q = {q}: ‖G − Ĝ‖/‖G‖ = {err:.4e}  (optimal {best:.4e}), {} products",
                op.products()
            );
        }
    }

    let theta = range_finder(&op, r + 10, 1, 7)?;
    let resid = g.as_matrix() - &theta * (theta.transpose() * g.as_matrix());
    println!("range finder (k = {}, q = 1): ‖(I − ΘΘᵀ)G‖_F = {:.4e}", r + 10, resid.norm());
    Ok(())
}
