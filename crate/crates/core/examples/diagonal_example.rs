//! The 6×6 diagonal example: scaling by A's factor before truncating B
//! picks different directions than truncating B directly.

use std::sync::Arc;

use bregman_precond::linop::{whitened_dense, DenseSym, DiagonalFactor, FactoredSpd};
use bregman_precond::pcg::generalized_eigs;
use bregman_precond::precond::{build_nonscaled, build_scaled};
use bregman_precond::sketch::truncated_evd;

fn diag(x: &DenseSym) -> Vec<f64> {
    (0..x.dim()).map(|i| x.get(i, i)).collect()
}

fn main() -> bregman_precond::Result<()> {
    let a = [1.1, 1.05, 0.375, 0.05, 0.05, 0.05];
    let r = 2;
    let q: Arc<dyn FactoredSpd> = Arc::new(DiagonalFactor::new(&a)?);
    let s_a = DenseSym::from_diagonal(&a);

    for (name, b) in [
        ("B", [1.0, 0.5, 0.25, 0.1, 0.0, 0.0]),
        ("B reversed", [0.1, 0.25, 0.5, 1.0, 0.0, 0.0]),
    ] {
        let b = DenseSym::from_diagonal(&b);
        let g = whitened_dense(q.as_ref(), &b)?;
        let br = truncated_evd(&b, r)?;
        let gr = truncated_evd(&g, r)?;
        println!("{name}");
        println!("  G             = {:.4?}", diag(&g));
        println!("  Q⁻¹ B_r Q⁻ᵀ   = {:.4?}", diag(&whitened_dense(q.as_ref(), &br.to_sym())?));
        println!("  G_r           = {:.4?}", diag(&gr.to_sym()));

        let s = s_a.add(&b)?;
        let tilde = build_nonscaled(q.clone(), &br)?;
        let hat = build_scaled(q.clone(), &gr)?;
        println!("  eig(S̃⁻¹S)     = {:.4?}", generalized_eigs(&tilde, &s)?.as_slice());
        println!("  eig(Ŝ⁻¹S)     = {:.4?}", generalized_eigs(&hat, &s)?.as_slice());
        println!("  max |Ŝ − S̃|   = {:.2e}", (hat.dense_form() - tilde.dense_form()).amax());
    }
    Ok(())
}
