//! Nyström approximations: raw, QR-of-sketch, single-pass, and the
//! properties that tie them together.

use bregman_precond::linop::{dense_eig_sym, DenseSym, Operator};
use bregman_precond::rng::GaussianStream;
use bregman_precond::sketch::{nystrom, nystrom_with, single_pass_evd_with, NystromRange, SketchConfig};

fn main() -> bregman_precond::Result<()> {
    let (n, k) = (120, 15);
    let f = GaussianStream::new(3, 0).matrix(n, 40);
    let g = DenseSym::from_matrix(&f * f.transpose())?;
    let op = Operator::from_sym(&g);
    let omega = GaussianStream::new(4, 0).matrix(n, k);

    let raw = nystrom_with(&op, &omega, k, NystromRange::Raw)?;
    let single = single_pass_evd_with(&op, &omega)?;
    let theta = omega.clone().qr().q();
    let via_theta = nystrom_with(&op, &theta, k, NystromRange::Raw)?;
    let rel = |a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>| (a - b).norm() / b.norm();
    println!("single-pass vs Nyström, same Ω : {:.2e}", rel(&single.to_dense(), &raw.to_dense()));
    println!("Nyström with Ω vs with qr(Ω)   : {:.2e}", rel(&via_theta.to_dense(), &raw.to_dense()));

    // the error G − Nys(G) is a Schur complement, hence PSD
    let resid = DenseSym::from_matrix(g.as_matrix() - raw.to_dense())?;
    let e = dense_eig_sym(&resid)?;
    println!("min eig(G − Nys) = {:.2e} (λ₁(G) = {:.2e})", e.values.min(), dense_eig_sym(&g)?.values.max());

    for (name, mode) in [("raw", NystromRange::Raw), ("qr of sketch", NystromRange::QrOfSketch)] {
        op.reset_products();
        let approx = nystrom(&op, &SketchConfig::new(k, 5, 0, 9), mode)?;
        println!(
            "{name:>13}: rank {}, ‖G − Ĝ‖_F/‖G‖_F = {:.4e}, {} products",
            approx.rank(),
            rel(&approx.to_dense(), g.as_matrix()),
            op.products()
        );
    }
    Ok(())
}
