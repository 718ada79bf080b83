//! Block Jacobi as the block-diagonal minimizer of D_LD(S, ·).

use bregman_precond::bregman::divergence_ld;
use bregman_precond::linop::{DenseSym, Operator};
use bregman_precond::pcg::pcg_solve;
use bregman_precond::precond::{build_block_jacobi, build_jacobi, BlockPartition, Preconditioner};
use bregman_precond::rng::GaussianStream;
use nalgebra::DMatrix;

fn main() -> bregman_precond::Result<()> {
    let n = 60;
    let mut rng = GaussianStream::new(2, 0);
    // strong coupling inside blocks of 6, weak between them
    let mut m = rng.matrix(n, n) * 0.05;
    for b in 0..n / 6 {
        let blk = rng.matrix(6, 6);
        m.view_mut((6 * b, 6 * b), (6, 6)).copy_from(&blk);
    }
    let s = DenseSym::from_matrix(&m * m.transpose() + DMatrix::identity(n, n) * 0.1)?;
    let bj = build_block_jacobi(&s, &BlockPartition::uniform(n, 6)?)?;
    let dense = DenseSym::from_matrix(bj.dense_form())?;
    let best = divergence_ld(&s, &dense)?.value;
    println!("D_LD(S, block Jacobi) = {best:.5}");

    let mut worse = 0;
    for _ in 0..50 {
        let mut c = DMatrix::identity(n, n);
        for b in 0..n / 6 {
            let pert = rng.matrix(6, 6) * 0.1;
            let mut v = c.view_mut((6 * b, 6 * b), (6, 6));
            v += pert;
        }
        if divergence_ld(&s, &dense.congruence(&c)?)?.value >= best {
            worse += 1;
        }
    }
    println!("block-diagonal perturbations that do worse: {worse}/50");

    let rhs = rng.vector(n);
    let op = Operator::from_sym(&s);
    for (name, p) in [
        ("identity", Preconditioner::identity(n)),
        ("jacobi", build_jacobi(&s)?),
        ("block jacobi", bj),
    ] {
        let rep = pcg_solve(&op, &rhs, &p, 1e-8, 1000, None)?;
        println!("{name:>12}: {} iterations ({})", rep.iterations, rep.termination.as_str());
    }
    Ok(())
}
