//! The full preconditioner roster on one synthetic S = A + B, solved with PCG.

use bregman_precond::experiment::{DenseProblem, RosterEntry};
use bregman_precond::linop::Operator;
use bregman_precond::pcg::{kappa_error_bound, pcg_solve};
use bregman_precond::rng::GaussianStream;
use bregman_precond::sketch::SketchConfig;
use bregman_precond::testgen::{assemble_synthetic, SpectrumParams};

fn main() -> bregman_precond::Result<()> {
    let (n, m, r) = (200, 120, 60);
    let syn = assemble_synthetic(&SpectrumParams::label("A1")?, &SpectrumParams::label("B1")?, n, m, 0)?;
    let prob = DenseProblem::new(&syn.a, syn.b.clone(), syn.factor())?;
    let op = Operator::from_sym(&prob.s);
    let rhs = GaussianStream::new(0, 99).vector(n);
    let sketch = SketchConfig::new(r, 0, 2, 1);

    println!("{:>22} {:>6} {:>12} {:>10}", "preconditioner", "iters", "residual", "products");
    for entry in RosterEntry::all() {
        let p = prob.build(entry, &sketch)?;
        let rep = pcg_solve(&op, &rhs, &p, 1e-7, 1000, None)?;
        println!(
            "{:>22} {:>6} {:>12.3e} {:>10}",
            entry.name(),
            rep.iterations,
            rep.final_residual(),
            p.build_stats().operator_products
        );
    }
    println!("CG worst-case factor after 50 steps at κ = 1e4: {:.3e}", kappa_error_bound(1e4, 50));
    Ok(())
}
