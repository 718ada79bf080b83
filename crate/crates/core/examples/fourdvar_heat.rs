//! A small weak-constraint 4D-VAR system on the heat equation: Nyström
//! preconditioners built on top of the model-error factor, and κ(S).

use bregman_precond::experiment::estimate_kappa;
use bregman_precond::pcg::pcg_solve;
use bregman_precond::precond::Preconditioner;
use bregman_precond::testgen::{build_4dvar_preconditioners, FourDVarConfig, FourDVarSystem};

fn main() -> bregman_precond::Result<()> {
    let cfg = FourDVarConfig::reduced();
    let sys = FourDVarSystem::assemble(cfg)?;
    println!(
        "state size {} ({} levels × {}), {} observations, Δt/Δx² = {:.3}",
        sys.dim(),
        cfg.steps + 1,
        cfg.n,
        sys.obs_dim(),
        cfg.heat_ratio()
    );
    let s = sys.s_operator();
    let rhs = sys.rhs(0);

    let identity = pcg_solve(&s, &rhs, &Preconditioner::identity(sys.dim()), 1e-6, 2000, None)?;
    println!("identity: {} iterations", identity.iterations);
    for r in [25, 100, 200] {
        let pcs = build_4dvar_preconditioners(&sys, r, 7)?;
        for (name, p) in [
            ("ldl", &pcs.baseline),
            ("nonscaled_nystrom", &pcs.nonscaled_nystrom),
            ("scaled_nystrom", &pcs.scaled_nystrom),
        ] {
            let rep = pcg_solve(&s, &rhs, p, 1e-6, 2000, None)?;
            println!("r = {r:>3} {name:>18}: {} iterations", rep.iterations);
        }
    }

    let k = estimate_kappa(&sys, 2000, 0)?;
    println!("κ₂(S) ≈ {:.4e} ({} Lanczos steps), κ₁(S) ≈ {:.4e}", k.kappa, k.lanczos_steps, k.kappa_1);
    Ok(())
}
