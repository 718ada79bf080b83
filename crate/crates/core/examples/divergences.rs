//! Matrix divergences and the eigenbasis decomposition of D_LD.

use std::sync::Arc;

use bregman_precond::bregman::{
    divergence_frobenius, divergence_ld, divergence_scaled_closed_form, divergence_terms, divergence_von_neumann,
};
use bregman_precond::linop::{dense_eig_sym, DenseSym, FactoredSpd};
use bregman_precond::precond::{build_nonscaled, build_scaled};
use bregman_precond::sketch::truncated_evd;
use bregman_precond::testgen::{assemble_synthetic, SpectrumParams};

fn main() -> bregman_precond::Result<()> {
    let (n, m, r) = (40, 24, 8);
    let prob = assemble_synthetic(&SpectrumParams::label("A4")?, &SpectrumParams::label("B1")?, n, m, 11)?;
    let s = prob.s();
    let q: Arc<dyn FactoredSpd> = prob.factor();
    let g = prob.g();

    let hat = DenseSym::from_matrix(build_scaled(q.clone(), &truncated_evd(&g, r)?)?.dense_form())?;
    let tilde = DenseSym::from_matrix(build_nonscaled(q, &prob.b_truncated(r))?.dense_form())?;

    for (name, p) in [("Ŝ", &hat), ("S̃", &tilde)] {
        let d = divergence_ld(p, &s)?;
        println!(
            "{name}: D_LD = {:.6} (trace {:.4}, −logdet {:.4}), ‖P − S‖²_F = {:.4e}, D_vN = {:.4e}",
            d.value,
            d.trace_term,
            d.logdet_term,
            divergence_frobenius(p, &s)?,
            divergence_von_neumann(p, &s)?
        );
    }
    let mu = dense_eig_sym(&g)?.values;
    println!("closed form Σ_(j>r) φ(1/(1+μ_j)) = {:.6}", divergence_scaled_closed_form(mu.as_slice(), r));

    // D_LD = Σ_ij (u_iᵀ v_j)² φ(λ_i / θ_j); the alignment matrix is doubly stochastic
    let terms = divergence_terms(&tilde, &s)?;
    println!(
        "term matrix: total {:.6}, doubly-stochastic error {:.1e}, largest single term {:.4}",
        terms.total(),
        terms.stochasticity_error(),
        terms.alignment.component_mul(&terms.scalar_terms).max()
    );
    Ok(())
}
