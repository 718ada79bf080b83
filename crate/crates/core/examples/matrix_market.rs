//! Round-tripping A and B through Matrix Market files and solving
//! (A + B) x = b with the `solve` driver.

use bregman_precond::experiment::{ConfigOverrides, ExperimentConfig, ExperimentKind};
use bregman_precond::experiment::{run_solve, write_solve};
use bregman_precond::linop::mm;
use bregman_precond::testgen::{assemble_synthetic, SpectrumParams};

fn main() -> bregman_precond::Result<()> {
    let dir = std::env::temp_dir().join("bregman_precond_mm_example");
    std::fs::create_dir_all(&dir)?;
    let prob = assemble_synthetic(&SpectrumParams::label("A3")?, &SpectrumParams::label("B1")?, 80, 40, 5)?;
    mm::write_sym_file(dir.join("a.mtx"), &prob.a)?;
    mm::write_sym_file(dir.join("b.mtx"), &prob.b)?;
    let back = mm::read_sym_file(dir.join("a.mtx"))?;
    println!("round-trip max error: {:.1e}", (back.as_matrix() - prob.a.as_matrix()).amax());

    let flags = ConfigOverrides {
        matrix_a: Some(dir.join("a.mtx")),
        matrix_b: Some(dir.join("b.mtx")),
        rank: Some(15),
        out: Some(dir.join("out")),
        ..Default::default()
    };
    let cfg = ExperimentConfig::resolve(ExperimentKind::Solve, None, &flags)?;
    let outcome = run_solve(&cfg)?;
    if let Some(k) = outcome.cond_s {
        println!("κ(S) = {k:.4e}");
    }
    for rec in &outcome.records {
        println!("{:>22}: {:?} iterations ({})", rec.preconditioner, rec.iterations, rec.status);
    }
    write_solve(&outcome)?;
    println!("results in {}", cfg.out.display());
    Ok(())
}
