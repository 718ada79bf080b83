//! Driving the synthetic experiment from a JSON config, as the CLI does.

use bregman_precond::experiment::{ConfigOverrides, ExperimentConfig, ExperimentKind};
use bregman_precond::experiment::{run_synthetic, write_synthetic};

fn main() -> bregman_precond::Result<()> {
    let file = ConfigOverrides::from_json(
        r#"{
            "n": 120, "m": 60, "rank": 30, "trials": 3,
            "a_labels": ["A1", "A4"], "b_labels": ["B1"],
            "preconditioners": ["identity", "jacobi", "nonscaled", "scaled", "scaled_rand"]
        }"#,
    )?;
    // flags override the file
    let flags = ConfigOverrides {
        seed: Some(42),
        out: Some(std::env::temp_dir().join("bregman_precond_synthetic_example")),
        ..Default::default()
    };
    let cfg = ExperimentConfig::resolve(ExperimentKind::Synthetic, Some(&file), &flags)?;
    let outcome = run_synthetic(&cfg)?;
    for s in &outcome.summary {
        println!(
            "{} {} {:>12}: median {:?} iterations, D_LD {:?}",
            s.a_label, s.b_label, s.preconditioner, s.iterations, s.divergence
        );
    }
    write_synthetic(&outcome)?;
    println!("wrote {}", cfg.out.display());
    Ok(())
}
