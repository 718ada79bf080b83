use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use super::synthetic::{condition_number, evaluate, failed, PcRecord};
use super::{csv_error, csv_writer, fmt_f64, fmt_opt, write_config_echo, DenseProblem, ExperimentConfig, RosterEntry};
use crate::error::{Error, Result};
use crate::linop::{cholesky_factor, mm, FactoredSpd, Operator};
use crate::rng::GaussianStream;
use crate::sketch::SketchConfig;

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub config: ExperimentConfig,
    pub cond_s: Option<f64>,
    pub records: Vec<PcRecord>,
}

/// Solves `(A + B) x = b` for Matrix Market inputs `A` (SPD) and `B` (PSD)
/// with every configured preconditioner.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let a = mm::read_sym_file(cfg.matrix_a.as_ref().expect("validated"))?;
    let b = mm::read_sym_file(cfg.matrix_b.as_ref().expect("validated"))?;
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let n = a.dim();
    if cfg.rank == 0 || cfg.rank + cfg.oversample > n {
        return Err(Error::InvalidArgument(format!("rank {} + oversampling {} must lie in 1..={n}", cfg.rank, cfg.oversample)));
    }
    let rhs = match &cfg.rhs {
        Some(path) => {
            let m = mm::read_matrix_file(path)?;
            if m.ncols() != 1 || m.nrows() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.nrows() * m.ncols() });
            }
            DVector::from_column_slice(m.as_slice())
        }
        None => {
            let v = GaussianStream::new(cfg.rhs_seed(), 0).vector(n);
            let norm = v.norm();
            v / norm
        }
    };
    let q: Arc<dyn FactoredSpd> = Arc::new(cholesky_factor(&a)?);
    let dense = DenseProblem::new(&a, b, q)?;
    let cond_s = condition_number(&dense.s, cfg.seed);
    let sketch = SketchConfig::new(cfg.rank, cfg.oversample, cfg.power, cfg.sketch_seed());
    let s_op = Operator::from_sym(&dense.s);
    let records = cfg
        .preconditioners
        .iter()
        .map(|name| {
            let entry = RosterEntry::parse(name)?;
            let t0 = Instant::now();
            let built = dense.build(entry, &sketch);
            let secs = t0.elapsed().as_secs_f64();
            Ok(match built {
                Ok(p) => evaluate(cfg, entry, &p, &dense.s, &s_op, &rhs, secs),
                Err(e) => failed(entry, e.to_string(), secs),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SolveOutcome {
        config: cfg.clone(),
        cond_s,
        records,
    })
}

/// Writes `results.csv`, `timings.csv` and `config.json`.
pub fn write_solve(outcome: &SolveOutcome) -> Result<()> {
    let cfg = &outcome.config;
    write_config_echo(cfg)?;
    let mut w = csv_writer(&cfg.out.join("results.csv"))?;
    let mut tm = csv_writer(&cfg.out.join("timings.csv"))?;
    w.write_record([
        "preconditioner",
        "cond_S",
        "iteration_count",
        "final_relative_residual",
        "termination",
        "bregman_divergence_ld",
        "build_operator_products",
        "status",
    ])
    .map_err(csv_error)?;
    tm.write_record(["preconditioner", "build_seconds", "solve_seconds"]).map_err(csv_error)?;
    for r in &outcome.records {
        w.write_record([
            r.preconditioner.to_string(),
            fmt_opt(outcome.cond_s, "NA"),
            r.iterations.map(|i| i.to_string()).unwrap_or_else(|| "NA".into()),
            fmt_opt(r.final_residual, "NA"),
            r.termination.unwrap_or("NA").to_string(),
            fmt_opt(r.divergence, "skipped"),
            r.operator_products.to_string(),
            r.status.clone(),
        ])
        .map_err(csv_error)?;
        tm.write_record([
            r.preconditioner.to_string(),
            fmt_f64(r.build_seconds),
            fmt_f64(r.solve_seconds),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    tm.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{ConfigOverrides, ExperimentKind};
    use crate::testgen::{assemble_synthetic, SpectrumParams};

    #[test]
    fn solves_matrix_market_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let prob = assemble_synthetic(
            &SpectrumParams::label("A2").unwrap(),
            &SpectrumParams::label("B1").unwrap(),
            20,
            8,
            1,
        )
        .unwrap();
        let (pa, pb) = (dir.path().join("a.mtx"), dir.path().join("b.mtx"));
        mm::write_sym_file(&pa, &prob.a).unwrap();
        mm::write_sym_file(&pb, &prob.b).unwrap();
        let flags = ConfigOverrides {
            matrix_a: Some(pa),
            matrix_b: Some(pb),
            rank: Some(4),
            out: Some(dir.path().join("out")),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(ExperimentKind::Solve, None, &flags).unwrap();
        let out = run_solve(&cfg).unwrap();
        assert_eq!(out.records.len(), 12);
        for r in &out.records {
            assert_eq!(r.status, "ok", "{}", r.preconditioner);
            assert_eq!(r.termination, Some("converged"));
        }
        write_solve(&out).unwrap();
        assert!(dir.path().join("out/results.csv").exists());
    }
}
