use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::{csv_error, csv_writer, fmt_f64, fmt_opt, median, thread_pool, write_config_echo, ExperimentConfig};
use crate::error::{Error, Result};
use crate::lanczos::{hager_norm1, lanczos_extremes};
use crate::linop::{FactoredSpd, Operator};
use crate::pcg::pcg_solve;
use crate::precond::{build_factor_only, build_partial_cholesky_with, Preconditioner};
use crate::rng::GaussianStream;
use crate::testgen::{build_4dvar_preconditioners, FourDVarSystem};

/// Partial Cholesky and the Nyström sketches store dense `s × r` blocks;
/// ranks pushing either above this many entries are skipped.
const DENSE_MAX_ENTRIES: usize = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FourDVarRow {
    pub trial: usize,
    pub rank: usize,
    pub preconditioner: String,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub termination: Option<&'static str>,
    pub operator_products: u64,
    pub applications: u64,
    pub status: String,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourDVarSummary {
    pub rank: usize,
    pub preconditioner: String,
    pub trials_ok: usize,
    pub iterations: Option<f64>,
    pub final_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `λ_max / λ_min`
    pub kappa: f64,
    pub lanczos_steps: usize,
    /// `‖S‖₁`
    pub norm1: f64,
    /// estimate of `‖S⁻¹‖₁`
    pub inverse_norm1: f64,
    /// `‖S‖₁ ‖S⁻¹‖₁`
    pub kappa_1: f64,
}

/// Relative residual of the `S⁻¹` solves inside the 1-norm estimator.
const INNER_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FourDVarOutcome {
    pub config: ExperimentConfig,
    pub rows: Vec<FourDVarRow>,
    pub summary: Vec<FourDVarSummary>,
    pub kappa: Option<KappaEstimate>,
}

impl FourDVarOutcome {
    pub fn iterations(&self, trial: usize, rank: usize, preconditioner: &str) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.trial == trial && r.rank == rank && r.preconditioner == preconditioner)
            .and_then(|r| r.iterations)
    }

    pub fn median_iterations(&self, rank: usize, preconditioner: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.rank == rank && s.preconditioner == preconditioner)
            .and_then(|s| s.iterations)
    }
}

/// Condition-number estimates of the 4D-VAR `S`.
///
/// `kappa` is the 2-norm `λ_max / λ_min` from Lanczos (the bottom of the
/// spectrum is clustered, so `λ_min` needs thousands of steps and is an upper
/// bound). `kappa_1` is `‖S‖₁ ‖S⁻¹‖₁` with `‖S⁻¹‖₁` from Hager's estimator
/// over PCG solves; this is what sparse `condest`-style routines report.
pub fn estimate_kappa(sys: &FourDVarSystem, steps: usize, seed: u64) -> Result<KappaEstimate> {
    let op = sys.s_operator();
    let eigs = lanczos_extremes(&op, steps, 1e-9, seed)?;
    let base = build_factor_only(sys.factor());
    let inner_maxit = 20 * sys.dim().min(5000);
    let inverse_norm1 = hager_norm1(
        sys.dim(),
        |v| {
            let rep = pcg_solve(&op, v, &base, INNER_TOL, inner_maxit, None)?;
            if !rep.converged() {
                return Err(Error::NoConvergence {
                    sweeps: rep.iterations,
                    off: rep.final_residual(),
                });
            }
            Ok(rep.solution)
        },
        5,
    )?;
    let norm1 = sys.s_norm1();
    Ok(KappaEstimate {
        lambda_min: eigs.min,
        lambda_max: eigs.max,
        kappa: eigs.condition(),
        lanczos_steps: eigs.steps,
        norm1,
        inverse_norm1,
        kappa_1: norm1 * inverse_norm1,
    })
}

pub fn run_fourdvar(cfg: &ExperimentConfig) -> Result<FourDVarOutcome> {
    cfg.validate()?;
    let sys = FourDVarSystem::assemble(cfg.fourdvar)?;
    let s_op = Arc::new(sys.s_operator());
    let wanted = |name: &str| cfg.preconditioners.iter().any(|p| p == name);

    // (trial, rank) jobs; rank-independent preconditioners run under rank 0
    let mut jobs = vec![];
    for trial in 0..cfg.trials {
        if wanted("identity") || wanted("ldl") {
            jobs.push((trial, 0usize));
        }
        for &r in &cfg.ranks {
            jobs.push((trial, r));
        }
    }
    let pool = thread_pool()?;
    let rows: Vec<Vec<FourDVarRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(trial, rank)| run_job(cfg, &sys, &s_op, trial, rank))
            .collect::<Result<_>>()
    })?;
    let rows: Vec<FourDVarRow> = rows.into_iter().flatten().collect();

    let mut summary = vec![];
    let mut keys: Vec<(usize, String)> = vec![];
    for r in &rows {
        let key = (r.rank, r.preconditioner.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (rank, name) in keys {
        let group: Vec<&FourDVarRow> = rows
            .iter()
            .filter(|r| r.rank == rank && r.preconditioner == name && r.status == "ok")
            .collect();
        summary.push(FourDVarSummary {
            rank,
            trials_ok: group.len(),
            iterations: median(group.iter().filter_map(|r| r.iterations.map(|i| i as f64))),
            final_residual: median(group.iter().filter_map(|r| r.final_residual)),
            preconditioner: name,
        });
    }

    let kappa = if cfg.kappa_steps > 0 {
        log::info!("estimating κ₂(S) with up to {} Lanczos steps", cfg.kappa_steps);
        Some(estimate_kappa(&sys, cfg.kappa_steps, cfg.seed)?)
    } else {
        None
    };
    Ok(FourDVarOutcome {
        config: cfg.clone(),
        rows,
        summary,
        kappa,
    })
}

fn run_job(
    cfg: &ExperimentConfig,
    sys: &FourDVarSystem,
    s_op: &Operator,
    trial: usize,
    rank: usize,
) -> Result<Vec<FourDVarRow>> {
    let wanted = |name: &str| cfg.preconditioners.iter().any(|p| p == name);
    let rhs = {
        let v = GaussianStream::new(cfg.rhs_seed(), trial as u64).vector(sys.dim());
        let norm = v.norm();
        v / norm
    };
    let mut built: Vec<(String, Result<Preconditioner>, f64)> = vec![];
    let timed = |f: &mut dyn FnMut() -> Result<Preconditioner>| {
        let t0 = Instant::now();
        let p = f();
        (p, t0.elapsed().as_secs_f64())
    };
    if rank == 0 {
        if wanted("identity") {
            built.push(("identity".into(), Ok(Preconditioner::identity(sys.dim())), 0.0));
        }
        if wanted("ldl") {
            let q: Arc<dyn FactoredSpd> = sys.factor();
            let (p, t) = timed(&mut || Ok(build_factor_only(q.clone())));
            built.push(("ldl".into(), p, t));
        }
    } else {
        if wanted("partial_cholesky") {
            let (p, t) = timed(&mut || {
                if sys.dim().saturating_mul(rank) > DENSE_MAX_ENTRIES {
                    return Err(Error::MemoryBudget {
                        what: "partial Cholesky",
                        entries: sys.dim() * rank,
                        budget: DENSE_MAX_ENTRIES,
                    });
                }
                let diag = sys.s_diagonal();
                build_partial_cholesky_with(sys.dim(), diag.as_slice(), rank, |j| sys.s_column(j))
            });
            built.push(("partial_cholesky".into(), p, t));
        }
        if wanted("nonscaled_nystrom") || wanted("scaled_nystrom") {
            let seed = cfg.sketch_seed().wrapping_add(trial as u64);
            let t0 = Instant::now();
            let pcs = if sys.dim().saturating_mul(rank) > DENSE_MAX_ENTRIES {
                Err(Error::MemoryBudget {
                    what: "Nyström sketch",
                    entries: sys.dim() * rank,
                    budget: DENSE_MAX_ENTRIES,
                })
            } else {
                build_4dvar_preconditioners(sys, rank, seed)
            };
            match pcs {
                Ok(pcs) => {
                    let t = t0.elapsed().as_secs_f64() / 2.0;
                    if wanted("nonscaled_nystrom") {
                        built.push(("nonscaled_nystrom".into(), Ok(pcs.nonscaled_nystrom), t));
                    }
                    if wanted("scaled_nystrom") {
                        built.push(("scaled_nystrom".into(), Ok(pcs.scaled_nystrom), t));
                    }
                }
                Err(e) => {
                    let t = t0.elapsed().as_secs_f64();
                    for name in ["nonscaled_nystrom", "scaled_nystrom"] {
                        if wanted(name) {
                            built.push((name.into(), Err(e.clone()), t));
                        }
                    }
                }
            }
        }
    }
    let rows = built
        .into_iter()
        .map(|(name, p, build_seconds)| solve_row(cfg, s_op, &rhs, trial, rank, name, p, build_seconds))
        .collect();
    log::info!("fourdvar trial {trial} rank {rank} done");
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn solve_row(
    cfg: &ExperimentConfig,
    s_op: &Operator,
    rhs: &DVector<f64>,
    trial: usize,
    rank: usize,
    name: String,
    p: Result<Preconditioner>,
    build_seconds: f64,
) -> FourDVarRow {
    let mut row = FourDVarRow {
        trial,
        rank,
        preconditioner: name,
        iterations: None,
        final_residual: None,
        termination: None,
        operator_products: 0,
        applications: 0,
        status: "ok".into(),
        build_seconds,
        solve_seconds: 0.0,
    };
    let p = match p {
        Ok(p) => p,
        Err(e) => {
            row.status = e.to_string();
            return row;
        }
    };
    let t0 = Instant::now();
    match pcg_solve(s_op, rhs, &p, cfg.tol, cfg.maxit, None) {
        Ok(rep) => {
            row.iterations = Some(rep.iterations);
            row.final_residual = Some(rep.final_residual());
            row.termination = Some(rep.termination.as_str());
        }
        Err(e) => row.status = e.to_string(),
    }
    row.solve_seconds = t0.elapsed().as_secs_f64();
    row.operator_products = p.build_stats().operator_products;
    row.applications = p.applications();
    row
}

/// Writes `results.csv`, `summary.csv`, `kappa.csv`, `timings.csv` and `config.json`.
pub fn write_fourdvar(outcome: &FourDVarOutcome) -> Result<()> {
    let cfg = &outcome.config;
    write_config_echo(cfg)?;
    let mut w = csv_writer(&cfg.out.join("results.csv"))?;
    let mut tm = csv_writer(&cfg.out.join("timings.csv"))?;
    w.write_record([
        "trial",
        "rank",
        "preconditioner",
        "iteration_count",
        "final_relative_residual",
        "termination",
        "build_operator_products",
        "preconditioner_applications",
        "status",
    ])
    .map_err(csv_error)?;
    tm.write_record(["trial", "rank", "preconditioner", "build_seconds", "solve_seconds"])
        .map_err(csv_error)?;
    for r in &outcome.rows {
        w.write_record([
            r.trial.to_string(),
            r.rank.to_string(),
            r.preconditioner.clone(),
            r.iterations.map(|i| i.to_string()).unwrap_or_else(|| "NA".into()),
            fmt_opt(r.final_residual, "NA"),
            r.termination.unwrap_or("NA").to_string(),
            r.operator_products.to_string(),
            r.applications.to_string(),
            r.status.clone(),
        ])
        .map_err(csv_error)?;
        tm.write_record([
            r.trial.to_string(),
            r.rank.to_string(),
            r.preconditioner.clone(),
            fmt_f64(r.build_seconds),
            fmt_f64(r.solve_seconds),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    tm.flush()?;

    let mut s = csv_writer(&cfg.out.join("summary.csv"))?;
    s.write_record(["rank", "preconditioner", "trials_ok", "iteration_count", "final_relative_residual"])
        .map_err(csv_error)?;
    for r in &outcome.summary {
        s.write_record([
            r.rank.to_string(),
            r.preconditioner.clone(),
            r.trials_ok.to_string(),
            fmt_opt(r.iterations, "NA"),
            fmt_opt(r.final_residual, "NA"),
        ])
        .map_err(csv_error)?;
    }
    s.flush()?;

    if let Some(k) = &outcome.kappa {
        let mut kw = csv_writer(&cfg.out.join("kappa.csv"))?;
        kw.write_record([
            "state_size",
            "lambda_min",
            "lambda_max",
            "cond_S",
            "lanczos_steps",
            "norm1_S",
            "norm1_S_inverse",
            "cond1_S",
        ])
        .map_err(csv_error)?;
        kw.write_record([
            cfg.fourdvar.state_size().to_string(),
            fmt_f64(k.lambda_min),
            fmt_f64(k.lambda_max),
            fmt_f64(k.kappa),
            k.lanczos_steps.to_string(),
            fmt_f64(k.norm1),
            fmt_f64(k.inverse_norm1),
            fmt_f64(k.kappa_1),
        ])
        .map_err(csv_error)?;
        kw.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{ConfigOverrides, ExperimentKind};
    use crate::experiment::config::FourDVarOverrides;
    use crate::linop::dense_eig_sym;

    #[test]
    fn small_run_rows_and_kappa() {
        let dir = tempfile::tempdir().unwrap();
        let flags = ConfigOverrides {
            fourdvar: Some(FourDVarOverrides {
                n: Some(20),
                steps: Some(4),
                m: Some(8),
                ..Default::default()
            }),
            ranks: Some(vec![5, 20]),
            trials: Some(2),
            kappa_steps: Some(2000),
            out: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(ExperimentKind::Fourdvar, None, &flags).unwrap();
        let out = run_fourdvar(&cfg).unwrap();
        // per trial: identity + ldl, then 3 per rank
        assert_eq!(out.rows.len(), 2 * (2 + 3 * 2));
        for r in &out.rows {
            assert_eq!(r.status, "ok", "{r:?}");
            assert!(r.iterations.unwrap() <= 150);
        }
        let k = out.kappa.unwrap();
        let sys = FourDVarSystem::assemble(cfg.fourdvar).unwrap();
        let e = dense_eig_sym(&sys.dense_s()).unwrap();
        let want = e.values[0] / e.values[e.values.len() - 1];
        assert!((k.kappa - want).abs() < 1e-3 * want, "{} vs {want}", k.kappa);
        let dense = sys.dense_s().into_matrix();
        let inv = dense.clone().try_inverse().unwrap();
        let norm1 = |m: &nalgebra::DMatrix<f64>| m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
        assert!((k.norm1 - norm1(&dense)).abs() < 1e-12 * k.norm1);
        let want1 = norm1(&dense) * norm1(&inv);
        assert!(k.kappa_1 <= want1 * (1.0 + 1e-8) && k.kappa_1 > 0.9 * want1, "{} vs {want1}", k.kappa_1);
        write_fourdvar(&out).unwrap();
        for f in ["results.csv", "summary.csv", "kappa.csv", "timings.csv", "config.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
