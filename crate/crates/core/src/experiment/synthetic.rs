use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::{csv_error, csv_writer, fmt_f64, fmt_opt, median, thread_pool, write_config_echo};
use super::{DenseProblem, ExperimentConfig, RosterEntry};
use crate::bregman::divergence_ld;
use crate::error::Result;
use crate::lanczos::lanczos_extremes;
use crate::linop::{dense_eig_sym, DenseSym, FactoredSpd, Operator};
use crate::pcg::{pcg_solve, SolveReport};
use crate::precond::Preconditioner;
use crate::rng::GaussianStream;
use crate::sketch::SketchConfig;
use crate::testgen::{assemble_synthetic_stream, SpectrumParams};

/// Largest `n` for which `κ₂(S)` is computed by a dense eigensolve; above it
/// a Lanczos estimate is used.
const DENSE_KAPPA_MAX: usize = 600;

/// One preconditioner on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcRecord {
    pub preconditioner: &'static str,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub termination: Option<&'static str>,
    pub divergence: Option<f64>,
    pub operator_products: u64,
    pub factor_solves: u64,
    pub applications: u64,
    /// `"ok"` or the error that stopped this row
    pub status: String,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

/// All preconditioners on one `(A label, B label, trial)` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub a_label: String,
    pub b_label: String,
    pub trial: usize,
    pub cond_s: Option<f64>,
    pub records: Vec<PcRecord>,
}

/// Medians over trials for one `(A, B, preconditioner)` combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSummary {
    pub a_label: String,
    pub b_label: String,
    pub preconditioner: &'static str,
    pub trials_ok: usize,
    pub cond_s: Option<f64>,
    pub iterations: Option<f64>,
    pub final_residual: Option<f64>,
    pub divergence: Option<f64>,
    pub operator_products: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticOutcome {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub summary: Vec<SyntheticSummary>,
}

impl SyntheticOutcome {
    pub fn find(&self, a: &str, b: &str, preconditioner: &str) -> Option<&SyntheticSummary> {
        self.summary
            .iter()
            .find(|s| s.a_label == a && s.b_label == b && s.preconditioner == preconditioner)
    }
}

pub fn run_synthetic(cfg: &ExperimentConfig) -> Result<SyntheticOutcome> {
    cfg.validate()?;
    let roster: Vec<RosterEntry> = cfg
        .preconditioners
        .iter()
        .map(|n| RosterEntry::parse(n))
        .collect::<Result<_>>()?;
    let mut jobs = vec![];
    for a in &cfg.a_labels {
        for b in &cfg.b_labels {
            for trial in 0..cfg.trials {
                jobs.push((a.clone(), b.clone(), trial));
            }
        }
    }
    let pool = thread_pool()?;
    let cells: Vec<CellResult> = pool.install(|| {
        jobs.par_iter()
            .map(|(a, b, trial)| run_cell(cfg, &roster, a, b, *trial))
            .collect::<Result<_>>()
    })?;
    let summary = summarize(cfg, &roster, &cells);
    Ok(SyntheticOutcome {
        config: cfg.clone(),
        cells,
        summary,
    })
}

fn run_cell(cfg: &ExperimentConfig, roster: &[RosterEntry], a: &str, b: &str, trial: usize) -> Result<CellResult> {
    let pa = SpectrumParams::label(a)?;
    let pb = SpectrumParams::label(b)?;
    let prob = assemble_synthetic_stream(&pa, &pb, cfg.n, cfg.m, cfg.seed, trial as u64)?;
    let q: Arc<dyn FactoredSpd> = prob.q.clone();
    let mut dense = DenseProblem::new(&prob.a, prob.b.clone(), q)?;
    dense.b_truncated = Some(prob.b_truncated(cfg.rank));
    let cond_s = condition_number(&dense.s, cfg.seed);
    let rhs = {
        let v = GaussianStream::new(cfg.rhs_seed(), trial as u64).vector(cfg.n);
        let norm = v.norm();
        v / norm
    };
    let sketch = SketchConfig::new(cfg.rank, cfg.oversample, cfg.power, cfg.sketch_seed()).with_stream(trial as u64);
    let s_op = Operator::from_sym(&dense.s);
    let records = roster
        .iter()
        .map(|&entry| {
            let t0 = Instant::now();
            let built = dense.build(entry, &sketch);
            let build_seconds = t0.elapsed().as_secs_f64();
            match built {
                Ok(p) => evaluate(cfg, entry, &p, &dense.s, &s_op, &rhs, build_seconds),
                Err(e) => failed(entry, e.to_string(), build_seconds),
            }
        })
        .collect();
    log::info!("synthetic {a}/{b} trial {trial} done");
    Ok(CellResult {
        a_label: a.to_string(),
        b_label: b.to_string(),
        trial,
        cond_s,
        records,
    })
}

pub(super) fn condition_number(s: &DenseSym, seed: u64) -> Option<f64> {
    if s.dim() <= DENSE_KAPPA_MAX {
        let e = dense_eig_sym(s).ok()?;
        Some(e.values[0] / e.values[s.dim() - 1])
    } else {
        let op = Operator::from_sym(s);
        lanczos_extremes(&op, 4 * s.dim(), 1e-10, seed).ok().map(|e| e.condition())
    }
}

pub(super) fn failed(entry: RosterEntry, status: String, build_seconds: f64) -> PcRecord {
    PcRecord {
        preconditioner: entry.name(),
        iterations: None,
        final_residual: None,
        termination: None,
        divergence: None,
        operator_products: 0,
        factor_solves: 0,
        applications: 0,
        status,
        build_seconds,
        solve_seconds: 0.0,
    }
}

pub(super) fn evaluate(
    cfg: &ExperimentConfig,
    entry: RosterEntry,
    p: &Preconditioner,
    s: &DenseSym,
    s_op: &Operator,
    rhs: &nalgebra::DVector<f64>,
    build_seconds: f64,
) -> PcRecord {
    let divergence = if s.dim() <= cfg.dense_cap {
        DenseSym::from_matrix(p.dense_form())
            .and_then(|pd| divergence_ld(&pd, s))
            .map(|d| d.value)
            .ok()
    } else {
        None
    };
    let t0 = Instant::now();
    let solved: Result<SolveReport> = pcg_solve(s_op, rhs, p, cfg.tol, cfg.maxit, None);
    let solve_seconds = t0.elapsed().as_secs_f64();
    let stats = p.build_stats();
    match solved {
        Ok(rep) => PcRecord {
            preconditioner: entry.name(),
            iterations: Some(rep.iterations),
            final_residual: Some(rep.final_residual()),
            termination: Some(rep.termination.as_str()),
            divergence,
            operator_products: stats.operator_products,
            factor_solves: stats.factor_solves,
            applications: p.applications(),
            status: "ok".into(),
            build_seconds,
            solve_seconds,
        },
        Err(e) => failed(entry, e.to_string(), build_seconds),
    }
}

fn summarize(cfg: &ExperimentConfig, roster: &[RosterEntry], cells: &[CellResult]) -> Vec<SyntheticSummary> {
    let mut out = vec![];
    for a in &cfg.a_labels {
        for b in &cfg.b_labels {
            let group: Vec<&CellResult> = cells.iter().filter(|c| &c.a_label == a && &c.b_label == b).collect();
            for (k, entry) in roster.iter().enumerate() {
                let recs: Vec<&PcRecord> = group.iter().map(|c| &c.records[k]).collect();
                let ok: Vec<&&PcRecord> = recs.iter().filter(|r| r.status == "ok").collect();
                let failures = recs.len() - ok.len();
                let status = if failures == 0 {
                    "ok".to_string()
                } else {
                    let first = recs.iter().find(|r| r.status != "ok").unwrap();
                    format!("{failures}/{} failed: {}", recs.len(), first.status)
                };
                out.push(SyntheticSummary {
                    a_label: a.clone(),
                    b_label: b.clone(),
                    preconditioner: entry.name(),
                    trials_ok: ok.len(),
                    cond_s: median(group.iter().filter_map(|c| c.cond_s)),
                    iterations: median(ok.iter().filter_map(|r| r.iterations.map(|i| i as f64))),
                    final_residual: median(ok.iter().filter_map(|r| r.final_residual)),
                    divergence: median(ok.iter().filter_map(|r| r.divergence)),
                    operator_products: median(ok.iter().map(|r| r.operator_products as f64)),
                    status,
                });
            }
        }
    }
    out
}

/// Writes `results.csv` (medians), `trials.csv`, `timings.csv` and `config.json`.
pub fn write_synthetic(outcome: &SyntheticOutcome) -> Result<()> {
    let cfg = &outcome.config;
    write_config_echo(cfg)?;
    let mut w = csv_writer(&cfg.out.join("results.csv"))?;
    w.write_record([
        "A",
        "B",
        "preconditioner",
        "n",
        "m",
        "rank",
        "trials_ok",
        "cond_S",
        "iteration_count",
        "final_relative_residual",
        "bregman_divergence_ld",
        "build_operator_products",
        "status",
    ])
    .map_err(csv_error)?;
    for s in &outcome.summary {
        w.write_record([
            s.a_label.clone(),
            s.b_label.clone(),
            s.preconditioner.to_string(),
            cfg.n.to_string(),
            cfg.m.to_string(),
            cfg.rank.to_string(),
            s.trials_ok.to_string(),
            fmt_opt(s.cond_s, "NA"),
            fmt_opt(s.iterations, "NA"),
            fmt_opt(s.final_residual, "NA"),
            fmt_opt(s.divergence, "skipped"),
            fmt_opt(s.operator_products, "NA"),
            s.status.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;

    let mut t = csv_writer(&cfg.out.join("trials.csv"))?;
    let mut tm = csv_writer(&cfg.out.join("timings.csv"))?;
    t.write_record([
        "A",
        "B",
        "trial",
        "preconditioner",
        "cond_S",
        "iteration_count",
        "final_relative_residual",
        "termination",
        "bregman_divergence_ld",
        "build_operator_products",
        "factor_solves",
        "preconditioner_applications",
        "status",
    ])
    .map_err(csv_error)?;
    tm.write_record(["A", "B", "trial", "preconditioner", "build_seconds", "solve_seconds"])
        .map_err(csv_error)?;
    for c in &outcome.cells {
        for r in &c.records {
            t.write_record([
                c.a_label.clone(),
                c.b_label.clone(),
                c.trial.to_string(),
                r.preconditioner.to_string(),
                fmt_opt(c.cond_s, "NA"),
                r.iterations.map(|i| i.to_string()).unwrap_or_else(|| "NA".into()),
                fmt_opt(r.final_residual, "NA"),
                r.termination.unwrap_or("NA").to_string(),
                fmt_opt(r.divergence, "skipped"),
                r.operator_products.to_string(),
                r.factor_solves.to_string(),
                r.applications.to_string(),
                r.status.clone(),
            ])
            .map_err(csv_error)?;
            tm.write_record([
                c.a_label.clone(),
                c.b_label.clone(),
                c.trial.to_string(),
                r.preconditioner.to_string(),
                fmt_f64(r.build_seconds),
                fmt_f64(r.solve_seconds),
            ])
            .map_err(csv_error)?;
        }
    }
    t.flush()?;
    tm.flush()?;
    Ok(())
}
