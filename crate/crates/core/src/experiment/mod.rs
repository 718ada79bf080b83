//! Config-driven experiment runners behind the command-line tool.
//!
//! Each runner returns an in-memory outcome; `write_*` functions turn it into
//! CSV files under the output directory. Wall-clock timings go to a separate
//! `timings.csv` so that `results.csv` is byte-identical across runs with the
//! same config.

mod analyze;
mod config;
mod fourdvar;
mod roster;
mod solve;
mod synthetic;

use std::fs::File;
use std::path::Path;

pub use analyze::{run_analyze, write_analyze, AnalyzeOutcome, AnalyzeRecord};
pub use config::{ConfigOverrides, ExperimentConfig, ExperimentKind, FourDVarOverrides};
pub use fourdvar::{estimate_kappa, run_fourdvar, write_fourdvar, FourDVarOutcome, FourDVarRow, FourDVarSummary, KappaEstimate};
pub use roster::{DenseProblem, RosterEntry};
pub use solve::{run_solve, write_solve, SolveOutcome};
pub use synthetic::{run_synthetic, write_synthetic, CellResult, PcRecord, SyntheticOutcome, SyntheticSummary};

use crate::error::{Error, Result};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "BREGMAN_PRECOND_THREADS";

/// A rayon pool sized by `BREGMAN_PRECOND_THREADS` (default: rayon's choice).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        if n > 0 {
            builder = builder.num_threads(n);
        }
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Median of the finite entries, `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.6e}")
}

pub(crate) fn fmt_opt(v: Option<f64>, missing: &str) -> String {
    v.map(fmt_f64).unwrap_or_else(|| missing.to_string())
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_error)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes the resolved config as pretty JSON to `config.json` under `out`.
pub fn write_config_echo(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    let json = serde_json::to_string_pretty(cfg).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(cfg.out.join("config.json"), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even_and_nan() {
        assert_eq!(median([3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median([f64::NAN, 1.0]), Some(1.0));
        assert_eq!(median(Vec::<f64>::new()), None);
    }
}
