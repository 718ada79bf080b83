use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::roster::RosterEntry;
use crate::error::{Error, Result};
use crate::pcg::DENSE_CAP;
use crate::testgen::{FourDVarConfig, SpectrumParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Synthetic,
    Fourdvar,
    Analyze,
    Solve,
}

/// Fully resolved experiment configuration (also the JSON echo format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// dimension of `A`, `B` (synthetic / analyze)
    pub n: usize,
    /// rank of `B` (synthetic / analyze)
    pub m: usize,
    /// truncation rank `r`
    pub rank: usize,
    /// ranks swept by `fourdvar`
    pub ranks: Vec<usize>,
    pub oversample: usize,
    pub power: usize,
    pub tol: f64,
    pub maxit: usize,
    pub trials: usize,
    pub a_labels: Vec<String>,
    pub b_labels: Vec<String>,
    pub preconditioners: Vec<String>,
    pub fourdvar: FourDVarConfig,
    pub full_scale: bool,
    /// Lanczos step budget for the 4D-VAR condition-number estimate
    pub kappa_steps: usize,
    pub dense_cap: usize,
    pub matrix_a: Option<PathBuf>,
    pub matrix_b: Option<PathBuf>,
    pub rhs: Option<PathBuf>,
    pub out: PathBuf,
}

/// Optional values from a JSON config file or command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub rank: Option<usize>,
    pub ranks: Option<Vec<usize>>,
    pub oversample: Option<usize>,
    pub power: Option<usize>,
    pub tol: Option<f64>,
    pub maxit: Option<usize>,
    pub trials: Option<usize>,
    pub a_labels: Option<Vec<String>>,
    pub b_labels: Option<Vec<String>>,
    pub preconditioners: Option<Vec<String>>,
    pub fourdvar: Option<FourDVarOverrides>,
    pub full_scale: Option<bool>,
    pub kappa_steps: Option<usize>,
    pub dense_cap: Option<usize>,
    pub matrix_a: Option<PathBuf>,
    pub matrix_b: Option<PathBuf>,
    pub rhs: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourDVarOverrides {
    pub n: Option<usize>,
    pub steps: Option<usize>,
    pub m: Option<usize>,
    pub dt: Option<f64>,
    pub dx: Option<f64>,
    pub tau_d: Option<f64>,
    pub tau_r: Option<f64>,
}

impl ConfigOverrides {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl ExperimentConfig {
    /// Built-in defaults: the reduced-scale runs, or the full-size problems with `full_scale`.
    pub fn defaults(kind: ExperimentKind, full_scale: bool) -> Self {
        let mut cfg = Self {
            experiment: kind,
            seed: 0,
            n: 200,
            m: 120,
            rank: 60,
            ranks: vec![],
            oversample: 0,
            power: 2,
            tol: 1e-7,
            maxit: 1000,
            trials: 25,
            a_labels: strings(&SpectrumParams::labels_a()),
            b_labels: strings(&SpectrumParams::labels_b()),
            preconditioners: RosterEntry::all().iter().map(|e| e.name().to_string()).collect(),
            fourdvar: FourDVarConfig::reduced(),
            full_scale,
            kappa_steps: 3000,
            dense_cap: DENSE_CAP,
            matrix_a: None,
            matrix_b: None,
            rhs: None,
            out: PathBuf::from("results"),
        };
        match kind {
            ExperimentKind::Synthetic if full_scale => {
                cfg.n = 1000;
                cfg.m = 600;
                cfg.rank = 300;
            }
            ExperimentKind::Synthetic => {}
            ExperimentKind::Fourdvar => {
                cfg.tol = 1e-6;
                cfg.maxit = 150;
                cfg.trials = 10;
                cfg.preconditioners = strings(&["identity", "ldl", "partial_cholesky", "nonscaled_nystrom", "scaled_nystrom"]);
                if full_scale {
                    cfg.fourdvar = FourDVarConfig::full();
                    cfg.ranks = vec![500, 2000, 4000];
                    cfg.trials = 1;
                    cfg.kappa_steps = 20000;
                } else {
                    cfg.ranks = vec![25, 100];
                }
                cfg.rank = cfg.ranks[0];
            }
            ExperimentKind::Analyze => {
                cfg.n = 100;
                cfg.m = 60;
                cfg.rank = 30;
                cfg.trials = 1;
                cfg.a_labels = strings(&["A4"]);
                cfg.b_labels = strings(&["B1"]);
            }
            ExperimentKind::Solve => {
                cfg.trials = 1;
                cfg.rank = 10;
            }
        }
        cfg
    }

    /// Defaults, then the config file, then flags (later wins).
    pub fn resolve(kind: ExperimentKind, file: Option<&ConfigOverrides>, flags: &ConfigOverrides) -> Result<Self> {
        if let Some(k) = file.and_then(|f| f.experiment) {
            if k != kind {
                return Err(Error::InvalidArgument(format!(
                    "config file is for {k:?} but the {kind:?} subcommand was run"
                )));
            }
        }
        let full_scale = flags
            .full_scale
            .or(file.and_then(|f| f.full_scale))
            .unwrap_or(false);
        let mut cfg = Self::defaults(kind, full_scale);
        if let Some(f) = file {
            cfg.apply(f);
        }
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field { self.$field = v.clone(); }
            )*};
        }
        take!(seed, n, m, oversample, power, tol, maxit, trials, a_labels, b_labels, preconditioners, full_scale, kappa_steps, dense_cap, out);
        if let Some(r) = o.rank {
            self.rank = r;
            if self.experiment == ExperimentKind::Fourdvar && o.ranks.is_none() {
                self.ranks = vec![r];
            }
        }
        if let Some(rs) = &o.ranks {
            self.ranks = rs.clone();
        }
        for (dst, src) in [(&mut self.matrix_a, &o.matrix_a), (&mut self.matrix_b, &o.matrix_b), (&mut self.rhs, &o.rhs)] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        if let Some(f) = &o.fourdvar {
            let c = &mut self.fourdvar;
            c.n = f.n.unwrap_or(c.n);
            c.steps = f.steps.unwrap_or(c.steps);
            c.m = f.m.unwrap_or(c.m);
            c.dt = f.dt.unwrap_or(c.dt);
            c.dx = f.dx.unwrap_or(c.dx);
            c.tau_d = f.tau_d.unwrap_or(c.tau_d);
            c.tau_r = f.tau_r.unwrap_or(c.tau_r);
        }
        self.fourdvar.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.tol > 0.0) {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        if self.trials == 0 {
            return bad("trials must be ≥ 1".into());
        }
        for name in &self.preconditioners {
            self.check_preconditioner(name)?;
        }
        match self.experiment {
            ExperimentKind::Synthetic | ExperimentKind::Analyze => {
                if self.n == 0 || self.m > self.n {
                    return bad(format!("need 1 ≤ n and m ≤ n (n = {}, m = {})", self.n, self.m));
                }
                if self.rank == 0 || self.rank + self.oversample > self.n {
                    return bad(format!(
                        "rank {} + oversampling {} must lie in 1..={}",
                        self.rank, self.oversample, self.n
                    ));
                }
                for l in self.a_labels.iter().chain(&self.b_labels) {
                    SpectrumParams::label(l)?;
                }
                if self.experiment == ExperimentKind::Analyze && self.n > self.dense_cap {
                    return Err(Error::DenseCapExceeded { n: self.n, cap: self.dense_cap });
                }
            }
            ExperimentKind::Fourdvar => {
                self.fourdvar.validate()?;
                if self.ranks.is_empty() {
                    return bad("fourdvar needs at least one rank".into());
                }
                let p = self.fourdvar.obs_size();
                if let Some(r) = self.ranks.iter().find(|&&r| r > p) {
                    return bad(format!("rank {r} exceeds observation count {p}"));
                }
            }
            ExperimentKind::Solve => {
                if self.matrix_a.is_none() || self.matrix_b.is_none() {
                    return bad("solve needs matrix_a and matrix_b (Matrix Market files)".into());
                }
            }
        }
        Ok(())
    }

    fn check_preconditioner(&self, name: &str) -> Result<()> {
        if self.experiment == ExperimentKind::Fourdvar {
            if ["identity", "ldl", "partial_cholesky", "nonscaled_nystrom", "scaled_nystrom"].contains(&name) {
                return Ok(());
            }
            return Err(Error::InvalidArgument(format!("unknown 4D-VAR preconditioner {name:?}")));
        }
        RosterEntry::parse(name).map(|_| ())
    }

    /// Seed for sketches (kept apart from the problem-generation stream).
    pub fn sketch_seed(&self) -> u64 {
        self.seed ^ 0x9E37_79B9_7F4A_7C15
    }

    /// Seed for right-hand sides.
    pub fn rhs_seed(&self) -> u64 {
        self.seed ^ 0xD1B5_4A32_D192_ED03
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ConfigOverrides::from_json(r#"{"experiment": "synthetic", "n": 50, "m": 20, "rank": 5, "trials": 3}"#).unwrap();
        let flags = ConfigOverrides {
            trials: Some(7),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(ExperimentKind::Synthetic, Some(&file), &flags).unwrap();
        assert_eq!((cfg.n, cfg.m, cfg.rank, cfg.trials), (50, 20, 5, 7));
        assert_eq!(cfg.tol, 1e-7);
    }

    #[test]
    fn unknown_fields_and_mismatched_kind_rejected() {
        assert!(ConfigOverrides::from_json(r#"{"bogus": 1}"#).is_err());
        let file = ConfigOverrides::from_json(r#"{"experiment": "analyze"}"#).unwrap();
        assert!(ExperimentConfig::resolve(ExperimentKind::Synthetic, Some(&file), &Default::default()).is_err());
    }

    #[test]
    fn fourdvar_defaults_and_rank_flag() {
        let cfg = ExperimentConfig::resolve(ExperimentKind::Fourdvar, None, &Default::default()).unwrap();
        assert_eq!(cfg.ranks, vec![25, 100]);
        assert_eq!((cfg.tol, cfg.maxit), (1e-6, 150));
        let flags = ConfigOverrides { rank: Some(40), ..Default::default() };
        let cfg = ExperimentConfig::resolve(ExperimentKind::Fourdvar, None, &flags).unwrap();
        assert_eq!(cfg.ranks, vec![40]);
        let full = ConfigOverrides { full_scale: Some(true), ..Default::default() };
        let cfg = ExperimentConfig::resolve(ExperimentKind::Fourdvar, None, &full).unwrap();
        assert_eq!(cfg.fourdvar.state_size(), 100_000);
        let file = ConfigOverrides::from_json(r#"{"fourdvar": {"n": 40, "m": 10, "steps": 4}, "ranks": [5, 20]}"#).unwrap();
        let cfg = ExperimentConfig::resolve(ExperimentKind::Fourdvar, Some(&file), &Default::default()).unwrap();
        assert_eq!((cfg.fourdvar.n, cfg.fourdvar.m, cfg.fourdvar.steps), (40, 10, 4));
    }

    #[test]
    fn validation() {
        let bad = ConfigOverrides { tol: Some(0.0), ..Default::default() };
        assert!(ExperimentConfig::resolve(ExperimentKind::Synthetic, None, &bad).is_err());
        let bad = ConfigOverrides { a_labels: Some(vec!["A9".into()]), ..Default::default() };
        assert!(ExperimentConfig::resolve(ExperimentKind::Synthetic, None, &bad).is_err());
        let bad = ConfigOverrides { preconditioners: Some(vec!["ilu".into()]), ..Default::default() };
        assert!(ExperimentConfig::resolve(ExperimentKind::Synthetic, None, &bad).is_err());
        assert!(ExperimentConfig::resolve(ExperimentKind::Solve, None, &Default::default()).is_err());
        let big = ConfigOverrides { n: Some(3000), m: Some(10), dense_cap: Some(2000), ..Default::default() };
        assert!(matches!(
            ExperimentConfig::resolve(ExperimentKind::Analyze, None, &big),
            Err(Error::DenseCapExceeded { .. })
        ));
    }
}
