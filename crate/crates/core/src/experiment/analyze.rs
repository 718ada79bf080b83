use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{csv_error, csv_writer, fmt_f64, write_config_echo, DenseProblem, ExperimentConfig, RosterEntry};
use crate::bregman::{divergence_ld, divergence_terms, TermMatrix};
use crate::error::{Error, Result};
use crate::linop::{whitened_dense, DenseSym, FactoredSpd};
use crate::pcg::generalized_eigs_capped;
use crate::sketch::SketchConfig;
use crate::testgen::{assemble_synthetic, SpectrumParams};

/// Divergence terms and generalized spectrum of one preconditioner.
#[derive(Debug, Clone)]
pub struct AnalyzeRecord {
    pub preconditioner: &'static str,
    pub divergence: f64,
    /// Terms of `D_LD(Q⁻¹ P Q⁻ᵀ, Q⁻¹ S Q⁻ᵀ)`, which equals `D_LD(P, S)`.
    pub terms: TermMatrix,
    /// Eigenvalues of `P⁻¹ S`, descending.
    pub generalized_eigs: DVector<f64>,
}

impl AnalyzeRecord {
    /// `max |alignment − I|` over the leading `r × r` block.
    pub fn leading_alignment_error(&self, r: usize) -> f64 {
        let r = r.min(self.terms.alignment.nrows());
        (self.terms.alignment.view((0, 0), (r, r)) - DMatrix::<f64>::identity(r, r)).amax()
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub config: ExperimentConfig,
    pub s_eigenvalues: DVector<f64>,
    pub records: Vec<AnalyzeRecord>,
}

impl AnalyzeOutcome {
    pub fn record(&self, name: &str) -> Option<&AnalyzeRecord> {
        self.records.iter().find(|r| r.preconditioner == name)
    }
}

pub fn run_analyze(cfg: &ExperimentConfig) -> Result<AnalyzeOutcome> {
    cfg.validate()?;
    if cfg.n > cfg.dense_cap {
        return Err(Error::DenseCapExceeded { n: cfg.n, cap: cfg.dense_cap });
    }
    let pa = SpectrumParams::label(&cfg.a_labels[0])?;
    let pb = SpectrumParams::label(&cfg.b_labels[0])?;
    let prob = assemble_synthetic(&pa, &pb, cfg.n, cfg.m, cfg.seed)?;
    let q: Arc<dyn FactoredSpd> = prob.q.clone();
    let mut dense = DenseProblem::new(&prob.a, prob.b.clone(), q.clone())?;
    dense.b_truncated = Some(prob.b_truncated(cfg.rank));
    let sketch = SketchConfig::new(cfg.rank, cfg.oversample, cfg.power, cfg.sketch_seed());
    let s_white = whitened_dense(q.as_ref(), &dense.s)?;
    let s_eigenvalues = generalized_eigs_capped(&crate::precond::Preconditioner::identity(cfg.n), &dense.s, cfg.dense_cap)?;

    let mut records = vec![];
    for name in &cfg.preconditioners {
        let entry = RosterEntry::parse(name)?;
        let p = dense.build(entry, &sketch)?;
        let pd = DenseSym::from_matrix(p.dense_form())?;
        let divergence = divergence_ld(&pd, &dense.s)?.value;
        let terms = divergence_terms(&whitened_dense(q.as_ref(), &pd)?, &s_white)?;
        let generalized_eigs = generalized_eigs_capped(&p, &dense.s, cfg.dense_cap)?;
        records.push(AnalyzeRecord {
            preconditioner: entry.name(),
            divergence,
            terms,
            generalized_eigs,
        });
    }
    Ok(AnalyzeOutcome {
        config: cfg.clone(),
        s_eigenvalues,
        records,
    })
}

fn write_grid(path: &std::path::Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record((1..=m.ncols()).map(|j| format!("j{j}"))).map_err(csv_error)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, per-preconditioner `alignment_*.csv` and
/// `scalar_terms_*.csv` grids, `generalized_eigs.csv` and `config.json`.
pub fn write_analyze(outcome: &AnalyzeOutcome) -> Result<()> {
    let cfg = &outcome.config;
    write_config_echo(cfg)?;
    let mut w = csv_writer(&cfg.out.join("results.csv"))?;
    w.write_record([
        "preconditioner",
        "bregman_divergence_ld",
        "term_sum",
        "leading_alignment_error",
        "cond_P_inv_S",
    ])
    .map_err(csv_error)?;
    for r in &outcome.records {
        let g = &r.generalized_eigs;
        w.write_record([
            r.preconditioner.to_string(),
            fmt_f64(r.divergence),
            fmt_f64(r.terms.total()),
            fmt_f64(r.leading_alignment_error(cfg.rank)),
            fmt_f64(g[0] / g[g.len() - 1]),
        ])
        .map_err(csv_error)?;
        write_grid(&cfg.out.join(format!("alignment_{}.csv", r.preconditioner)), &r.terms.alignment)?;
        write_grid(&cfg.out.join(format!("scalar_terms_{}.csv", r.preconditioner)), &r.terms.scalar_terms)?;
    }
    w.flush()?;

    let mut e = csv_writer(&cfg.out.join("generalized_eigs.csv"))?;
    let mut header = vec!["index".to_string(), "S".to_string()];
    header.extend(outcome.records.iter().map(|r| r.preconditioner.to_string()));
    e.write_record(&header).map_err(csv_error)?;
    for i in 0..cfg.n {
        let mut row = vec![(i + 1).to_string(), fmt_f64(outcome.s_eigenvalues[i])];
        row.extend(outcome.records.iter().map(|r| fmt_f64(r.generalized_eigs[i])));
        e.write_record(&row).map_err(csv_error)?;
    }
    e.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{ConfigOverrides, ExperimentKind};

    #[test]
    fn scaled_aligns_and_terms_sum_to_divergence() {
        let dir = tempfile::tempdir().unwrap();
        let flags = ConfigOverrides {
            n: Some(40),
            m: Some(24),
            rank: Some(12),
            preconditioners: Some(vec!["identity".into(), "scaled".into(), "nonscaled".into()]),
            out: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(ExperimentKind::Analyze, None, &flags).unwrap();
        let out = run_analyze(&cfg).unwrap();
        let scaled = out.record("scaled").unwrap();
        assert!(scaled.leading_alignment_error(12) < 1e-8);
        for r in &out.records {
            assert!((r.terms.total() - r.divergence).abs() < 1e-8 * (1.0 + r.divergence));
        }
        let id = out.record("identity").unwrap();
        assert!((&id.generalized_eigs - &out.s_eigenvalues).amax() < 1e-10 * out.s_eigenvalues[0]);
        write_analyze(&out).unwrap();
        assert!(dir.path().join("alignment_scaled.csv").exists());
        assert!(dir.path().join("generalized_eigs.csv").exists());
    }
}
