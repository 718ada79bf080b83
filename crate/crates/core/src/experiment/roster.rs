use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linop::{whitened_dense, DenseSym, FactoredSpd, Operator};
use crate::precond::{
    build_jacobi, build_nonscaled, build_partial_cholesky, build_scaled, build_sgs, Preconditioner,
};
use crate::sketch::{nystrom, randomized_evd, truncated_evd, LowRankEig, NystromRange, SketchConfig};

/// The twelve preconditioners compared on dense `S = A + B` problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RosterEntry {
    Identity,
    PartialCholesky,
    Sgs,
    Jacobi,
    /// `A + B_r`
    Nonscaled,
    /// `A + B̂` from a randomized EVD of `B`
    NonscaledRand,
    /// same with `q` power iterations
    NonscaledRandPower,
    NonscaledNystrom,
    /// `Q (I + G_r) Qᵀ`
    Scaled,
    ScaledRand,
    ScaledRandPower,
    ScaledNystrom,
}

impl RosterEntry {
    pub fn all() -> [RosterEntry; 12] {
        use RosterEntry::*;
        [
            Identity,
            PartialCholesky,
            Sgs,
            Jacobi,
            Nonscaled,
            NonscaledRand,
            NonscaledRandPower,
            NonscaledNystrom,
            Scaled,
            ScaledRand,
            ScaledRandPower,
            ScaledNystrom,
        ]
    }

    pub fn name(&self) -> &'static str {
        use RosterEntry::*;
        match self {
            Identity => "identity",
            PartialCholesky => "partial_cholesky",
            Sgs => "sgs",
            Jacobi => "jacobi",
            Nonscaled => "nonscaled",
            NonscaledRand => "nonscaled_rand",
            NonscaledRandPower => "nonscaled_rand_power",
            NonscaledNystrom => "nonscaled_nystrom",
            Scaled => "scaled",
            ScaledRand => "scaled_rand",
            ScaledRandPower => "scaled_rand_power",
            ScaledNystrom => "scaled_nystrom",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preconditioner {name:?}")))
    }

    /// Whether the entry draws a Gaussian test matrix.
    pub fn is_randomized(&self) -> bool {
        use RosterEntry::*;
        matches!(
            self,
            NonscaledRand | NonscaledRandPower | NonscaledNystrom | ScaledRand | ScaledRandPower | ScaledNystrom
        )
    }
}

/// A dense `S = A + B` with `A = Q Qᵀ` and the whitened `G = Q⁻¹ B Q⁻ᵀ`.
pub struct DenseProblem {
    pub s: DenseSym,
    pub b: DenseSym,
    pub g: DenseSym,
    pub q: Arc<dyn FactoredSpd>,
    /// Exact rank-`r` truncation of `B` if known in closed form.
    pub b_truncated: Option<LowRankEig>,
}

impl DenseProblem {
    pub fn new(a: &DenseSym, b: DenseSym, q: Arc<dyn FactoredSpd>) -> Result<Self> {
        let s = a.add(&b)?;
        let g = whitened_dense(q.as_ref(), &b)?;
        Ok(Self {
            s,
            b,
            g,
            q,
            b_truncated: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    /// Builds `entry` at rank `sketch.rank`, using `sketch` for the randomized entries
    /// (its `power_iterations` applies to the `*_rand_power` entries only).
    pub fn build(&self, entry: RosterEntry, sketch: &SketchConfig) -> Result<Preconditioner> {
        use RosterEntry::*;
        let r = sketch.rank;
        let plain = SketchConfig {
            power_iterations: 0,
            ..*sketch
        };
        let randomized = |target: &DenseSym, cfg: &SketchConfig, nys: bool| -> Result<(LowRankEig, u64)> {
            let op = Operator::from_sym(target);
            let approx = if nys {
                nystrom(&op, cfg, NystromRange::QrOfSketch)?
            } else {
                randomized_evd(&op, cfg)?
            };
            Ok((approx, op.products()))
        };
        let scaled = |(gr, products): (LowRankEig, u64)| -> Result<Preconditioner> {
            Ok(build_scaled(self.q.clone(), &gr)?.with_operator_products(products))
        };
        let nonscaled = |(br, products): (LowRankEig, u64)| -> Result<Preconditioner> {
            Ok(build_nonscaled(self.q.clone(), &br)?.with_operator_products(products))
        };
        match entry {
            Identity => Ok(Preconditioner::identity(self.dim())),
            PartialCholesky => build_partial_cholesky(&self.s, r),
            Sgs => build_sgs(&self.s),
            Jacobi => build_jacobi(&self.s),
            Nonscaled => {
                let br = match &self.b_truncated {
                    Some(b) if b.rank() >= r => b.clone().truncate(r),
                    _ => truncated_evd(&self.b, r)?,
                };
                nonscaled((br, 0))
            }
            NonscaledRand => nonscaled(randomized(&self.b, &plain, false)?),
            NonscaledRandPower => nonscaled(randomized(&self.b, sketch, false)?),
            NonscaledNystrom => nonscaled(randomized(&self.b, &plain, true)?),
            Scaled => scaled((truncated_evd(&self.g, r)?, 0)),
            ScaledRand => scaled(randomized(&self.g, &plain, false)?),
            ScaledRandPower => scaled(randomized(&self.g, sketch, false)?),
            ScaledNystrom => scaled(randomized(&self.g, &plain, true)?),
        }
    }
}
