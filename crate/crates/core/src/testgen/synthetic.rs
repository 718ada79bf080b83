use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{whitened_dense, DenseSym, EigenSqrtFactor, FactoredSpd};
use crate::rng::GaussianStream;
use crate::sketch::LowRankEig;

/// Parameters of `λ(i) = exp(−|α i / count − c|^β) + κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub alpha: f64,
    pub c: f64,
    pub beta: f64,
    #[serde(default)]
    pub kappa: f64,
}

impl SpectrumParams {
    pub fn new(alpha: f64, c: f64, beta: f64, kappa: f64) -> Result<Self> {
        let p = Self { alpha, c, beta, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("c", self.c), ("beta", self.beta), ("kappa", self.kappa)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("spectrum {name} = {v} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }

    /// Named spectra `A1`–`A4` (with shift κ) and `B1`, `B2`.
    pub fn label(name: &str) -> Result<Self> {
        let (alpha, c, beta, kappa) = match name.to_ascii_uppercase().as_str() {
            "A1" => (0.0, 0.0, 0.0, 0.70),
            "A2" => (3.5, 0.0, 1.0, 0.05),
            "A3" => (4.0, 0.30, 4.5, 0.05),
            "A4" => (2.0, 0.25, 4.5, 0.05),
            "B1" => (3.0, 0.0, 1.0, 0.0),
            "B2" => (2.5, 0.55, 4.7, 0.0),
            _ => return Err(Error::InvalidArgument(format!("unknown spectrum label {name:?}"))),
        };
        Ok(Self { alpha, c, beta, kappa })
    }

    pub fn labels_a() -> [&'static str; 4] {
        ["A1", "A2", "A3", "A4"]
    }

    pub fn labels_b() -> [&'static str; 2] {
        ["B1", "B2"]
    }
}

/// Evaluates the spectrum for `i = 1..=count` and sorts it descending.
///
/// `0⁰` is taken as 1, so `β = 0` gives the flat spectrum `e⁻¹ + κ`.
pub fn spectrum(params: &SpectrumParams, count: usize) -> Result<DVector<f64>> {
    params.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("spectrum needs count ≥ 1".into()));
    }
    let mut values: Vec<f64> = (1..=count)
        .map(|i| {
            let base = (params.alpha * i as f64 / count as f64 - params.c).abs();
            (-base.powf(params.beta)).exp() + params.kappa
        })
        .collect();
    if values.windows(2).any(|w| w[1] > w[0]) {
        log::debug!("spectrum {params:?} is not monotone; sorting descending");
    }
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(DVector::from_vec(values))
}

/// `A = O_A Σ_A O_Aᵀ` (SPD) and `B = O_B Σ_B O_Bᵀ` (PSD, rank `m`).
pub struct SyntheticProblem {
    pub a: DenseSym,
    pub b: DenseSym,
    /// `Q = O_A Σ_A^{1/2} O_Aᵀ`
    pub q: Arc<EigenSqrtFactor>,
    pub a_values: DVector<f64>,
    pub b_values: DVector<f64>,
    pub o_a: DMatrix<f64>,
    pub o_b: DMatrix<f64>,
}

impl SyntheticProblem {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn s(&self) -> DenseSym {
        self.a.add(&self.b).expect("same dimension")
    }

    pub fn factor(&self) -> Arc<dyn FactoredSpd> {
        self.q.clone()
    }

    /// `G = Q⁻¹ B Q⁻ᵀ`, dense.
    pub fn g(&self) -> DenseSym {
        whitened_dense(self.q.as_ref(), &self.b).expect("same dimension")
    }

    /// Exact rank-`r` truncation of `B` from its generating eigenpairs.
    pub fn b_truncated(&self, r: usize) -> LowRankEig {
        let r = r.min(self.b_values.len());
        LowRankEig::new(self.o_b.columns(0, r).into_owned(), self.b_values.rows(0, r).into_owned())
            .expect("generated spectrum is nonnegative")
    }
}

pub fn assemble_synthetic(
    pa: &SpectrumParams,
    pb: &SpectrumParams,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<SyntheticProblem> {
    assemble_synthetic_stream(pa, pb, n, m, seed, 0)
}

/// As [`assemble_synthetic`] with the Gaussian stream selected by `stream`
/// (the trial index).
pub fn assemble_synthetic_stream(
    pa: &SpectrumParams,
    pb: &SpectrumParams,
    n: usize,
    m: usize,
    seed: u64,
    stream: u64,
) -> Result<SyntheticProblem> {
    if m > n || n == 0 {
        return Err(Error::InvalidArgument(format!("need 1 ≤ n and m ≤ n, got n = {n}, m = {m}")));
    }
    let a_values = spectrum(pa, n)?;
    let b_values = if m == 0 { DVector::zeros(0) } else { spectrum(pb, m)? };
    if let Some(&v) = a_values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NotPositiveDefinite { pivot: n - 1, value: v });
    }
    let mut rng = GaussianStream::new(seed, stream);
    let o_a = rng.matrix(n, n).qr().q();
    let o_b = if m == 0 { DMatrix::zeros(n, 0) } else { rng.matrix(n, m).qr().q() };
    let a = DenseSym::from_matrix(&o_a * DMatrix::from_diagonal(&a_values) * o_a.transpose())?;
    let b = DenseSym::from_matrix(&o_b * DMatrix::from_diagonal(&b_values) * o_b.transpose())?;
    let q = Arc::new(EigenSqrtFactor::new(o_a.clone(), &a_values)?);
    Ok(SyntheticProblem {
        a,
        b,
        q,
        a_values,
        b_values,
        o_a,
        o_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{dense_eig_sym, rel_frobenius, Cholesky};

    #[test]
    fn flat_label() {
        let s = spectrum(&SpectrumParams::label("A1").unwrap(), 7).unwrap();
        let want = (-1.0f64).exp() + 0.70;
        assert!(s.iter().all(|v| (v - want).abs() < 1e-15));
        assert!((want - 1.06788).abs() < 1e-5);
    }

    #[test]
    fn exponential_labels() {
        let n = 50;
        let s = spectrum(&SpectrumParams::label("A2").unwrap(), n).unwrap();
        assert!((s[n - 1] - ((-3.5f64).exp() + 0.05)).abs() < 1e-15);
        assert!((s[n - 1] - 0.08019).abs() < 1e-5);
        let m = 30;
        let b = spectrum(&SpectrumParams::label("B1").unwrap(), m).unwrap();
        let want = (3.0 * (m as f64 - 1.0) / m as f64).exp();
        assert!((b[0] / b[m - 1] - want).abs() < 1e-12 * want);
    }

    #[test]
    fn non_monotone_labels_sorted() {
        for name in ["A3", "A4", "B2"] {
            let s = spectrum(&SpectrumParams::label(name).unwrap(), 40).unwrap();
            assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]), "{name}");
            assert!(s.iter().all(|v| *v > 0.0));
        }
        assert!(SpectrumParams::label("C9").is_err());
        assert!(SpectrumParams::new(1.0, -0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn assembled_spectra_and_factor() {
        let pa = SpectrumParams::label("A3").unwrap();
        let pb = SpectrumParams::label("B2").unwrap();
        let prob = assemble_synthetic(&pa, &pb, 24, 10, 5).unwrap();
        let ea = dense_eig_sym(&prob.a).unwrap();
        assert!((ea.values - spectrum(&pa, 24).unwrap()).amax() < 1e-9);
        let eb = dense_eig_sym(&prob.b).unwrap();
        assert!((eb.values.rows(0, 10) - spectrum(&pb, 10).unwrap()).amax() < 1e-9);
        assert!(eb.values.rows(10, 14).amax() < 1e-12);
        assert!(rel_frobenius(&prob.q.dense_spd(), prob.a.as_matrix()) < 1e-12);
        assert!(Cholesky::new(prob.s().as_matrix()).is_ok());
        assert!((prob.o_b.tr_mul(&prob.o_b) - DMatrix::<f64>::identity(10, 10)).amax() < 1e-12);
        let b3 = prob.b_truncated(3);
        assert_eq!(b3.rank(), 3);
    }

    #[test]
    fn zero_b_gives_s_equal_a() {
        let pa = SpectrumParams::label("A2").unwrap();
        let zero = SpectrumParams { alpha: 0.0, c: 0.0, beta: 0.0, kappa: 0.0 };
        let mut prob = assemble_synthetic(&pa, &zero, 8, 0, 1).unwrap();
        assert_eq!(prob.b.as_matrix().amax(), 0.0);
        assert_eq!(prob.s(), prob.a);
        prob = assemble_synthetic(&pa, &zero, 8, 3, 1).unwrap();
        // exp(−0⁰) = e⁻¹ for every i, so B is nonzero here
        assert!(prob.b.as_matrix().amax() > 0.0);
    }

    #[test]
    fn streams_differ() {
        let pa = SpectrumParams::label("A2").unwrap();
        let pb = SpectrumParams::label("B1").unwrap();
        let p0 = assemble_synthetic_stream(&pa, &pb, 6, 3, 9, 0).unwrap();
        let p1 = assemble_synthetic_stream(&pa, &pb, 6, 3, 9, 1).unwrap();
        assert_ne!(p0.a, p1.a);
        let again = assemble_synthetic_stream(&pa, &pb, 6, 3, 9, 1).unwrap();
        assert_eq!(p1.a, again.a);
        assert!(assemble_synthetic(&pa, &pb, 3, 4, 0).is_err());
    }
}
