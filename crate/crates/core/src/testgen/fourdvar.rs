use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{mm, DenseSym, FactoredSpd, Operator};
use crate::precond::{build_factor_only, build_nonscaled, build_scaled, Preconditioner};
use crate::rng::GaussianStream;
use crate::sketch::{nystrom, LowRankEig, NystromRange, SketchConfig};

/// Heat-equation weak-constraint 4D-VAR problem size and conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourDVarConfig {
    /// state dimension
    pub n: usize,
    /// number of model steps; there are `steps + 1` time levels
    pub steps: usize,
    /// observations per time level
    pub m: usize,
    pub dt: f64,
    pub dx: f64,
    pub tau_d: f64,
    pub tau_r: f64,
    pub seed: u64,
}

impl FourDVarConfig {
    /// Full problem: `n = 1000`, 100 time levels, half the state observed.
    pub fn full() -> Self {
        Self {
            n: 1000,
            steps: 99,
            m: 500,
            dt: 1e-4,
            dx: 2e-2,
            tau_d: 1.0,
            tau_r: 1.0,
            seed: 0,
        }
    }

    /// `n = 100`, `N = 20`, `m = 50` with the same grid constants.
    pub fn reduced() -> Self {
        Self {
            n: 100,
            steps: 20,
            m: 50,
            ..Self::full()
        }
    }

    pub fn heat_ratio(&self) -> f64 {
        self.dt / (self.dx * self.dx)
    }

    pub fn state_size(&self) -> usize {
        self.n * (self.steps + 1)
    }

    pub fn obs_size(&self) -> usize {
        self.m * (self.steps + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.heat_ratio();
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("Δt/Δx² = {r} must be positive")));
        }
        if r > 0.5 {
            return Err(Error::Unstable { ratio: r });
        }
        if self.n < 3 {
            return Err(Error::InvalidArgument(format!("state dimension {} must be ≥ 3", self.n)));
        }
        if self.m > self.n {
            return Err(Error::InvalidArgument(format!("m = {} exceeds n = {}", self.m, self.n)));
        }
        if !(self.tau_d >= 0.0) || !(self.tau_r >= 0.0) {
            return Err(Error::InvalidArgument("τ_D and τ_R must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// `count` points from `10^{−τ}` to `10^{τ}` with equal ratios.
fn log_spaced(count: usize, tau: f64) -> DVector<f64> {
    if count == 1 {
        return DVector::from_element(1, 10f64.powf(-tau));
    }
    DVector::from_fn(count, |k, _| 10f64.powf(-tau + 2.0 * tau * k as f64 / (count - 1) as f64))
}

/// `Q = Lᵀ D^{−1/2}`, applied and inverted by block substitution through `L`.
#[derive(Debug, Clone)]
pub struct FourDVarFactor {
    n: usize,
    levels: usize,
    heat: f64,
    d_inv: DVector<f64>,
    d_half: DVector<f64>,
}

impl FourDVarFactor {
    /// `y = M x` on one time level: zero boundary rows and columns,
    /// `(r, 1 − 2r, r)` coupling among interior points.
    fn model_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let r = self.heat;
        y[0] = 0.0;
        y[n - 1] = 0.0;
        for i in 1..n - 1 {
            let mut v = (1.0 - 2.0 * r) * x[i];
            if i > 1 {
                v += r * x[i - 1];
            }
            if i < n - 2 {
                v += r * x[i + 1];
            }
            y[i] = v;
        }
    }

    /// `L x`: level 0 unchanged, level `i` becomes `x_i − M x_{i−1}`.
    pub fn l_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut y = x.clone();
        let mut mx = vec![0.0; n];
        for i in 1..self.levels {
            self.model_into(&x.as_slice()[(i - 1) * n..i * n], &mut mx);
            for (yk, mk) in y.as_mut_slice()[i * n..(i + 1) * n].iter_mut().zip(&mx) {
                *yk -= mk;
            }
        }
        y
    }

    /// `Lᵀ x`: level `i < N` becomes `x_i − M x_{i+1}`.
    pub fn lt_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut y = x.clone();
        let mut mx = vec![0.0; n];
        for i in 0..self.levels - 1 {
            self.model_into(&x.as_slice()[(i + 1) * n..(i + 2) * n], &mut mx);
            for (yk, mk) in y.as_mut_slice()[i * n..(i + 1) * n].iter_mut().zip(&mx) {
                *yk -= mk;
            }
        }
        y
    }

    /// `L⁻¹ y` by forward block substitution.
    pub fn l_solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut x = y.clone();
        let mut mx = vec![0.0; n];
        for i in 1..self.levels {
            let (done, rest) = x.as_mut_slice().split_at_mut(i * n);
            self.model_into(&done[(i - 1) * n..], &mut mx);
            for (xk, mk) in rest[..n].iter_mut().zip(&mx) {
                *xk += mk;
            }
        }
        x
    }

    /// `L⁻ᵀ y` by backward block substitution.
    pub fn lt_solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut x = y.clone();
        let mut mx = vec![0.0; n];
        for i in (0..self.levels - 1).rev() {
            let (head, done) = x.as_mut_slice().split_at_mut((i + 1) * n);
            self.model_into(&done[..n], &mut mx);
            for (xk, mk) in head[i * n..].iter_mut().zip(&mx) {
                *xk += mk;
            }
        }
        x
    }

    /// Dense one-level model matrix `M`.
    pub fn model_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.model_into(&e, &mut col);
            m.set_column(j, &DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        m
    }

    pub fn d_inverse(&self) -> &DVector<f64> {
        &self.d_inv
    }
}

impl FactoredSpd for FourDVarFactor {
    fn dim(&self) -> usize {
        self.n * self.levels
    }
    fn factor_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.lt_apply(&x.component_div(&self.d_half))
    }
    fn factor_adjoint_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.l_apply(x).component_div(&self.d_half)
    }
    fn factor_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.lt_solve(x).component_mul(&self.d_half)
    }
    fn factor_adjoint_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.l_solve(&x.component_mul(&self.d_half))
    }
}

/// `S = Lᵀ D⁻¹ L + Hᵀ R⁻¹ H`, matrix-free.
#[derive(Debug, Clone)]
pub struct FourDVarSystem {
    pub config: FourDVarConfig,
    factor: Arc<FourDVarFactor>,
    r_inv: DVector<f64>,
}

impl FourDVarSystem {
    pub fn assemble(config: FourDVarConfig) -> Result<Self> {
        config.validate()?;
        let d_inv = log_spaced(config.state_size(), config.tau_d);
        let d_half = d_inv.map(|v| 1.0 / v.sqrt());
        let factor = Arc::new(FourDVarFactor {
            n: config.n,
            levels: config.steps + 1,
            heat: config.heat_ratio(),
            d_inv,
            d_half,
        });
        let r_inv = log_spaced(config.obs_size(), config.tau_r);
        Ok(Self { config, factor, r_inv })
    }

    pub fn dim(&self) -> usize {
        self.config.state_size()
    }

    pub fn obs_dim(&self) -> usize {
        self.config.obs_size()
    }

    pub fn factor(&self) -> Arc<FourDVarFactor> {
        self.factor.clone()
    }

    pub fn r_inverse(&self) -> &DVector<f64> {
        &self.r_inv
    }

    /// State index observed by observation row `k` (global numbering).
    ///
    /// Within a time level, row `j` picks state entry `m − 1 − j`.
    pub fn observed_index(&self, k: usize) -> usize {
        let (n, m) = (self.config.n, self.config.m);
        let level = k / m;
        level * n + (m - 1 - k % m)
    }

    pub fn h_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.obs_dim(), |k, _| x[self.observed_index(k)])
    }

    pub fn ht_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        for k in 0..self.obs_dim() {
            x[self.observed_index(k)] += y[k];
        }
        x
    }

    /// Diagonal of `Hᵀ R⁻¹ H` (each state entry is observed at most once).
    pub fn obs_term_diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.dim());
        for k in 0..self.obs_dim() {
            d[self.observed_index(k)] += self.r_inv[k];
        }
        d
    }

    pub fn s_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let f = &self.factor;
        let model = f.lt_apply(&f.l_apply(x).component_mul(&f.d_inv));
        model + self.ht_apply(&self.h_apply(x).component_mul(&self.r_inv))
    }

    pub fn s_operator(&self) -> Operator {
        let sys = self.clone();
        Operator::from_fn(self.dim(), true, move |x, y| {
            let v = sys.s_apply(&DVector::from_column_slice(x));
            y.copy_from_slice(v.as_slice());
        })
    }

    /// `Hᵀ R⁻¹ H` as an operator.
    pub fn obs_term_operator(&self) -> Operator {
        Operator::diagonal(self.obs_term_diagonal())
    }

    /// `G = Q⁻¹ Hᵀ R⁻¹ H Q⁻ᵀ`, matrix-free.
    pub fn g_operator(&self) -> Operator {
        let sys = self.clone();
        Operator::from_fn(self.dim(), true, move |x, y| {
            let f = &sys.factor;
            let t = f.factor_adjoint_solve(&DVector::from_column_slice(x));
            let obs = sys.ht_apply(&sys.h_apply(&t).component_mul(&sys.r_inv));
            y.copy_from_slice(f.factor_solve(&obs).as_slice());
        })
    }

    /// Diagonal of `S`.
    pub fn s_diagonal(&self) -> DVector<f64> {
        let f = &self.factor;
        let n = self.config.n;
        let m = f.model_matrix();
        let mut d = f.d_inv.clone();
        // level i picks up Σ_k M_kj² D⁻¹_{i+1,k} from the −M block below it
        for i in 0..f.levels - 1 {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    let mkj = m[(k, j)];
                    if mkj != 0.0 {
                        acc += mkj * mkj * f.d_inv[(i + 1) * n + k];
                    }
                }
                d[i * n + j] += acc;
            }
        }
        d + self.obs_term_diagonal()
    }

    /// Exact `‖S‖₁` (max absolute column sum) from 15 probes.
    ///
    /// A column of `S` touches only levels `±1` and positions `±2` around its
    /// own, so columns agreeing in (level mod 3, position mod 5) never share a
    /// row and can be summed into one probe.
    pub fn s_norm1(&self) -> f64 {
        let (n, levels, s) = (self.config.n, self.config.steps + 1, self.dim());
        let mut colsum = vec![0.0; s];
        for l in 0..3 {
            for c in 0..5 {
                let comb = DVector::from_fn(s, |j, _| if (j / n) % 3 == l && (j % n) % 5 == c { 1.0 } else { 0.0 });
                let y = self.s_apply(&comb);
                for (i, v) in y.iter().enumerate() {
                    if *v == 0.0 {
                        continue;
                    }
                    let (li, pi) = (i / n, i % n);
                    let lj = (li.saturating_sub(1)..=(li + 1).min(levels - 1)).find(|v| v % 3 == l);
                    let pj = (pi.saturating_sub(2)..=(pi + 2).min(n - 1)).find(|v| v % 5 == c);
                    if let (Some(lj), Some(pj)) = (lj, pj) {
                        colsum[lj * n + pj] += v.abs();
                    }
                }
            }
        }
        colsum.into_iter().fold(0.0, f64::max)
    }

    /// Column `S e_j`.
    pub fn s_column(&self, j: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        e[j] = 1.0;
        self.s_apply(&e)
    }

    pub fn dense_s(&self) -> DenseSym {
        DenseSym::from_matrix(self.s_operator().to_dense()).expect("square")
    }

    /// Seeded Gaussian right-hand side with unit norm.
    pub fn rhs(&self, seed: u64) -> DVector<f64> {
        let b = GaussianStream::new(seed, 0).vector(self.dim());
        let norm = b.norm();
        b / norm
    }

    /// Writes `M`, `D⁻¹`, `R⁻¹` and one observation block `H_i` as Matrix
    /// Market files into `dir`.
    pub fn export_blocks(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = &self.factor;
        mm::write_general_file(dir.join("model_M.mtx"), &f.model_matrix())?;
        mm::write_general_file(dir.join("D_inverse_diag.mtx"), &DMatrix::from_column_slice(f.d_inv.len(), 1, f.d_inv.as_slice()))?;
        mm::write_general_file(dir.join("R_inverse_diag.mtx"), &DMatrix::from_column_slice(self.r_inv.len(), 1, self.r_inv.as_slice()))?;
        let (n, m) = (self.config.n, self.config.m);
        let h = DMatrix::from_fn(m, n, |j, k| if k == m - 1 - j { 1.0 } else { 0.0 });
        mm::write_general_file(dir.join("H_block.mtx"), &h)?;
        Ok(())
    }
}

/// The low-rank 4D-VAR preconditioners at one rank.
pub struct FourDVarPreconditioners {
    /// `Lᵀ D⁻¹ L`
    pub baseline: Preconditioner,
    /// `Q (I + Nys⟨G⟩) Qᵀ`
    pub scaled_nystrom: Preconditioner,
    /// `Lᵀ D⁻¹ L + Nys⟨Hᵀ R⁻¹ H⟩`
    pub nonscaled_nystrom: Preconditioner,
}

/// Builds the baseline and both Nyström preconditioners with a rank-`r`
/// sketch (no oversampling, raw Nyström) drawn from `seed`.
pub fn build_4dvar_preconditioners(sys: &FourDVarSystem, r: usize, seed: u64) -> Result<FourDVarPreconditioners> {
    if r > sys.obs_dim() {
        return Err(Error::InvalidArgument(format!(
            "rank {r} exceeds the observation count {}",
            sys.obs_dim()
        )));
    }
    let q: Arc<dyn FactoredSpd> = sys.factor();
    let baseline = build_factor_only(q.clone());
    let (g_hat, b_hat, g_products, b_products) = if r == 0 {
        (LowRankEig::zero(sys.dim()), LowRankEig::zero(sys.dim()), 0, 0)
    } else {
        let cfg = SketchConfig::new(r, 0, 0, seed);
        let g = sys.g_operator();
        let g_hat = nystrom(&g, &cfg, NystromRange::Raw)?;
        let b = sys.obs_term_operator();
        let b_hat = nystrom(&b, &cfg, NystromRange::Raw)?;
        (g_hat, b_hat, g.products(), b.products())
    };
    let scaled_nystrom = build_scaled(q.clone(), &g_hat)?.with_operator_products(g_products);
    let nonscaled_nystrom = build_nonscaled(q, &b_hat)?.with_operator_products(b_products);
    Ok(FourDVarPreconditioners {
        baseline,
        scaled_nystrom,
        nonscaled_nystrom,
    })
}
