//! Seeded Gaussian streams.
//!
//! A stream is ChaCha8 keyed by `seed` with the ChaCha stream id set to the
//! trial index, so every `(seed, trial)` pair gets an independent sequence
//! regardless of thread scheduling. Normals come from Box–Muller.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// `rows × cols` matrix of standard normals, filled column by column.
    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        for v in m.iter_mut() {
            *v = self.normal();
        }
        m
    }

    pub fn vector(&mut self, len: usize) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(len, (0..len).map(|_| self.normal()))
    }
}
