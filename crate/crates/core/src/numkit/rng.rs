//! Seeded random streams.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood): the state advances by
//! `0x9E3779B97F4A7C15` and each output is the state passed through the
//! finalizer `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
//! z *= 0x94D049BB133111EB; z ^= z >> 31`.
//!
//! Uniforms on the open interval (0, 1) take the top 53 bits:
//! `((x >> 11) + 0.5) * 2^-53`. Standard normals come in Box–Muller pairs
//! from two consecutive uniforms `u1, u2`:
//! `sqrt(-2 ln u1) * cos(2π u2)` first, then `sqrt(-2 ln u1) * sin(2π u2)`.
//! Matrices are filled in row-major order. With these rules fixed, any
//! implementation reproduces the same samples for the same seed.

use crate::error::{Error, Result};

use super::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on (0, 1), never returning either endpoint.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_open01()
    }

    /// Integer in `0..n` by multiply-shift (bias below 2^-64 · n).
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `k` distinct indices from `0..n`, in draw order (partial Fisher–Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k.min(n) {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k.min(n));
        pool
    }

    /// ±1 with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Independent sub-stream seed for `(root, tag)`.
pub fn derive_seed(root: u64, tag: u64) -> u64 {
    SplitMix64::new(root ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03)).next_u64()
}

/// `rows × cols` matrix of independent N(0, scale[j]²) entries.
pub fn gaussian_sample(rows: usize, cols: usize, seed: u64, scale: &[f64]) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "gaussian_sample needs rows, cols >= 1 (got {rows}x{cols})"
        )));
    }
    if scale.len() != cols {
        return Err(Error::Dimension(format!(
            "{} column scales for {cols} columns",
            scale.len()
        )));
    }
    if scale.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Config("column scales must be finite and >= 0".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        for &s in scale {
            data.push(s * rng.normal());
        }
    }
    Matrix::new(rows, cols, data)
}
