//! Alternate optimization between the LASSO w-step and the closed-form
//! Z-step, plus the debiasing transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairlasso::{LassoDesign, SolverConfig};
use crate::numkit::norm1;
use crate::synthgen::Dataset;
use crate::zstep::{residual, z_step_from_residual, ZMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub solver: SolverConfig,
    pub gamma: f64,
    pub max_rounds: usize,
    /// Starting sign vector; `None` starts from `z₀ = 0`, the first-column
    /// tail of `Z₀ = I`, so the first w-step fits `y` itself.
    pub z_init: Option<Vec<f64>>,
    /// Starting weights for the first w-step; `None` means zeros.
    pub w_init: Option<Vec<f64>>,
}

impl FitConfig {
    pub fn new(gamma: f64, lambda: f64) -> Self {
        Self {
            solver: SolverConfig::with_lambda(lambda),
            gamma,
            max_rounds: 100,
            z_init: None,
            w_init: None,
        }
    }

    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        self.solver.validate()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma = {} must be > 0", self.gamma)));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be >= 1".into()));
        }
        if let Some(z) = &self.z_init {
            if z.len() != n {
                return Err(Error::Dimension(format!(
                    "z_init of length {} for n = {n}",
                    z.len()
                )));
            }
            if z.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::Config("z_init entries must be +1 or -1".into()));
            }
        }
        if let Some(w) = &self.w_init {
            if w.len() != d {
                return Err(Error::Dimension(format!(
                    "w_init of length {} for d = {d}",
                    w.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// `⟨M(w_t), Z_t⟩ + λ‖w_t‖₁` after each round.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// The last two sign vectors were identical.
    pub converged: bool,
}

impl Solution {
    /// `ζζᵀ` with `ζ = (1, z)`.
    pub fn z_matrix(&self) -> ZMatrix {
        ZMatrix::from_signs(&self.z)
    }

    pub fn support(&self) -> Vec<usize> {
        self.w
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn fit(data: &Dataset, cfg: &FitConfig) -> Result<Solution> {
    let (n, d) = (data.n(), data.d());
    cfg.validate(n, d)?;
    let design = LassoDesign::new(&data.x);
    let mut z_prev = cfg.z_init.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut w = cfg.w_init.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut trace = Vec::new();
    let mut target = vec![0.0; n];
    for round in 1..=cfg.max_rounds {
        for ((t, &y), &z) in target.iter_mut().zip(&data.y).zip(&z_prev) {
            *t = y - cfg.gamma * z;
        }
        w = design.solve(&target, &cfg.solver, Some(&w))?.w;
        let step = z_step_from_residual(&residual(&data.x, &data.y, &w)?, cfg.gamma);
        trace.push(step.objective + cfg.solver.lambda * norm1(&w));
        if step.z == z_prev {
            return Ok(Solution {
                w,
                z: step.z,
                objective_trace: trace,
                iterations: round,
                converged: true,
            });
        }
        z_prev = step.z;
    }
    Ok(Solution {
        w,
        z: z_prev,
        objective_trace: trace,
        iterations: cfg.max_rounds,
        converged: false,
    })
}

/// `y − γ z`
pub fn debias(y: &[f64], z: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if y.len() != z.len() {
        return Err(Error::Dimension(format!(
            "response of length {} with {} labels",
            y.len(),
            z.len()
        )));
    }
    Ok(y.iter().zip(z).map(|(a, b)| a - gamma * b).collect())
}
