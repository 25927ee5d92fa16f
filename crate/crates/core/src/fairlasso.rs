//! ℓ1-regularized least squares by cyclic coordinate descent.
//!
//! The objective is `(1/n)‖Xw − r‖² + λ‖w‖₁` (note `1/n`, not `1/(2n)`), so
//! the exact coordinate minimizer is
//! `w_j = soft_threshold(X_jᵀ r_{-j}, nλ/2) / ‖X_j‖²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, norm1, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Stop once no coordinate moves by more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sub-Gaussian design parameter ρ.
    pub rho: f64,
    /// Incoherence margin α.
    pub alpha: f64,
    /// Noise scale.
    pub k: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tol: 1e-8,
            max_sweeps: 10_000,
            rho: 1.0,
            alpha: 1.0,
            k: 0.15,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol = {} must be > 0", self.tol)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1]", self.alpha)));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho = {} must be > 0", self.rho)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be >= 1".into()));
        }
        Ok(())
    }

    /// The theoretical regularizer for this configuration's ρ, k, α.
    pub fn lambda_default(&self, d: usize, n: usize) -> Result<f64> {
        lambda_default(self.rho, self.k, self.alpha, d, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub w: Vec<f64>,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out before the coordinate-change test passed.
    pub converged: bool,
    /// Objective after each sweep; the first entry is at the starting point.
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

pub fn soft_threshold(a: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if a > t {
        a - t
    } else if a < -t {
        a + t
    } else {
        0.0
    }
}

/// `(1/n)‖Xw − r‖² + λ‖w‖₁`
pub fn lasso_objective(x: &Matrix, r: &[f64], w: &[f64], lambda: f64) -> Result<f64> {
    let xw = x.matvec(w)?;
    if r.len() != xw.len() {
        return Err(Error::Dimension(format!(
            "target of length {} for {} rows",
            r.len(),
            xw.len()
        )));
    }
    let rss: f64 = xw.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(rss / r.len() as f64 + lambda * norm1(w))
}

/// Largest violation of the subgradient optimality conditions.
pub fn kkt_violation(x: &Matrix, r: &[f64], w: &[f64], lambda: f64) -> Result<f64> {
    let n = x.rows() as f64;
    let xw = x.matvec(w)?;
    let res: Vec<f64> = xw.iter().zip(r).map(|(a, b)| a - b).collect();
    let g = x.t_matvec(&res)?;
    Ok(g.iter()
        .zip(w)
        .map(|(&gi, &wi)| {
            let gi = 2.0 * gi / n;
            if wi == 0.0 {
                (gi.abs() - lambda).max(0.0)
            } else {
                (gi + lambda * wi.signum()).abs()
            }
        })
        .fold(0.0, f64::max))
}

/// Column-major view of a design with cached squared column norms, reused
/// across many solves on the same `X`.
#[derive(Debug, Clone)]
pub struct LassoDesign {
    n: usize,
    columns: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
}

impl LassoDesign {
    pub fn new(x: &Matrix) -> Self {
        let columns = x.columns();
        let sq_norms = columns.iter().map(|c| dot(c, c)).collect();
        Self {
            n: x.rows(),
            columns,
            sq_norms,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn solve(&self, r: &[f64], cfg: &SolverConfig, warm: Option<&[f64]>) -> Result<LassoFit> {
        cfg.validate()?;
        if r.len() != self.n {
            return Err(Error::Dimension(format!(
                "target of length {} for {} rows",
                r.len(),
                self.n
            )));
        }
        let d = self.d();
        let mut w = match warm {
            Some(w0) if w0.len() != d => {
                return Err(Error::Dimension(format!(
                    "warm start of length {} for {d} columns",
                    w0.len()
                )))
            }
            Some(w0) => w0.to_vec(),
            None => vec![0.0; d],
        };
        let nf = self.n as f64;
        let mut res = r.to_vec();
        for (c, &wj) in self.columns.iter().zip(&w) {
            if wj != 0.0 {
                for (ri, &xi) in res.iter_mut().zip(c) {
                    *ri -= xi * wj;
                }
            }
        }
        let objective = |res: &[f64], w: &[f64]| dot(res, res) / nf + cfg.lambda * norm1(w);
        let mut trace = vec![objective(&res, &w)];
        let half = 0.5 * nf * cfg.lambda;
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < cfg.max_sweeps {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            for j in 0..d {
                let col = &self.columns[j];
                let nj = self.sq_norms[j];
                let old = w[j];
                let new = if nj > 0.0 {
                    soft_threshold(dot(col, &res) + nj * old, half) / nj
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    for (ri, &xi) in res.iter_mut().zip(col) {
                        *ri -= xi * delta;
                    }
                    w[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            trace.push(objective(&res, &w));
            if max_change <= cfg.tol {
                converged = true;
                break;
            }
        }
        Ok(LassoFit {
            w,
            sweeps,
            converged,
            objective_trace: trace,
        })
    }
}

/// Minimizes `(1/n)‖Xw − r‖² + λ‖w‖₁` from `w = 0`.
pub fn solve_weighted_lasso(x: &Matrix, r: &[f64], cfg: &SolverConfig) -> Result<LassoFit> {
    LassoDesign::new(x).solve(r, cfg, None)
}

/// As [`solve_weighted_lasso`], starting from `w0`.
pub fn solve_weighted_lasso_warm(
    x: &Matrix,
    r: &[f64],
    cfg: &SolverConfig,
    w0: &[f64],
) -> Result<LassoFit> {
    LassoDesign::new(x).solve(r, cfg, Some(w0))
}

/// `(128 ρ k / α) · sqrt(ln d) / n`
pub fn lambda_default(rho: f64, k: f64, alpha: f64, d: usize, n: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Config(format!("d = {d} < 2 makes sqrt(ln d) vanish")));
    }
    if !(rho > 0.0 && k > 0.0 && alpha > 0.0) || n == 0 {
        return Err(Error::Config(
            "rho, k, alpha and n must all be positive".into(),
        ));
    }
    Ok(128.0 * rho * k / alpha * (d as f64).ln().sqrt() / n as f64)
}
