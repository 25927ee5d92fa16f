//! The latent-attribute block: `M(w)`, the elliptope-constrained Z-step,
//! a low-rank SDP verifier and exhaustive MIQP enumeration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairlasso::{lasso_objective, LassoDesign, SolverConfig};
use crate::numkit::{dot, norm2, sym_eig, Arrowhead, Matrix, SplitMix64};

/// `M(w) = [[l(w), (γ/n) rᵀ], [(γ/n) r, (γ²/n) I]]` with `r = Xw − y`.
///
/// Stored by blocks; [`MMatrix::to_dense`] materializes the full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMatrix {
    /// `l(w) = (1/n)‖r‖²`
    pub loss: f64,
    /// `(γ/n) r`
    pub cross: Vec<f64>,
    /// `γ²/n`
    pub block: f64,
}

impl MMatrix {
    /// Builds `M` from a residual `r = Xw − y`.
    pub fn from_residual(r: &[f64], gamma: f64) -> Self {
        let n = r.len() as f64;
        Self {
            loss: dot(r, r) / n,
            cross: r.iter().map(|v| gamma / n * v).collect(),
            block: gamma * gamma / n,
        }
    }

    pub fn dim(&self) -> usize {
        self.cross.len() + 1
    }

    pub fn to_dense(&self) -> Matrix {
        Arrowhead::new(self.loss, self.cross.clone(), vec![self.block; self.cross.len()])
            .to_dense()
    }

    /// `ζᵀ M ζ` for `ζ = (1, z)`.
    pub fn quadratic(&self, z: &[f64]) -> f64 {
        let zz: f64 = z.iter().map(|v| v * v).sum();
        self.loss + 2.0 * dot(&self.cross, z) + self.block * zz
    }

    /// `M + I`
    pub fn shifted_dense(&self) -> Matrix {
        self.to_dense().add(&Matrix::identity(self.dim())).expect("same shape")
    }
}

pub fn residual(x: &Matrix, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!(
            "response of length {} for {} rows",
            y.len(),
            x.rows()
        )));
    }
    let xw = x.matvec(w)?;
    Ok(xw.iter().zip(y).map(|(a, b)| a - b).collect())
}

pub fn assemble_m(x: &Matrix, y: &[f64], w: &[f64], gamma: f64) -> Result<MMatrix> {
    check_gamma(gamma)?;
    Ok(MMatrix::from_residual(&residual(x, y, w)?, gamma))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("gamma = {gamma} must be > 0")))
    }
}

/// Feasible point of the elliptope `{Z ⪰ 0, diag(Z) = 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZMatrix {
    inner: Matrix,
}

impl ZMatrix {
    pub const DIAG_TOL: f64 = 1e-10;
    pub const PSD_TOL: f64 = 1e-8;

    /// Validates unit diagonal and positive semidefiniteness.
    pub fn new(inner: Matrix) -> Result<Self> {
        if !inner.is_square() || !inner.is_symmetric(1e-12) {
            return Err(Error::Dimension("Z must be square and symmetric".into()));
        }
        if let Some(i) = inner
            .diag()
            .iter()
            .position(|v| (v - 1.0).abs() > Self::DIAG_TOL)
        {
            return Err(Error::Data(format!("diag(Z)[{i}] = {} != 1", inner[(i, i)])));
        }
        let lo = sym_eig(&inner)?.min();
        if lo < -Self::PSD_TOL {
            return Err(Error::Data(format!("Z has eigenvalue {lo} < 0")));
        }
        Ok(Self { inner })
    }

    /// `ζζᵀ` with `ζ = (1, z)`.
    pub fn from_signs(z: &[f64]) -> Self {
        let mut zeta = Vec::with_capacity(z.len() + 1);
        zeta.push(1.0);
        zeta.extend_from_slice(z);
        Self {
            inner: Matrix::outer(&zeta),
        }
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    /// Entries `Z[1.., 0]`, the sign vector of a rank-one `Z`.
    pub fn first_column_tail(&self) -> Vec<f64> {
        (1..self.dim()).map(|i| self.inner[(i, 0)]).collect()
    }
}

/// `trace(Mᵀ Z)`
pub fn sdp_objective(m: &MMatrix, z: &ZMatrix) -> Result<f64> {
    if m.dim() != z.dim() {
        return Err(Error::Dimension(format!(
            "M is {0}x{0} but Z is {1}x{1}",
            m.dim(),
            z.dim()
        )));
    }
    let zm = z.as_matrix();
    let mut v = m.loss * zm[(0, 0)];
    for (i, &c) in m.cross.iter().enumerate() {
        v += c * (zm[(0, i + 1)] + zm[(i + 1, 0)]) + m.block * zm[(i + 1, i + 1)];
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZStep {
    pub z: Vec<f64>,
    /// `⟨M(w), ζζᵀ⟩ = l(w) + γ² − (2γ/n) Σ|r_i|`
    pub objective: f64,
}

impl ZStep {
    pub fn z_matrix(&self) -> ZMatrix {
        ZMatrix::from_signs(&self.z)
    }
}

/// Sign rule `z_i = −sign(r_i)`, zero residuals mapping to `+1`.
pub fn signs_from_residual(r: &[f64]) -> Vec<f64> {
    r.iter().map(|&v| if v > 0.0 { -1.0 } else { 1.0 }).collect()
}

pub fn z_step_from_residual(r: &[f64], gamma: f64) -> ZStep {
    let n = r.len() as f64;
    let abs_sum: f64 = r.iter().map(|v| v.abs()).sum();
    ZStep {
        z: signs_from_residual(r),
        objective: dot(r, r) / n + gamma * gamma - 2.0 * gamma / n * abs_sum,
    }
}

/// Exact minimizer of `⟨M(w), Z⟩` over the elliptope.
pub fn solve_z_step(x: &Matrix, y: &[f64], w: &[f64], gamma: f64) -> Result<ZStep> {
    check_gamma(gamma)?;
    Ok(z_step_from_residual(&residual(x, y, w)?, gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Factor width `p` of `Z = VVᵀ`; `None` uses `⌈√(2(n+1))⌉ + 1`.
    pub rank: Option<usize>,
    /// Maximum coordinate sweeps over the rows of `V`.
    pub max_iterations: usize,
    /// Stop when a sweep lowers the objective by at most
    /// `objective_tol · (1 + |objective|)`.
    pub objective_tol: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rank: None,
            max_iterations: 100_000,
            objective_tol: 1e-13,
            seed: 0x5d9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub z: ZMatrix,
    /// `⟨M, Z⟩` at the returned point, an upper bound on the SDP optimum.
    pub objective: f64,
    /// Dual bound `Σᵢ yᵢ + (n+1)·min(0, λ_min(M − diag(y)))` with
    /// `yᵢ = (MZ)ᵢᵢ`; no point of the elliptope scores below it.
    pub lower_bound: f64,
    pub iterations: usize,
}

/// Maximum verification size for [`elliptope_sdp_oracle`].
pub const ORACLE_MAX_N: usize = 200;

/// Minimizes `⟨M, Z⟩` over the elliptope with a low-rank factorization
/// `Z = VVᵀ` (unit rows), updating one row at a time to
/// `vᵢ = −gᵢ/‖gᵢ‖` with `gᵢ = Σ_{j≠i} M_ij v_j`. Widths above `√(2(n+1))`
/// leave no spurious local minima for generic `M`; the dual bound certifies
/// the gap.
pub fn elliptope_sdp_oracle(m: &MMatrix, cfg: &OracleConfig) -> Result<OracleResult> {
    let n = m.dim() - 1;
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge {
            n,
            limit: ORACLE_MAX_N,
        });
    }
    if cfg.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be >= 1".into()));
    }
    let dim = n + 1;
    let dense = m.to_dense();
    let p = cfg
        .rank
        .unwrap_or_else(|| (2.0 * dim as f64).sqrt().ceil() as usize + 1)
        .max(2);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut v: Vec<Vec<f64>> = (0..dim)
        .map(|_| {
            let row: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
            let s = norm2(&row);
            row.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let objective = |v: &[Vec<f64>]| {
        let mut total = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                total += dense[(i, j)] * dot(&v[i], &v[j]);
            }
        }
        total
    };
    let mut obj = objective(&v);
    let mut g = vec![0.0; p];
    let mut converged = None;
    for it in 1..=cfg.max_iterations {
        for i in 0..dim {
            g.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..dim {
                let mij = dense[(i, j)];
                if j != i && mij != 0.0 {
                    for (gk, vk) in g.iter_mut().zip(&v[j]) {
                        *gk += mij * vk;
                    }
                }
            }
            let s = norm2(&g);
            if s > 0.0 {
                for (vk, gk) in v[i].iter_mut().zip(&g) {
                    *vk = -gk / s;
                }
            }
        }
        let next = objective(&v);
        let drop = obj - next;
        obj = next;
        if drop <= cfg.objective_tol * (1.0 + obj.abs()) {
            converged = Some(it);
            break;
        }
    }
    let Some(iterations) = converged else {
        return Err(Error::NoConvergence {
            iterations: cfg.max_iterations,
            objective: obj,
        });
    };
    let mut z = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            z[(i, j)] = if i == j { 1.0 } else { dot(&v[i], &v[j]) };
        }
    }
    let mz = dense.matmul(&z)?;
    let y: Vec<f64> = (0..dim).map(|i| mz[(i, i)]).collect();
    let mut slack = dense.clone();
    for (i, yi) in y.iter().enumerate() {
        slack[(i, i)] -= yi;
    }
    let eig_min = sym_eig(&slack)?.min();
    Ok(OracleResult {
        z: ZMatrix::new(z)?,
        objective: obj,
        lower_bound: y.iter().sum::<f64>() + dim as f64 * eig_min.min(0.0),
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiqpResult {
    pub w_opt: Vec<f64>,
    pub z_opt: Vec<f64>,
    /// `(1/n)‖X w + γ z − y‖² + λ‖w‖₁` at the optimum.
    pub objective: f64,
    pub enumerated: usize,
}

pub const MIQP_DEFAULT_LIMIT: usize = 14;

/// Sign vector for enumeration index `idx`: the first entry is the most
/// significant bit and a clear bit means `−1`, so increasing indices run
/// through `{−1, 1}ⁿ` in lexicographic order.
pub fn signs_from_index(idx: u64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if idx >> (n - 1 - i) & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

/// Exhaustive minimization of the combinatorial objective over all
/// `z ∈ {−1, 1}ⁿ`, solving the inner LASSO for each assignment.
pub fn miqp_brute_force(
    x: &Matrix,
    y: &[f64],
    gamma: f64,
    lambda: f64,
    limit: usize,
) -> Result<MiqpResult> {
    miqp_brute_force_with(x, y, gamma, &SolverConfig::with_lambda(lambda), limit)
}

pub fn miqp_brute_force_with(
    x: &Matrix,
    y: &[f64],
    gamma: f64,
    solver: &SolverConfig,
    limit: usize,
) -> Result<MiqpResult> {
    check_gamma(gamma)?;
    solver.validate()?;
    let n = x.rows();
    if n > limit || n >= 63 {
        return Err(Error::TooLarge { n, limit });
    }
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "response of length {} for {n} rows",
            y.len()
        )));
    }
    let design = LassoDesign::new(x);
    let total = 1u64 << n;
    let evaluate = |idx: u64| -> Result<(f64, u64, Vec<f64>)> {
        let z = signs_from_index(idx, n);
        let target: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - gamma * b).collect();
        let fit = design.solve(&target, solver, None)?;
        let obj = lasso_objective(x, &target, &fit.w, solver.lambda)?;
        Ok((obj, idx, fit.w))
    };
    let better = |a: (f64, u64, Vec<f64>), b: (f64, u64, Vec<f64>)| {
        if (b.0, b.1) < (a.0, a.1) {
            b
        } else {
            a
        }
    };
    let (objective, idx, w_opt) = (0..total)
        .into_par_iter()
        .map(evaluate)
        .try_reduce(|| (f64::INFINITY, u64::MAX, Vec::new()), |a, b| Ok(better(a, b)))?;
    Ok(MiqpResult {
        w_opt,
        z_opt: signs_from_index(idx, n),
        objective,
        enumerated: total as usize,
    })
}
