//! Numerical checks of the optimality theory on concrete instances:
//! sample assumption quantities, the primal-dual witness, KKT conditions,
//! the spectrum of `Λ`, and invexity / non-convexity probes.

use serde::Serialize;

use crate::altopt::Solution;
use crate::error::{Error, Result};
use crate::fairlasso::{solve_weighted_lasso, SolverConfig};
use crate::numkit::{
    cholesky_solve, derive_seed, dot, norm2, sym_eig, Arrowhead, Inertia, Matrix, SplitMix64,
};
use crate::synthgen::Dataset;
use crate::zstep::{residual, MMatrix};

/// Empirical frequency of a probabilistic event over seeded trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frequency {
    pub trials: usize,
    pub successes: usize,
}

impl Frequency {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Default lower bound on `eig_min(Ĥ_SS)` for the positive-definiteness check.
pub const C_MIN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `eig_min(Ĥ_SS)`
    pub c_min_hat: f64,
    /// `‖Ĥ_{S^cS} Ĥ_SS⁻¹‖_∞`; `+∞` when `Ĥ_SS` is singular.
    pub incoherence_norm: f64,
    pub a1_pass: bool,
    pub a2_pass: bool,
    pub alpha_margin: f64,
}

fn check_index_set(s: &[usize], d: usize) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Config("support set must be non-empty".into()));
    }
    if let Some(&i) = s.iter().find(|&&i| i >= d) {
        return Err(Error::Config(format!("support index {i} out of range for d = {d}")));
    }
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != s.len() {
        return Err(Error::Config("support set has repeated indices".into()));
    }
    Ok(())
}

fn complement(s: &[usize], d: usize) -> Vec<usize> {
    (0..d).filter(|i| !s.contains(i)).collect()
}

/// `Ĥ_{A B} = (1/n) X_Aᵀ X_B`
fn sample_hessian(x: &Matrix, a: &[usize], b: &[usize]) -> Matrix {
    let n = x.rows() as f64;
    let xa = x.select_columns(a);
    let xb = x.select_columns(b);
    xa.transpose().matmul(&xb).expect("same row count").scale(1.0 / n)
}

pub fn check_assumptions(x: &Matrix, s: &[usize]) -> Result<AssumptionReport> {
    check_assumptions_with(x, s, C_MIN_FLOOR)
}

pub fn check_assumptions_with(x: &Matrix, s: &[usize], c_min_floor: f64) -> Result<AssumptionReport> {
    check_index_set(s, x.cols())?;
    let h_ss = sample_hessian(x, s, s);
    let c_min_hat = sym_eig(&h_ss)?.min();
    let sc = complement(s, x.cols());
    let incoherence_norm = if sc.is_empty() {
        0.0
    } else {
        let h_ssc = sample_hessian(x, s, &sc);
        match cholesky_solve(&h_ss, &h_ssc) {
            // columns of Ĥ_SS⁻¹ Ĥ_{SS^c} are the rows of Ĥ_{S^cS} Ĥ_SS⁻¹
            Ok(sol) => sol.transpose().norm_inf(),
            Err(Error::Singular { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        }
    };
    Ok(AssumptionReport {
        c_min_hat,
        incoherence_norm,
        a1_pass: c_min_hat > c_min_floor && incoherence_norm.is_finite(),
        a2_pass: incoherence_norm < 1.0,
        alpha_margin: 1.0 - incoherence_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub w_tilde: Vec<f64>,
    pub mu: Vec<f64>,
    /// `Λ = M(w̃) − diag(M(w̃) Z*)`, an arrowhead matrix.
    pub lambda_matrix: Arrowhead,
    pub g: Vec<f64>,
    pub stationarity_residual: f64,
    pub g_offsupport_max: f64,
    /// `‖Λ ζ*‖₂`
    pub lambda_null_residual: f64,
    pub lambda_eig2: f64,
    /// `⟨Λ, Z*⟩`
    pub complementary_slackness: f64,
    /// `‖w̃_S − w*_S‖₂`, present when the true weights are supplied.
    pub delta_norm: Option<f64>,
    /// `2 λ √s / eig_min(Ĥ_SS)`
    pub delta_bound: f64,
    pub c_min_hat: f64,
    pub z_star: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

impl WitnessReport {
    /// `M(w̃) + diag(μ) − Λ`, entrywise.
    pub fn stationarity_z_residual(&self, m: &MMatrix) -> f64 {
        let l = &self.lambda_matrix;
        let mut worst = (m.loss + self.mu[0] - l.corner).abs();
        for i in 0..m.cross.len() {
            worst = worst
                .max((m.cross[i] - l.arm[i]).abs())
                .max((m.block + self.mu[i + 1] - l.diag[i]).abs());
        }
        worst
    }

    pub fn zeta(&self) -> Vec<f64> {
        zeta(&self.z_star)
    }
}

fn zeta(z: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(z.len() + 1);
    v.push(1.0);
    v.extend_from_slice(z);
    v
}

/// Dual variables `μ = −diag(M Z)` and `Λ = M − diag(M Z)` for the
/// rank-one `Z = ζζᵀ`.
pub fn dual_variables(m: &MMatrix, z: &[f64]) -> (Vec<f64>, Arrowhead) {
    // diag(M ζζᵀ)_i = (M ζ)_i ζ_i
    let d0 = m.loss + dot(&m.cross, z);
    let mut mu = Vec::with_capacity(z.len() + 1);
    mu.push(-d0);
    let mut diag = Vec::with_capacity(z.len());
    for (&c, &zi) in m.cross.iter().zip(z) {
        let di = (c + m.block * zi) * zi;
        mu.push(-di);
        diag.push(m.block - di);
    }
    (mu, Arrowhead::new(m.loss - d0, m.cross.clone(), diag))
}

/// Primal-dual witness on the support `s` with `Z = Z*`.
pub fn build_witness(
    data: &Dataset,
    z_star: &[f64],
    s: &[usize],
    gamma: f64,
    solver: &SolverConfig,
    w_star: Option<&[f64]>,
) -> Result<WitnessReport> {
    let lambda = solver.lambda;
    if !(lambda > 0.0) {
        return Err(Error::Config(
            "lambda must be > 0 to recover the subgradient".into(),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma = {gamma} must be > 0")));
    }
    let (n, d) = (data.n(), data.d());
    if z_star.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} samples",
            z_star.len()
        )));
    }
    check_index_set(s, d)?;
    let target: Vec<f64> = data
        .y
        .iter()
        .zip(z_star)
        .map(|(y, z)| y - gamma * z)
        .collect();
    let xs = data.x.select_columns(s);
    let restricted = solve_weighted_lasso(&xs, &target, solver)?;
    let mut w_tilde = vec![0.0; d];
    for (&i, &v) in s.iter().zip(&restricted.w) {
        w_tilde[i] = v;
    }

    let r = residual(&data.x, &data.y, &w_tilde)?;
    let m = MMatrix::from_residual(&r, gamma);
    let (mu, lam) = dual_variables(&m, z_star);

    let g = subgradient(&data.x, &r, z_star, gamma, lambda)?;
    let mut stationarity_residual: f64 = 0.0;
    for &i in s {
        let v = if w_tilde[i] != 0.0 {
            lambda * (g[i] - w_tilde[i].signum()).abs()
        } else {
            lambda * (g[i].abs() - 1.0).max(0.0)
        };
        stationarity_residual = stationarity_residual.max(v);
    }
    let g_offsupport_max = complement(s, d)
        .iter()
        .map(|&i| g[i].abs())
        .fold(0.0, f64::max);

    let zeta = zeta(z_star);
    let null = lam.matvec(&zeta);
    let c_min_hat = sym_eig(&sample_hessian(&data.x, s, s))?.min();
    let delta_norm = match w_star {
        Some(ws) if ws.len() != d => {
            return Err(Error::Dimension(format!(
                "true weights of length {} for d = {d}",
                ws.len()
            )))
        }
        Some(ws) => Some(norm2(
            &s.iter().map(|&i| w_tilde[i] - ws[i]).collect::<Vec<_>>(),
        )),
        None => None,
    };
    Ok(WitnessReport {
        lambda_null_residual: norm2(&null),
        complementary_slackness: dot(&zeta, &null),
        lambda_eig2: if lam.dim() >= 2 {
            lam.eigenvalue(1)
        } else {
            f64::NAN
        },
        delta_bound: 2.0 * lambda * (s.len() as f64).sqrt() / c_min_hat,
        w_tilde,
        mu,
        lambda_matrix: lam,
        g,
        stationarity_residual,
        g_offsupport_max,
        delta_norm,
        c_min_hat,
        z_star: z_star.to_vec(),
        gamma,
        lambda,
    })
}

/// `g = −(2/(nλ)) Xᵀ(Xw + γz − y)` from the stationarity condition in `w`.
fn subgradient(x: &Matrix, r: &[f64], z: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    let n = x.rows() as f64;
    let shifted: Vec<f64> = r.iter().zip(z).map(|(ri, zi)| ri + gamma * zi).collect();
    Ok(x
        .t_matvec(&shifted)?
        .into_iter()
        .map(|v| -2.0 * v / (n * lambda))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub tol: f64,
    /// `max_i λ|g_i − sign(w_i)|` over nonzero `w_i`; with `λ = 0`, the
    /// gradient norm `‖(2/n)Xᵀ(Xw + γz − y)‖_∞`.
    pub stationarity_residual: f64,
    pub subgradient_max: f64,
    pub stationarity_pass: bool,
    /// `max |M(w) + diag(μ) − Λ|`
    pub z_stationarity_residual: f64,
    pub z_stationarity_pass: bool,
    pub complementary_slackness: f64,
    pub slackness_pass: bool,
    pub lambda_eig_min: f64,
    pub dual_feasible_pass: bool,
    pub diag_residual: f64,
    pub z_eig_min: f64,
    pub primal_feasible_pass: bool,
    pub all_pass: bool,
}

/// Checks the optimality conditions of the relaxed problem at a rank-one
/// `Z = ζζᵀ` built from `solution.z`.
pub fn check_kkt(data: &Dataset, solution: &Solution, gamma: f64, lambda: f64, tol: f64) -> Result<KktReport> {
    let (n, d) = (data.n(), data.d());
    if solution.w.len() != d || solution.z.len() != n {
        return Err(Error::Dimension(format!(
            "solution is (d={}, n={}) for a {n}x{d} dataset",
            solution.w.len(),
            solution.z.len()
        )));
    }
    let z = &solution.z;
    let r = residual(&data.x, &data.y, &solution.w)?;

    let (stationarity_residual, subgradient_max) = if lambda > 0.0 {
        let g = subgradient(&data.x, &r, z, gamma, lambda)?;
        let mut res: f64 = 0.0;
        for (gi, wi) in g.iter().zip(&solution.w) {
            if *wi != 0.0 {
                res = res.max(lambda * (gi - wi.signum()).abs());
            }
        }
        (res, g.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    } else {
        let g = subgradient(&data.x, &r, z, gamma, 1.0)?;
        (g.iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0)
    };
    let stationarity_pass = stationarity_residual <= tol && subgradient_max <= 1.0 + tol;

    let m = MMatrix::from_residual(&r, gamma);
    let (mu, lam) = dual_variables(&m, z);
    let mut z_stat: f64 = (m.loss + mu[0] - lam.corner).abs();
    for i in 0..n {
        z_stat = z_stat
            .max((m.cross[i] - lam.arm[i]).abs())
            .max((m.block + mu[i + 1] - lam.diag[i]).abs());
    }
    let zeta = zeta(z);
    let slack = dot(&zeta, &lam.matvec(&zeta));
    let lambda_eig_min = lam.eig_min();

    // Z = ζζᵀ has diagonal z_i² and spectrum {‖ζ‖², 0, …, 0}
    let diag_residual = z.iter().map(|v| (v * v - 1.0).abs()).fold(0.0, f64::max);
    let z_eig_min = if n == 0 { dot(&zeta, &zeta) } else { 0.0 };

    let report = KktReport {
        tol,
        stationarity_residual,
        subgradient_max,
        stationarity_pass,
        z_stationarity_residual: z_stat,
        z_stationarity_pass: z_stat == 0.0,
        complementary_slackness: slack,
        slackness_pass: slack.abs() <= tol,
        lambda_eig_min,
        dual_feasible_pass: lambda_eig_min >= -tol,
        diag_residual,
        z_eig_min,
        primal_feasible_pass: diag_residual <= 1e-10 && z_eig_min >= -tol,
        all_pass: false,
    };
    Ok(KktReport {
        all_pass: report.stationarity_pass
            && report.z_stationarity_pass
            && report.slackness_pass
            && report.dual_feasible_pass
            && report.primal_feasible_pass,
        ..report
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSpectrum {
    pub eig2: f64,
    pub inertia: Inertia,
    /// Zero band `1e-8 · ‖Λ‖₂` used for the inertia counts.
    pub band: f64,
    pub positive_diag: usize,
    pub zero_diag: usize,
    /// `π(Λ)` equals the positive-entry count of `−(γ/n) r∘z*` and `δ(Λ)`
    /// equals its zero-entry count plus one.
    pub diag_check: bool,
}

pub fn lambda_spectrum(w: &WitnessReport) -> LambdaSpectrum {
    let lam = &w.lambda_matrix;
    let band = 1e-8 * lam.spectral_norm();
    let inertia = lam.inertia(band);
    // −(γ/n) r_i z_i, with (γ/n) r stored as the arm of Λ
    let entries: Vec<f64> = lam.arm.iter().zip(&w.z_star).map(|(c, z)| -c * z).collect();
    let positive_diag = entries.iter().filter(|&&v| v > band).count();
    let zero_diag = entries.iter().filter(|&&v| v.abs() <= band).count();
    LambdaSpectrum {
        eig2: if lam.dim() >= 2 { lam.eigenvalue(1) } else { f64::NAN },
        inertia,
        band,
        positive_diag,
        zero_diag,
        diag_check: inertia.positive == positive_diag && inertia.zero == zero_diag + 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonconvexityReport {
    pub column: usize,
    pub row: usize,
    pub beta: f64,
    /// Left side of the first-order convexity inequality, evaluated directly.
    pub gap: f64,
    /// `(4β/n)(β Σ_l X_li² − γ X_ki)`
    pub gap_closed_form: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvexityReport {
    pub trials: usize,
    pub violations: usize,
    pub min_gap: f64,
    pub resampled: usize,
    pub counterexample: NonconvexityReport,
}

/// `⟨M(w), Z⟩` and its gradient in `w`: `(2/n)Xᵀ(Z₀₀ r + γ Z[1.., 0])`.
fn bilinear(data: &Dataset, gamma: f64, w: &[f64], z: &Matrix) -> Result<(f64, Vec<f64>, Matrix)> {
    let n = data.n() as f64;
    let r = residual(&data.x, &data.y, w)?;
    let m = MMatrix::from_residual(&r, gamma).to_dense();
    let value = m.inner(z)?;
    let col: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(i, ri)| z[(0, 0)] * ri + gamma * z[(i + 1, 0)])
        .collect();
    let grad = data.x.t_matvec(&col)?.into_iter().map(|v| 2.0 * v / n).collect();
    Ok((value, grad, m))
}

fn random_elliptope_point(n: usize, rng: &mut SplitMix64) -> Matrix {
    if rng.next_u64() & 1 == 0 {
        let z: Vec<f64> = (0..n).map(|_| rng.sign()).collect();
        return Matrix::outer(&zeta(&z));
    }
    // Gram matrix of random unit vectors
    let k = 3;
    let vs: Vec<Vec<f64>> = (0..=n)
        .map(|_| {
            let v: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
            let s = norm2(&v);
            v.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut z = Matrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            z[(i, j)] = if i == j { 1.0 } else { dot(&vs[i], &vs[j]) };
        }
    }
    z
}

/// Gap of the invexity inequality for `f = ⟨M(w) + I, Z⟩` with kernel
/// `η = (w − w̄, M′(w̄)⁻¹ M′(w)(Z − Z̄))`.
pub fn invexity_gap(
    data: &Dataset,
    gamma: f64,
    w: &[f64],
    z: &Matrix,
    w_bar: &[f64],
    z_bar: &Matrix,
) -> Result<f64> {
    let id = Matrix::identity(z.rows());
    let (f, _, m) = bilinear(data, gamma, w, z)?;
    let (f_bar, grad_w, m_bar) = bilinear(data, gamma, w_bar, z_bar)?;
    let mp = m.add(&id)?;
    let mp_bar = m_bar.add(&id)?;
    let f = f + z.trace();
    let f_bar = f_bar + z_bar.trace();
    let eta_z = cholesky_solve(&mp_bar, &mp.matmul(&z.sub(z_bar)?)?)?;
    let dw: Vec<f64> = w.iter().zip(w_bar).map(|(a, b)| a - b).collect();
    Ok(f - f_bar - dot(&grad_w, &dw) - mp_bar.inner(&eta_z)?)
}

/// Randomized check of the invexity inequality plus the explicit
/// first-order convexity violation.
pub fn invexity_probe(data: &Dataset, gamma: f64, trials: usize, seed: u64) -> Result<InvexityReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma = {gamma} must be > 0")));
    }
    let (n, d) = (data.n(), data.d());
    let mut rng = SplitMix64::new(derive_seed(seed, 0x1417));
    let mut violations = 0;
    let mut resampled = 0;
    let mut min_gap = f64::INFINITY;
    let mut done = 0;
    while done < trials {
        let w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let w_bar: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let z = random_elliptope_point(n, &mut rng);
        let z_bar = random_elliptope_point(n, &mut rng);
        match invexity_gap(data, gamma, &w, &z, &w_bar, &z_bar) {
            Ok(gap) => {
                if gap < -1e-8 {
                    violations += 1;
                }
                min_gap = min_gap.min(gap);
                done += 1;
            }
            Err(Error::Singular { .. }) => resampled += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(InvexityReport {
        trials,
        violations,
        min_gap,
        resampled,
        counterexample: nonconvexity_counterexample(data, gamma)?,
    })
}

/// Pair `w = βe_i, w̄ = −βe_i`, `Z = I`, `Z̄ = I + e₀e_{k+1}ᵀ + e_{k+1}e₀ᵀ`
/// on which `⟨M(w), Z⟩` violates the first-order convexity inequality.
///
/// The gap equals `(4β/n)(β Σ_l X_li² − γ X_ki)`; taking
/// `β = γ X_ki / (2 Σ_l X_li²)` makes it `−γ² X_ki² / (n Σ_l X_li²) < 0`
/// whenever `X_ki ≠ 0`. The entry with the largest `|X_ki|` is used.
pub fn nonconvexity_counterexample(data: &Dataset, gamma: f64) -> Result<NonconvexityReport> {
    let (n, d) = (data.n(), data.d());
    let (mut row, mut column, mut best) = (0, 0, 0.0);
    for k in 0..n {
        for i in 0..d {
            let v = data.x[(k, i)].abs();
            if v > best {
                (row, column, best) = (k, i, v);
            }
        }
    }
    if best == 0.0 {
        return Err(Error::Data("design is identically zero".into()));
    }
    let col = data.x.column(column);
    let sq = dot(&col, &col);
    let xki = data.x[(row, column)];
    let beta = gamma * xki / (2.0 * sq);
    let mut w = vec![0.0; d];
    w[column] = beta;
    let w_bar: Vec<f64> = w.iter().map(|v| -v).collect();
    let z = Matrix::identity(n + 1);
    let mut z_bar = z.clone();
    z_bar[(0, row + 1)] = 1.0;
    z_bar[(row + 1, 0)] = 1.0;
    let (f, _, _) = bilinear(data, gamma, &w, &z)?;
    let (f_bar, grad_w, m_bar) = bilinear(data, gamma, &w_bar, &z_bar)?;
    let dw: Vec<f64> = w.iter().zip(&w_bar).map(|(a, b)| a - b).collect();
    let gap = f - f_bar - m_bar.inner(&z.sub(&z_bar)?)? - dot(&grad_w, &dw);
    let nf = n as f64;
    Ok(NonconvexityReport {
        column,
        row,
        beta,
        gap,
        gap_closed_form: 4.0 * beta / nf * (beta * sq - gamma * xki),
        violated: gap < 0.0,
    })
}
