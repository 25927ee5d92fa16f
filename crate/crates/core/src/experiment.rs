//! Recovery metrics and the seeded experiment harness behind the CLI.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::altopt::{debias, fit, FitConfig, Solution};
use crate::dataio::{preprocess, PreprocessOptions, Preprocessed, RawTable};
use crate::diagnostics::{check_assumptions, check_kkt, Frequency};
use crate::error::{Error, Result};
use crate::numkit::{derive_seed, gaussian_sample};
use crate::synthgen::{generate_dataset, make_ground_truth, GenerativeConfig};

/// `|S ∩ Ŝ| / |S ∪ Ŝ|`, and 1 when both sets are empty.
pub fn metric_jaccard(s: &[usize], s_hat: &[usize]) -> f64 {
    let a: BTreeSet<usize> = s.iter().copied().collect();
    let b: BTreeSet<usize> = s_hat.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// 1 when `z == ẑ` or `z == −ẑ`, else 0.
pub fn metric_exact_z(z: &[f64], z_hat: &[f64]) -> Result<u8> {
    check_lengths(z, z_hat)?;
    let same = z.iter().zip(z_hat).all(|(a, b)| a == b);
    let flipped = z.iter().zip(z_hat).all(|(a, b)| *a == -*b);
    Ok((same || flipped) as u8)
}

/// 1 when `z == ẑ` entry-wise.
pub fn metric_exact_z_aligned(z: &[f64], z_hat: &[f64]) -> Result<u8> {
    check_lengths(z, z_hat)?;
    Ok(z.iter().zip(z_hat).all(|(a, b)| a == b) as u8)
}

fn check_lengths(z: &[f64], z_hat: &[f64]) -> Result<()> {
    if z.len() != z_hat.len() {
        return Err(Error::Dimension(format!(
            "label vectors of length {} and {}",
            z.len(),
            z_hat.len()
        )));
    }
    Ok(())
}

/// `n = round(10^β · ln d)`
pub fn samples_for(beta: f64, d: usize) -> usize {
    (10f64.powf(beta) * (d as f64).ln()).round() as usize
}

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub dims: Vec<usize>,
    pub betas: Vec<f64>,
    pub runs: usize,
    /// Template; `d`, `n` and `seed` are set per run.
    pub generative: GenerativeConfig,
    /// Template; `solver.lambda` is replaced unless `lambda` is set.
    pub fit: FitConfig,
    /// Fixed regularizer; `None` uses the theoretical default per `(d, n)`.
    pub lambda: Option<f64>,
    pub seed: u64,
    /// Run the KKT check on every converged fit.
    pub check_kkt: bool,
}

impl ExperimentGrid {
    /// The synthetic protocol: `s = 10`, `γ = 2`, `k = 0.15`, 30 runs.
    pub fn protocol_defaults(dims: Vec<usize>, betas: Vec<f64>, seed: u64) -> Self {
        let generative = GenerativeConfig {
            s: 10,
            gamma: 2.0,
            k: 0.15,
            ..GenerativeConfig::default()
        };
        Self {
            dims,
            betas,
            runs: 30,
            fit: FitConfig::new(generative.gamma, 0.0),
            generative,
            lambda: None,
            seed,
            check_kkt: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.betas.is_empty() {
            return Err(Error::Config("grid needs at least one d and one beta".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(Error::Config(format!("d = {d} < 2")));
        }
        Ok(())
    }

    fn lambda_for(&self, d: usize, n: usize) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(l),
            None => self.fit.solver.lambda_default(d, n),
        }
    }
}

/// Seed of run `run` for dimension `d`; shared across β so cells along a
/// curve use common random numbers.
pub fn run_seed(root: u64, d: usize, run: usize) -> u64 {
    derive_seed(derive_seed(root, d as u64), run as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub d: usize,
    pub beta: f64,
    pub n: usize,
    pub run: usize,
    pub seed: u64,
    pub s: usize,
    pub gamma: f64,
    pub gamma_hat: f64,
    pub k: f64,
    pub lambda: f64,
    pub jaccard: f64,
    pub exact_z: u8,
    pub exact_z_aligned: u8,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_pass: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub d: usize,
    pub beta: f64,
    pub n: usize,
    pub mean_jaccard: f64,
    pub exact_z_rate: f64,
    pub aligned_z_rate: f64,
    pub converged_rate: f64,
    pub runs: usize,
    pub s: usize,
    pub gamma: f64,
    pub gamma_hat: f64,
    pub k: f64,
    pub min_signal: f64,
    pub lambda_rule: String,
    pub root_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub curve: Vec<CurvePoint>,
    pub runs: Vec<RunRecord>,
}

struct RunSpec {
    d: usize,
    beta: f64,
    n: usize,
    run: usize,
    seed: u64,
    gamma_hat: f64,
}

fn execute(spec: &RunSpec, grid: &ExperimentGrid) -> RunRecord {
    let gen = GenerativeConfig {
        d: spec.d,
        n: spec.n,
        seed: spec.seed,
        ..grid.generative.clone()
    };
    let mut rec = RunRecord {
        d: spec.d,
        beta: spec.beta,
        n: spec.n,
        run: spec.run,
        seed: spec.seed,
        s: gen.s,
        gamma: gen.gamma,
        gamma_hat: spec.gamma_hat,
        k: gen.k,
        lambda: f64::NAN,
        jaccard: 0.0,
        exact_z: 0,
        exact_z_aligned: 0,
        converged: false,
        iterations: 0,
        kkt_pass: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let lambda = grid.lambda_for(spec.d, spec.n)?;
        rec.lambda = lambda;
        let truth = make_ground_truth(&gen)?;
        let data = generate_dataset(&truth, &gen)?;
        let mut cfg = grid.fit.clone();
        cfg.gamma = spec.gamma_hat;
        cfg.solver.lambda = lambda;
        let sol = fit(&data, &cfg)?;
        rec.jaccard = metric_jaccard(&truth.support, &sol.support());
        rec.exact_z = metric_exact_z(&truth.z_star, &sol.z)?;
        rec.exact_z_aligned = metric_exact_z_aligned(&truth.z_star, &sol.z)?;
        rec.converged = sol.converged;
        rec.iterations = sol.iterations;
        if grid.check_kkt && sol.converged {
            rec.kkt_pass = Some(check_kkt(&data, &sol, spec.gamma_hat, lambda, 1e-6)?.all_pass);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.converged = false;
        rec.error = Some(e.to_string());
    }
    rec
}

fn aggregate(records: &[RunRecord], grid: &ExperimentGrid) -> CurvePoint {
    let r = records.len() as f64;
    let first = &records[0];
    CurvePoint {
        d: first.d,
        beta: first.beta,
        n: first.n,
        mean_jaccard: records.iter().map(|x| x.jaccard).sum::<f64>() / r,
        exact_z_rate: records.iter().map(|x| x.exact_z as f64).sum::<f64>() / r,
        aligned_z_rate: records.iter().map(|x| x.exact_z_aligned as f64).sum::<f64>() / r,
        converged_rate: records.iter().filter(|x| x.converged).count() as f64 / r,
        runs: records.len(),
        s: first.s,
        gamma: first.gamma,
        gamma_hat: first.gamma_hat,
        k: first.k,
        min_signal: grid.generative.min_signal,
        lambda_rule: match grid.lambda {
            Some(l) => format!("fixed {l}"),
            None => "128*rho*k/alpha*sqrt(ln d)/n".into(),
        },
        root_seed: grid.seed,
    }
}

fn run_specs(grid: &ExperimentGrid, specs: Vec<RunSpec>) -> Vec<RunRecord> {
    specs.par_iter().map(|s| execute(s, grid)).collect()
}

/// Support and label recovery over the `(d, β, run)` grid.
pub fn run_recovery_experiment(grid: &ExperimentGrid) -> Result<ExperimentOutput> {
    grid.validate()?;
    let mut specs = Vec::new();
    for &d in &grid.dims {
        for &beta in &grid.betas {
            let n = samples_for(beta, d);
            for run in 0..grid.runs {
                specs.push(RunSpec {
                    d,
                    beta,
                    n,
                    run,
                    seed: run_seed(grid.seed, d, run),
                    gamma_hat: grid.fit.gamma,
                });
            }
        }
    }
    let runs = run_specs(grid, specs);
    let curve = runs.chunks(grid.runs).map(|c| aggregate(c, grid)).collect();
    Ok(ExperimentOutput { curve, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaPoint {
    pub gamma_hat: f64,
    pub mean_jaccard: f64,
    pub exact_z_rate: f64,
    pub aligned_z_rate: f64,
    pub runs: usize,
    pub d: usize,
    pub beta: f64,
    pub n: usize,
    pub gamma: f64,
    pub s: usize,
    pub k: f64,
    pub root_seed: u64,
}

/// Fits with misspecified `γ̂` against truth generated with the template's γ.
/// Uses the first `d` and `β` of the grid.
pub fn run_gamma_sensitivity(grid: &ExperimentGrid, gamma_grid: &[f64]) -> Result<(Vec<GammaPoint>, Vec<RunRecord>)> {
    grid.validate()?;
    if gamma_grid.is_empty() || gamma_grid.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Config("gamma grid must be non-empty and positive".into()));
    }
    let (d, beta) = (grid.dims[0], grid.betas[0]);
    let n = samples_for(beta, d);
    let mut specs = Vec::new();
    for &gamma_hat in gamma_grid {
        for run in 0..grid.runs {
            specs.push(RunSpec {
                d,
                beta,
                n,
                run,
                seed: run_seed(grid.seed, d, run),
                gamma_hat,
            });
        }
    }
    let runs = run_specs(grid, specs);
    let table = runs
        .chunks(grid.runs)
        .map(|c| {
            let p = aggregate(c, grid);
            GammaPoint {
                gamma_hat: p.gamma_hat,
                mean_jaccard: p.mean_jaccard,
                exact_z_rate: p.exact_z_rate,
                aligned_z_rate: p.aligned_z_rate,
                runs: p.runs,
                d,
                beta,
                n,
                gamma: p.gamma,
                s: p.s,
                k: p.k,
                root_seed: grid.seed,
            }
        })
        .collect();
    Ok((table, runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GammaRule {
    /// `(max y − min y) / 2` on the preprocessed response.
    HalfRange,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: i8,
    pub count: usize,
    pub mean_response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predictor {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RealDataReport {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// `(1/n)‖Xw + γz − y‖²`
    pub mse: f64,
    pub groups: Vec<GroupSummary>,
    /// Nonzero weights by decreasing magnitude.
    pub top_predictors: Vec<Predictor>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub solution: Solution,
    #[serde(skip)]
    pub debiased: Vec<f64>,
    #[serde(skip)]
    pub prepared: Option<Preprocessed>,
}

pub fn run_real_data(
    table: &RawTable,
    opts: &PreprocessOptions,
    lambda: f64,
    gamma_rule: GammaRule,
) -> Result<RealDataReport> {
    let prepared = preprocess(table, opts)?;
    let mut report = fit_real(&prepared, lambda, gamma_rule)?;
    report.prepared = Some(prepared);
    Ok(report)
}

/// Fits an already-preprocessed dataset and summarizes the result.
pub fn fit_real(prepared: &Preprocessed, lambda: f64, gamma_rule: GammaRule) -> Result<RealDataReport> {
    let data = &prepared.dataset;
    let gamma = match gamma_rule {
        GammaRule::Fixed(g) => g,
        GammaRule::HalfRange => {
            let hi = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = data.y.iter().copied().fold(f64::INFINITY, f64::min);
            (hi - lo) / 2.0
        }
    };
    let sol = fit(data, &FitConfig::new(gamma, lambda))?;
    let xw = data.x.matvec(&sol.w)?;
    let n = data.n() as f64;
    let mse = xw
        .iter()
        .zip(&sol.z)
        .zip(&data.y)
        .map(|((a, z), y)| (a + gamma * z - y).powi(2))
        .sum::<f64>()
        / n;
    let groups = [1i8, -1]
        .iter()
        .map(|&label| {
            let ys: Vec<f64> = data
                .y
                .iter()
                .zip(&sol.z)
                .filter(|(_, z)| **z == label as f64)
                .map(|(y, _)| *y)
                .collect();
            GroupSummary {
                label,
                count: ys.len(),
                mean_response: if ys.is_empty() {
                    f64::NAN
                } else {
                    ys.iter().sum::<f64>() / ys.len() as f64
                },
            }
        })
        .collect();
    let mut top: Vec<Predictor> = sol
        .support()
        .into_iter()
        .map(|j| Predictor {
            name: prepared.columns.columns[j].clone(),
            weight: sol.w[j],
        })
        .collect();
    top.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
    Ok(RealDataReport {
        n: data.n(),
        d: data.d(),
        lambda,
        gamma,
        mse,
        groups,
        top_predictors: top,
        converged: sol.converged,
        iterations: sol.iterations,
        debiased: debias(&data.y, &sol.z, gamma)?,
        solution: sol,
        prepared: None,
    })
}

/// Serializes rows with a header line; output is byte-stable for equal input.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Self-contained SVG line chart with the y axis fixed to `[0, 1]`.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 150.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - y.clamp(0.0, 1.0) * (H - T - B);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        (L + W - R) / 2.0,
        escape(title)
    ));
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        s.push_str(&format!(
            "<line x1=\"{L}\" y1=\"{0:.1}\" x2=\"{1}\" y2=\"{0:.1}\" stroke=\"#ddd\"/>\n<text x=\"{2}\" y=\"{3:.1}\" text-anchor=\"end\">{y:.1}</text>\n",
            py(y),
            W - R,
            L - 6.0,
            py(y) + 4.0
        ));
    }
    for i in 0..=4 {
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            px(x),
            H - B + 18.0,
            trim_number(x)
        ));
    }
    s.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - B,
        W - R
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (L + W - R) / 2.0,
        H - 15.0,
        escape(x_label)
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
        (T + H - B) / 2.0,
        escape(y_label)
    ));
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in &ser.points {
            s.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        let ly = T + 10.0 + 18.0 * k as f64;
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{2}\" y=\"{3}\">{4}</text>\n",
            W - R + 12.0,
            W - R + 32.0,
            W - R + 38.0,
            ly + 4.0,
            escape(&ser.label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn trim_number(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One series per `d` of a recovery curve.
pub fn curve_series(curve: &[CurvePoint], metric: fn(&CurvePoint) -> f64) -> Vec<Series> {
    let dims: BTreeSet<usize> = curve.iter().map(|p| p.d).collect();
    dims.into_iter()
        .map(|d| Series {
            label: format!("d = {d}"),
            points: curve
                .iter()
                .filter(|p| p.d == d)
                .map(|p| (p.beta, metric(p)))
                .collect(),
        })
        .collect()
}

/// Assumption frequencies at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionRow {
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub runs: usize,
    pub a1_holds: usize,
    pub a2_holds: usize,
    pub a1_rate: f64,
    pub a2_rate: f64,
    pub mean_c_min_hat: f64,
    pub mean_incoherence: f64,
    pub root_seed: u64,
}

/// Frequency with which the sample assumptions hold over `runs` seeded
/// standard Gaussian designs, for each sample size in `ns`.
pub fn run_assumption_sweep(d: usize, s: usize, ns: &[usize], runs: usize, seed: u64) -> Result<Vec<AssumptionRow>> {
    ns.iter()
        .map(|&n| {
            let reps: Vec<_> = (0..runs)
                .into_par_iter()
                .map(|run| {
                    let cfg = GenerativeConfig {
                        d,
                        s,
                        n,
                        seed: run_seed(seed, d, run),
                        ..GenerativeConfig::default()
                    };
                    let truth = make_ground_truth(&cfg)?;
                    let x = gaussian_sample(n, d, cfg.seed, &vec![1.0; d])?;
                    check_assumptions(&x, &truth.support)
                })
                .collect::<Result<_>>()?;
            let a1 = reps.iter().filter(|r| r.a1_pass).count();
            let a2 = reps.iter().filter(|r| r.a2_pass).count();
            let r = runs as f64;
            Ok(AssumptionRow {
                n,
                d,
                s,
                runs,
                a1_holds: a1,
                a2_holds: a2,
                a1_rate: Frequency { trials: runs, successes: a1 }.rate(),
                a2_rate: Frequency { trials: runs, successes: a2 }.rate(),
                mean_c_min_hat: reps.iter().map(|x| x.c_min_hat).sum::<f64>() / r,
                mean_incoherence: reps.iter().map(|x| x.incoherence_norm).sum::<f64>() / r,
                root_seed: seed,
            })
        })
        .collect()
}
