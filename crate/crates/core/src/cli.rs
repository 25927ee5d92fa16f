//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::altopt::{debias, fit, FitConfig, Solution};
use crate::dataio::{
    load_csv_with, load_dataset_csv, read_names, save_column_map, save_dataset_csv, write_dataset_csv,
    LoadOptions, PreprocessOptions,
};
use crate::diagnostics::{build_witness, check_assumptions, invexity_probe, lambda_spectrum};
use crate::error::{Error, Result};
use crate::experiment::{
    run_assumption_sweep,
    curve_series, run_gamma_sensitivity, run_real_data, run_recovery_experiment, samples_for,
    svg_line_chart, to_csv_string, ExperimentGrid, GammaRule, Series,
};
use crate::fairlasso::SolverConfig;
use crate::synthgen::{generate_dataset, make_ground_truth, Dataset, GenerativeConfig, GroundTruth};

#[derive(Debug, Parser)]
#[command(name = "fairsparse", version, about = "Sparse regression with a hidden binary bias attribute")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub s: usize,
    /// Sample count; overrides --beta.
    #[arg(long)]
    pub n: Option<usize>,
    /// Control parameter: n = round(10^beta * ln d).
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.15)]
    pub k: f64,
    /// Regularizer; defaults to 128*k*sqrt(ln d)/n.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 30)]
    pub runs: usize,
    /// Output directory; tables go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write SVG charts (requires --out).
    #[arg(long)]
    pub svg: bool,
}

impl Common {
    fn n(&self) -> usize {
        self.n.unwrap_or_else(|| samples_for(self.beta, self.d))
    }

    fn generative(&self) -> GenerativeConfig {
        GenerativeConfig {
            d: self.d,
            s: self.s,
            n: self.n(),
            gamma: self.gamma,
            k: self.k,
            seed: self.seed,
            ..GenerativeConfig::default()
        }
    }

    fn lambda_for(&self, d: usize, n: usize) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(l),
            None => SolverConfig {
                k: self.k,
                ..SolverConfig::default()
            }
            .lambda_default(d, n),
        }
    }

    fn synthetic(&self) -> Result<(GroundTruth, Dataset)> {
        let cfg = self.generative();
        let truth = make_ground_truth(&cfg)?;
        let data = generate_dataset(&truth, &cfg)?;
        Ok((truth, data))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic ground truth and dataset.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a dataset (CSV with y first) or a synthetic draw.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        max_rounds: usize,
    },
    /// Sample assumption diagnostics, optionally swept over several n.
    Assumptions {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sample sizes for a frequency sweep over --runs seeds.
        #[arg(long, value_delimiter = ',')]
        ns: Vec<usize>,
    },
    /// Primal-dual witness, spectrum of Lambda and the invexity probe on a synthetic draw.
    Witness {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Recovery curves over a (d, beta) grid.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "100")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,1.5,1.8,2.0,2.2")]
        betas: Vec<f64>,
    },
    /// Recovery under a misspecified gamma.
    GammaSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.2,1.0,1.5,1.75,2.0,2.25,2.5,4.0")]
        gammas: Vec<f64>,
    },
    /// Preprocess and fit a real dataset.
    Real {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Columns to drop before fitting.
        #[arg(long, value_delimiter = ',')]
        drop: Vec<String>,
        #[arg(long, default_value = ",")]
        delimiter: String,
        /// File with one column name per line, for header-less data.
        #[arg(long)]
        columns: Option<PathBuf>,
        /// Number of predictors to list.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Use --gamma instead of (max y - min y)/2.
        #[arg(long)]
        fixed_gamma: bool,
    },
    /// Subtract gamma*z from a response.
    Debias {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV with y first.
        #[arg(long)]
        data: PathBuf,
        /// Solution JSON providing z.
        #[arg(long)]
        solution: PathBuf,
    },
}

struct Sink<'a> {
    out: Option<&'a Path>,
}

impl Sink<'_> {
    fn new(out: Option<&Path>) -> Result<Sink<'_>> {
        if let Some(dir) = out {
            fs::create_dir_all(dir)?;
        }
        Ok(Sink { out })
    }

    /// Writes `text` to `<out>/<name>`, or stdout when no directory is set.
    fn emit(&self, name: &str, text: &str) -> Result<()> {
        match self.out {
            Some(dir) => fs::write(dir.join(name), text)?,
            None => {
                let mut so = std::io::stdout().lock();
                so.write_all(text.as_bytes())?;
                if !text.ends_with('\n') {
                    so.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    fn file(&self, name: &str) -> Option<PathBuf> {
        self.out.map(|d| d.join(name))
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn table<T: Serialize>(rows: &[T], format: Format) -> Result<String> {
    match format {
        Format::Csv => to_csv_string(rows),
        Format::Json => json(&rows),
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => synth(&common),
        Command::Fit {
            common,
            data,
            max_rounds,
        } => fit_cmd(&common, data.as_deref(), max_rounds),
        Command::Assumptions { common, ns } => assumptions(&common, &ns),
        Command::Witness { common, trials } => witness(&common, trials),
        Command::Experiment { common, dims, betas } => experiment(&common, dims, betas),
        Command::GammaSweep { common, gammas } => gamma_sweep(&common, &gammas),
        Command::Real {
            common,
            data,
            target,
            drop,
            delimiter,
            columns,
            top,
            fixed_gamma,
        } => real(&common, &data, &target, drop, &delimiter, columns.as_deref(), top, fixed_gamma),
        Command::Debias {
            common,
            data,
            solution,
        } => debias_cmd(&common, &data, &solution),
    }
}

fn synth(c: &Common) -> Result<()> {
    let (truth, data) = c.synthetic()?;
    let sink = Sink::new(c.out.as_deref())?;
    match sink.file("dataset.csv") {
        Some(path) => {
            save_dataset_csv(path, &data, None)?;
            sink.emit("truth.json", &json(&truth)?)?;
        }
        None => {
            let mut buf = Vec::new();
            write_dataset_csv(&mut buf, &data, None)?;
            sink.emit("dataset.csv", &String::from_utf8_lossy(&buf))?;
        }
    }
    Ok(())
}

fn load_or_synthesize(c: &Common, data: Option<&Path>) -> Result<(Dataset, Vec<String>)> {
    match data {
        Some(p) => load_dataset_csv(p),
        None => {
            let (_, d) = c.synthetic()?;
            let names = (0..d.d()).map(|j| format!("x{j}")).collect();
            Ok((d, names))
        }
    }
}

#[derive(Serialize)]
struct WeightRow<'a> {
    index: usize,
    name: &'a str,
    w: f64,
}

#[derive(Serialize)]
struct LabelRow {
    index: usize,
    z: f64,
}

fn fit_cmd(c: &Common, data: Option<&Path>, max_rounds: usize) -> Result<()> {
    let (ds, names) = load_or_synthesize(c, data)?;
    let lambda = c.lambda_for(ds.d(), ds.n())?;
    let cfg = FitConfig {
        max_rounds,
        ..FitConfig::new(c.gamma, lambda)
    };
    let sol = fit(&ds, &cfg)?;
    let sink = Sink::new(c.out.as_deref())?;
    match c.format {
        Format::Json => sink.emit("solution.json", &sol.to_json()?)?,
        Format::Csv => {
            let weights: Vec<WeightRow> = sol
                .w
                .iter()
                .enumerate()
                .map(|(index, &w)| WeightRow {
                    index,
                    name: &names[index],
                    w,
                })
                .collect();
            sink.emit("weights.csv", &to_csv_string(&weights)?)?;
            let labels: Vec<LabelRow> = sol
                .z
                .iter()
                .enumerate()
                .map(|(index, &z)| LabelRow { index, z })
                .collect();
            if c.out.is_some() {
                sink.emit("labels.csv", &to_csv_string(&labels)?)?;
                sink.emit("solution.json", &sol.to_json()?)?;
            }
        }
    }
    if !sol.converged {
        eprintln!(
            "warning: no label fixpoint after {} rounds",
            sol.iterations
        );
    }
    Ok(())
}

fn assumptions(c: &Common, ns: &[usize]) -> Result<()> {
    let sink = Sink::new(c.out.as_deref())?;
    if ns.is_empty() {
        let (truth, data) = c.synthetic()?;
        let rep = check_assumptions(&data.x, &truth.support)?;
        return sink.emit("assumptions.json", &json(&rep)?);
    }
    let rows = run_assumption_sweep(c.d, c.s, ns, c.runs, c.seed)?;
    sink.emit(&format!("assumptions.{}", ext(c.format)), &table(&rows, c.format)?)?;
    if c.svg {
        if let Some(path) = sink.file("assumptions.svg") {
            let series = vec![
                Series {
                    label: "positive definiteness".into(),
                    points: rows.iter().map(|r| (r.n as f64, r.a1_rate)).collect(),
                },
                Series {
                    label: "mutual incoherence".into(),
                    points: rows.iter().map(|r| (r.n as f64, r.a2_rate)).collect(),
                },
            ];
            fs::write(path, svg_line_chart(&format!("d = {}, s = {}", c.d, c.s), "n", "fraction holding", &series))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct WitnessSummary {
    d: usize,
    n: usize,
    s: usize,
    gamma: f64,
    lambda: f64,
    stationarity_residual: f64,
    g_offsupport_max: f64,
    lambda_null_residual: f64,
    lambda_eig2: f64,
    complementary_slackness: f64,
    delta_norm: Option<f64>,
    delta_bound: f64,
    c_min_hat: f64,
    spectrum: crate::diagnostics::LambdaSpectrum,
    invexity: crate::diagnostics::InvexityReport,
}

fn witness(c: &Common, trials: usize) -> Result<()> {
    let (truth, data) = c.synthetic()?;
    let lambda = c.lambda_for(data.d(), data.n())?;
    let w = build_witness(
        &data,
        &truth.z_star,
        &truth.support,
        c.gamma,
        &SolverConfig::with_lambda(lambda),
        Some(&truth.w_star),
    )?;
    let spectrum = lambda_spectrum(&w);
    // the invexity probe works with dense (n+1)² matrices; keep it small
    let small = Dataset::new(data.x.select_rows(&(0..data.n().min(10)).collect::<Vec<_>>()), data.y[..data.n().min(10)].to_vec())?;
    let invexity = invexity_probe(&small, c.gamma, trials, c.seed)?;
    let summary = WitnessSummary {
        d: data.d(),
        n: data.n(),
        s: truth.support.len(),
        gamma: c.gamma,
        lambda,
        stationarity_residual: w.stationarity_residual,
        g_offsupport_max: w.g_offsupport_max,
        lambda_null_residual: w.lambda_null_residual,
        lambda_eig2: w.lambda_eig2,
        complementary_slackness: w.complementary_slackness,
        delta_norm: w.delta_norm,
        delta_bound: w.delta_bound,
        c_min_hat: w.c_min_hat,
        spectrum,
        invexity,
    };
    Sink::new(c.out.as_deref())?.emit("witness.json", &json(&summary)?)
}

fn grid_from(c: &Common, dims: Vec<usize>, betas: Vec<f64>) -> ExperimentGrid {
    let mut g = ExperimentGrid::protocol_defaults(dims, betas, c.seed);
    g.runs = c.runs;
    g.generative.s = c.s;
    g.generative.gamma = c.gamma;
    g.generative.k = c.k;
    g.fit.gamma = c.gamma;
    g.fit.solver.k = c.k;
    g.lambda = c.lambda;
    g
}

fn experiment(c: &Common, dims: Vec<usize>, betas: Vec<f64>) -> Result<()> {
    let grid = grid_from(c, dims, betas);
    let out = run_recovery_experiment(&grid)?;
    let sink = Sink::new(c.out.as_deref())?;
    let e = ext(c.format);
    sink.emit(&format!("curve.{e}"), &table(&out.curve, c.format)?)?;
    if c.out.is_some() {
        sink.emit(&format!("runs.{e}"), &table(&out.runs, c.format)?)?;
    }
    if c.svg {
        if let (Some(j), Some(z)) = (sink.file("jaccard.svg"), sink.file("exact_z.svg")) {
            fs::write(j, svg_line_chart("Support recovery", "beta", "mean Jaccard index", &curve_series(&out.curve, |p| p.mean_jaccard)))?;
            fs::write(z, svg_line_chart("Hidden attribute recovery", "beta", "exact recovery rate", &curve_series(&out.curve, |p| p.exact_z_rate)))?;
        }
    }
    Ok(())
}

fn gamma_sweep(c: &Common, gammas: &[f64]) -> Result<()> {
    let grid = grid_from(c, vec![c.d], vec![c.beta]);
    let grid = match c.n {
        Some(n) => {
            // express a fixed n through beta so the harness reproduces it
            let beta = (n as f64 / (c.d as f64).ln()).log10();
            ExperimentGrid { betas: vec![beta], ..grid }
        }
        None => grid,
    };
    let (rows, runs) = run_gamma_sensitivity(&grid, gammas)?;
    let sink = Sink::new(c.out.as_deref())?;
    let e = ext(c.format);
    sink.emit(&format!("gamma.{e}"), &table(&rows, c.format)?)?;
    if c.out.is_some() {
        sink.emit(&format!("gamma_runs.{e}"), &table(&runs, c.format)?)?;
    }
    if c.svg {
        if let Some(p) = sink.file("gamma.svg") {
            let series = vec![
                Series {
                    label: "Jaccard".into(),
                    points: rows.iter().map(|r| (r.gamma_hat, r.mean_jaccard)).collect(),
                },
                Series {
                    label: "exact z".into(),
                    points: rows.iter().map(|r| (r.gamma_hat, r.exact_z_rate)).collect(),
                },
            ];
            fs::write(p, svg_line_chart("Misspecified gamma", "gamma estimate", "rate", &series))?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn real(
    c: &Common,
    data: &Path,
    target: &str,
    drop: Vec<String>,
    delimiter: &str,
    columns: Option<&Path>,
    top: usize,
    fixed_gamma: bool,
) -> Result<()> {
    let delim = match delimiter.as_bytes() {
        [b] => *b,
        b"\\t" | b"tab" => b'\t',
        _ => return Err(Error::Config(format!("delimiter {delimiter:?} must be one byte"))),
    };
    let load = LoadOptions {
        delimiter: delim,
        names: columns.map(read_names).transpose()?,
    };
    let table = load_csv_with(data, &load)?;
    let mut opts = PreprocessOptions::new(target);
    opts.drop_columns = drop;
    let lambda = c.lambda.unwrap_or(0.15);
    let rule = if fixed_gamma {
        GammaRule::Fixed(c.gamma)
    } else {
        GammaRule::HalfRange
    };
    let mut report = run_real_data(&table, &opts, lambda, rule)?;
    report.top_predictors.truncate(top);
    let sink = Sink::new(c.out.as_deref())?;
    sink.emit("report.json", &json(&report)?)?;
    if let Some(prepared) = &report.prepared {
        for w in &prepared.warnings {
            eprintln!("warning: {w}");
        }
        if let Some(p) = sink.file("dataset.csv") {
            save_dataset_csv(p, &prepared.dataset, Some(&prepared.columns.columns))?;
        }
        if let Some(p) = sink.file("columns.json") {
            save_column_map(p, &prepared.columns)?;
        }
    }
    if c.out.is_some() {
        let rows: Vec<DebiasRow> = debiased_rows(&report.solution, &report.debiased);
        sink.emit("debiased.csv", &to_csv_string(&rows)?)?;
        sink.emit("solution.json", &report.solution.to_json()?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DebiasRow {
    index: usize,
    z: f64,
    y_debiased: f64,
}

fn debiased_rows(sol: &Solution, debiased: &[f64]) -> Vec<DebiasRow> {
    sol.z
        .iter()
        .zip(debiased)
        .enumerate()
        .map(|(index, (&z, &y))| DebiasRow { index, z, y_debiased: y })
        .collect()
}

fn debias_cmd(c: &Common, data: &Path, solution: &Path) -> Result<()> {
    let (ds, _) = load_dataset_csv(data)?;
    let sol = Solution::from_json(&fs::read_to_string(solution)?)?;
    let deb = debias(&ds.y, &sol.z, c.gamma)?;
    let rows = debiased_rows(&sol, &deb);
    Sink::new(c.out.as_deref())?.emit(&format!("debiased.{}", ext(c.format)), &table(&rows, c.format)?)
}
