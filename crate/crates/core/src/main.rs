//! Command-line entry point: wires JSON configs to the library modules and
//! emits reproducible JSON/CSV reports with a run manifest on stderr.

use clap::{Args, Parser, Subcommand};
use dioph::badapprox::{
    bad_constants_weighted, golden_theta, improvability_experiment, liouville_designed_dips,
    liouville_theta_f64, log_grid, systole_trace, CertifiedSystem, WeightedProfile,
};
use dioph::error::Error;
use dioph::experiments::{
    check_series_equivalence, classify_series, fixed_matrix_experiment, zero_one_experiment,
    SeriesSpec,
};
use dioph::geometry::{transference_selftest, N_MAX_DEFAULT};
use dioph::linalg::Mat;
use dioph::oracle::{dirichlet_on_window, OracleParams, Verdict};
use dioph::report::RunManifest;
use dioph::weights::{
    certify_quasimultiplicative, changing_weights, ApproxConfig, ApproxFunction, WeightConfig,
    WeightSystem, WeightSystemConfig,
};
use serde::Deserialize;
use serde_json::json;
use std::io::Write;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "dioph",
    version,
    about = "Weighted uniform Diophantine approximation toolkit"
)]
struct Cli {
    /// Worker threads for the data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the run manifest to this path instead of stderr.
    #[arg(long, global = true)]
    manifest: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide g-Dirichlet solvability of a pair on a finite window.
    Check(CheckArgs),
    /// Monte Carlo zero-one experiment over pairs or a fixed-matrix slice.
    Zeroone(ZeroOneArgs),
    /// Lattice transference selftests with the explicit constants.
    Transference {
        #[command(subcommand)]
        which: TransferenceCmd,
    },
    /// Flow-systole trace for a matrix.
    Systole(SystoleArgs),
    /// Resonance-set containment experiment for Dirichlet improvability.
    Improvability(ImprovabilityArgs),
    /// Weight-function utilities: certification, constants, CSV emitters.
    Weights {
        #[command(subcommand)]
        which: WeightsCmd,
    },
    /// Series classifiers for the zero-one laws.
    Series(SeriesArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Matrix: inline CSV (rows ';', entries ','), `file:PATH`, or `golden`.
    #[arg(long)]
    theta: String,
    /// Shift vector, comma separated (defaults to zero).
    #[arg(long)]
    eta: Option<String>,
    /// Weight system config (JSON file path or inline JSON).
    #[arg(long)]
    weights: Option<String>,
    /// Approximating function config (JSON file path or inline JSON).
    #[arg(long)]
    g: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    tmin: f64,
    #[arg(long)]
    tmax: f64,
    /// Multiply all component thresholds by this constant.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = N_MAX_DEFAULT)]
    n_max: u64,
    /// JSON report destination (`-` for stdout).
    #[arg(long)]
    json: Option<String>,
    /// Exit 1 unless the verdict is dirichlet_on_window.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct ZeroOneArgs {
    /// JSON config: {"weights":..., "g":..., "samples":N, "t_min":...,
    /// "schedule":[...], optional "theta" matrix for slice experiments,
    /// optional "component_scale"}.
    #[arg(long)]
    config: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = N_MAX_DEFAULT)]
    n_max: u64,
    /// CSV destination with columns t_max,fraction,n_budget_errors.
    #[arg(long)]
    csv: Option<String>,
    #[arg(long)]
    json: Option<String>,
}

#[derive(Subcommand)]
enum TransferenceCmd {
    Selftest(TransferenceArgs),
}

#[derive(Args)]
struct TransferenceArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 20)]
    gamma_samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = N_MAX_DEFAULT)]
    n_max: u64,
    #[arg(long)]
    json: Option<String>,
    /// Exit 1 on any violation.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct SystoleArgs {
    /// `golden`, `liouville[:terms]`, `file:PATH`, or inline CSV.
    #[arg(long)]
    theta: String,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    tmin: f64,
    #[arg(long, default_value_t = 1e6)]
    tmax: f64,
    #[arg(long, default_value_t = 1.05)]
    grid_factor: f64,
    #[arg(long, default_value_t = N_MAX_DEFAULT)]
    n_max: u64,
    /// CSV destination with columns T,systole,running_min.
    #[arg(long)]
    csv: Option<String>,
    #[arg(long)]
    json: Option<String>,
}

#[derive(Args)]
struct ImprovabilityArgs {
    #[arg(long)]
    theta: String,
    #[arg(long)]
    weights: Option<String>,
    /// Approximating function f with witnesses for theta transposed.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 200)]
    samples: u64,
    #[arg(long, default_value_t = 1.0)]
    tmin: f64,
    #[arg(long, default_value_t = 2000.0)]
    tmax: f64,
    #[arg(long, default_value_t = 10_000.0)]
    y_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = N_MAX_DEFAULT)]
    n_max: u64,
    #[arg(long)]
    json: Option<String>,
    /// Exit 1 on any containment counterexample.
    #[arg(long)]
    assert: bool,
}

#[derive(Subcommand)]
enum WeightsCmd {
    /// Emit a named example dataset as CSV.
    Emit(WeightsEmitArgs),
    /// Range-certify quasimultiplicativity of a weight function.
    Certify(WeightsCertifyArgs),
    /// Explicit weighted transference constants K(b), kappa(b).
    Constants(WeightsConstantsArgs),
}

#[derive(Args)]
struct WeightsEmitArgs {
    /// Currently `changing-weights` (the oscillating log-slope pair).
    #[arg(long)]
    example: String,
    #[arg(long)]
    tmax: f64,
    #[arg(long, default_value_t = 2000)]
    rows: usize,
    #[arg(long)]
    csv: Option<String>,
}

#[derive(Args)]
struct WeightsCertifyArgs {
    /// Weight function config (JSON file path or inline JSON).
    #[arg(long)]
    weight: String,
    #[arg(long)]
    base: f64,
    #[arg(long, default_value_t = 1)]
    kmin: i64,
    #[arg(long, default_value_t = 40)]
    kmax: i64,
    #[arg(long)]
    json: Option<String>,
}

#[derive(Args)]
struct WeightsConstantsArgs {
    /// Comma-separated rho weights (must sum to 1).
    #[arg(long)]
    rho: String,
    /// Comma-separated sigma weights (must sum to 1).
    #[arg(long)]
    sigma: String,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long)]
    json: Option<String>,
}

#[derive(Args)]
struct SeriesArgs {
    /// JSON config: {"weights":..., "g":..., optional "f", "block_base",
    /// "block_count"}; with "f" present both series are classified.
    #[arg(long)]
    config: String,
    #[arg(long)]
    json: Option<String>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version with success
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(2);
            }
            e.print().ok();
            std::process::exit(0);
        }
    };
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .ok();
    }
    let start = Instant::now();
    match run(&cli, start) {
        Ok(code) => std::process::exit(code),
        Err(Error::Budget(msg)) => {
            eprintln!("budget error: {msg}");
            std::process::exit(3);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}

struct Outputs {
    written: Vec<String>,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            written: Vec::new(),
        }
    }

    fn write(&mut self, dest: &Option<String>, content: &str) -> dioph::Result<()> {
        if let Some(dest) = dest {
            if dest == "-" {
                print!("{content}");
                if !content.ends_with('\n') {
                    println!();
                }
                self.written.push("stdout".into());
            } else {
                std::fs::write(dest, content)
                    .map_err(|e| Error::Config(format!("cannot write {dest}: {e}")))?;
                self.written.push(dest.clone());
            }
        }
        Ok(())
    }
}

fn emit_manifest(
    cli: &Cli,
    mut manifest: RunManifest,
    outputs: Outputs,
    start: Instant,
) -> dioph::Result<()> {
    manifest.outputs = outputs.written;
    manifest.wall_time_ms = start.elapsed().as_millis();
    let text = serde_json::to_string(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    match &cli.manifest {
        Some(path) => std::fs::write(path, &text)
            .map_err(|e| Error::Config(format!("cannot write manifest {path}: {e}")))?,
        None => {
            let mut err = std::io::stderr().lock();
            writeln!(err, "{text}").ok();
        }
    }
    Ok(())
}

fn read_json_arg(arg: &str) -> dioph::Result<serde_json::Value> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg)
            .map_err(|e| Error::Config(format!("cannot read {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad JSON in {arg}: {e}")))
}

fn parse_struct<T: for<'de> Deserialize<'de>>(arg: &str) -> dioph::Result<T> {
    let value = read_json_arg(arg)?;
    serde_json::from_value(value).map_err(|e| Error::Config(format!("bad config {arg}: {e}")))
}

fn parse_theta(spec: &str) -> dioph::Result<Mat> {
    if spec == "golden" {
        return Mat::from_rows(&[vec![golden_theta()]]);
    }
    if let Some(rest) = spec.strip_prefix("liouville") {
        let terms: u32 = rest
            .strip_prefix(':')
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Config("bad liouville terms".into()))
            })
            .transpose()?
            .unwrap_or(3);
        return Mat::from_rows(&[vec![liouville_theta_f64(terms)]]);
    }
    let text = if let Some(path) = spec.strip_prefix("file:") {
        std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?
    } else {
        spec.to_string()
    };
    let rows: Vec<Vec<f64>> = text
        .trim()
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad matrix entry '{x}'")))
                })
                .collect::<dioph::Result<Vec<f64>>>()
        })
        .collect::<dioph::Result<Vec<_>>>()?;
    Mat::from_rows(&rows)
}

fn parse_vector(spec: &str) -> dioph::Result<Vec<f64>> {
    spec.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad vector entry '{x}'")))
        })
        .collect()
}

fn resolve_system(weights: &Option<String>, n: usize, m: usize) -> dioph::Result<WeightSystem> {
    match weights {
        Some(spec) => {
            let cfg: WeightSystemConfig = parse_struct(spec)?;
            let ws = cfg.build()?;
            if ws.n() != n || ws.m() != m {
                return Err(Error::Config(format!(
                    "weight system is {}x{} but theta is {}x{}",
                    ws.n(),
                    ws.m(),
                    n,
                    m
                )));
            }
            Ok(ws)
        }
        None => WeightSystem::equal_power_weights(n, m),
    }
}

fn resolve_g(g: &Option<String>, ws: &WeightSystem) -> dioph::Result<ApproxFunction> {
    match g {
        Some(spec) => {
            let cfg: ApproxConfig = parse_struct(spec)?;
            cfg.build(ws)
        }
        None => Ok(ws.dirichlet_exponent()),
    }
}

#[derive(Deserialize)]
struct ZeroOneConfig {
    weights: WeightSystemConfig,
    g: ApproxConfig,
    samples: u64,
    #[serde(default = "default_tmin")]
    t_min: f64,
    schedule: Vec<f64>,
    #[serde(default)]
    theta: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_scale")]
    component_scale: f64,
}

fn default_tmin() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct SeriesConfig {
    weights: WeightSystemConfig,
    g: ApproxConfig,
    #[serde(default)]
    f: Option<ApproxConfig>,
    #[serde(default = "default_block_base")]
    block_base: f64,
    #[serde(default = "default_block_count")]
    block_count: usize,
}

fn default_block_base() -> f64 {
    2.0
}
fn default_block_count() -> usize {
    40
}

fn run(cli: &Cli, start: Instant) -> dioph::Result<i32> {
    let mut outputs = Outputs::new();
    match &cli.command {
        Command::Check(args) => {
            let theta = parse_theta(&args.theta)?;
            let eta = match &args.eta {
                Some(e) => parse_vector(e)?,
                None => vec![0.0; theta.rows()],
            };
            let ws = resolve_system(&args.weights, theta.rows(), theta.cols())?;
            let g = resolve_g(&args.g, &ws)?;
            let pair = dioph::geometry::AffinePair::new(theta, eta)?;
            let params = OracleParams {
                n_max: args.n_max,
                component_scale: args.scale,
                keep_witnesses: true,
            };
            let report = dirichlet_on_window(&pair, &ws, &g, args.tmin, args.tmax, &params)?;
            let ok = report.verdict == Verdict::DirichletOnWindow;
            outputs.write(&args.json, &serde_json::to_string_pretty(&report).unwrap())?;
            let manifest = RunManifest::new(
                "check",
                json!({
                    "theta": args.theta, "eta": args.eta, "weights": args.weights,
                    "g": args.g, "tmin": args.tmin, "tmax": args.tmax,
                    "scale": args.scale, "n_max": args.n_max,
                }),
                None,
            );
            emit_manifest(cli, manifest, outputs, start)?;
            Ok(if args.assert && !ok { 1 } else { 0 })
        }
        Command::Zeroone(args) => {
            let cfg: ZeroOneConfig = parse_struct(&args.config)?;
            let ws = cfg.weights.build()?;
            let g = cfg.g.build(&ws)?;
            let estimate = match &cfg.theta {
                Some(rows) => {
                    let theta = Mat::from_rows(rows)?;
                    fixed_matrix_experiment(
                        &theta,
                        &ws,
                        &g,
                        cfg.samples,
                        cfg.t_min,
                        &cfg.schedule,
                        args.seed,
                        args.n_max,
                        cfg.component_scale,
                    )?
                }
                None => zero_one_experiment(
                    &ws,
                    &g,
                    cfg.samples,
                    cfg.t_min,
                    &cfg.schedule,
                    args.seed,
                    args.n_max,
                )?,
            };
            let mut csv = String::from("t_max,fraction,n_budget_errors\n");
            for (t, f) in estimate.schedule.iter().zip(&estimate.fractions) {
                csv.push_str(&format!("{},{},{}\n", t, f, estimate.budget_errors));
            }
            outputs.write(&args.csv, &csv)?;
            outputs.write(
                &args.json,
                &serde_json::to_string_pretty(&estimate).unwrap(),
            )?;
            let manifest =
                RunManifest::new("zeroone", read_json_arg(&args.config)?, Some(args.seed));
            emit_manifest(cli, manifest, outputs, start)?;
            Ok(0)
        }
        Command::Transference { which } => {
            let TransferenceCmd::Selftest(args) = which;
            let report = transference_selftest(
                args.dim,
                args.trials,
                args.gamma_samples,
                args.seed,
                args.n_max,
            )?;
            let ok = report.violations_part1 == 0 && report.violations_part2 == 0;
            outputs.write(&args.json, &serde_json::to_string_pretty(&report).unwrap())?;
            if args.json.is_none() {
                println!("{}", serde_json::to_string(&report).unwrap());
            }
            let manifest = RunManifest::new(
                "transference",
                json!({
                    "dim": args.dim, "trials": args.trials,
                    "gamma_samples": args.gamma_samples, "n_max": args.n_max,
                }),
                Some(args.seed),
            );
            emit_manifest(cli, manifest, outputs, start)?;
            Ok(if args.assert && !ok { 1 } else { 0 })
        }
        Command::Systole(args) => {
            if args.theta.starts_with("liouville") {
                // exact-rational designed scales; the float grid underflows here
                let terms: u32 = args
                    .theta
                    .strip_prefix("liouville:")
                    .map(|t| t.parse().unwrap_or(5))
                    .unwrap_or(5);
                let ks: Vec<u32> = (2..terms).collect();
                let dips = liouville_designed_dips(terms, &ks)?;
                let mut csv = String::from("T,systole,running_min\n");
                let mut run_min = f64::INFINITY;
                for d in &dips {
                    run_min = run_min.min(d.systole_upper);
                    csv.push_str(&format!(
                        "1e{},{},{}\n",
                        d.t_exponent, d.systole_upper, run_min
                    ));
                }
                outputs.write(&args.csv, &csv)?;
                outputs.write(&args.json, &serde_json::to_string_pretty(&dips).unwrap())?;
                if args.csv.is_none() && args.json.is_none() {
                    println!("{}", serde_json::to_string(&dips).unwrap());
                }
            } else {
                let theta = parse_theta(&args.theta)?;
                let ws = resolve_system(&args.weights, theta.rows(), theta.cols())?;
                let grid = log_grid(args.tmin, args.tmax, args.grid_factor)?;
                let trace = systole_trace(&theta, &ws, &grid, args.n_max)?;
                let mut csv = String::from("T,systole,running_min\n");
                for i in 0..trace.times.len() {
                    csv.push_str(&format!(
                        "{},{},{}\n",
                        trace.times[i], trace.systole[i], trace.running_min[i]
                    ));
                }
                outputs.write(&args.csv, &csv)?;
                outputs.write(&args.json, &serde_json::to_string_pretty(&trace).unwrap())?;
                if args.csv.is_none() && args.json.is_none() {
                    println!(
                        "running_min over [{}, {}] = {}",
                        args.tmin,
                        args.tmax,
                        trace.running_min.last().unwrap()
                    );
                }
            }
            let manifest = RunManifest::new(
                "systole",
                json!({
                    "theta": args.theta, "weights": args.weights, "tmin": args.tmin,
                    "tmax": args.tmax, "grid_factor": args.grid_factor, "n_max": args.n_max,
                }),
                None,
            );
            emit_manifest(cli, manifest, outputs, start)?;
            Ok(0)
        }
        Command::Improvability(args) => {
            let theta = parse_theta(&args.theta)?;
            let ws = resolve_system(&args.weights, theta.rows(), theta.cols())?;
            let d = ws.d();
            let delta = args.delta.unwrap_or(1.0 / (4.0 * d as f64));
            let cs = CertifiedSystem::certify(&ws, 2.0, -40, 40)?;
            let f = match &args.f {
                Some(spec) => {
                    let cfg: ApproxConfig = parse_struct(spec)?;
                    cfg.build(&ws)?
                }
                None => ApproxFunction::f1(),
            };
            let report = improvability_experiment(
                &theta,
                &cs,
                &f,
                delta,
                args.samples,
                args.tmin,
                args.tmax,
                args.y_max,
                args.seed,
                args.n_max,
            )?;
            let ok = report.counterexamples == 0;
            outputs.write(&args.json, &serde_json::to_string_pretty(&report).unwrap())?;
            if args.json.is_none() {
                println!("{}", serde_json::to_string(&report).unwrap());
            }
            let manifest = RunManifest::new(
                "improvability",
                json!({
                    "theta": args.theta, "weights": args.weights, "delta": delta,
                    "samples": args.samples, "tmin": args.tmin, "tmax": args.tmax,
                    "y_max": args.y_max, "n_max": args.n_max,
                }),
                Some(args.seed),
            );
            emit_manifest(cli, manifest, outputs, start)?;
            Ok(if args.assert && !ok { 1 } else { 0 })
        }
        Command::Weights { which } => match which {
            WeightsCmd::Emit(args) => {
                if args.example != "changing-weights" {
                    return Err(Error::Config(format!(
                        "unknown example '{}'; available: changing-weights",
                        args.example
                    )));
                }
                let csv = changing_weights::emit_csv(args.tmax, args.rows)?;
                outputs.write(&args.csv, &csv)?;
                if args.csv.is_none() {
                    print!("{csv}");
                    outputs.written.push("stdout".into());
                }
                let manifest = RunManifest::new(
                    "weights emit",
                    json!({"example": args.example, "tmax": args.tmax, "rows": args.rows}),
                    None,
                );
                emit_manifest(cli, manifest, outputs, start)?;
                Ok(0)
            }
            WeightsCmd::Certify(args) => {
                let cfg: WeightConfig = parse_struct(&args.weight)?;
                let h = cfg.build()?;
                let cert = certify_quasimultiplicative(&h, args.base, args.kmin, args.kmax)?;
                outputs.write(&args.json, &serde_json::to_string_pretty(&cert).unwrap())?;
                if args.json.is_none() {
                    println!("{}", serde_json::to_string(&cert).unwrap());
                }
                let manifest = RunManifest::new(
                    "weights certify",
                    json!({
                        "weight": args.weight, "base": args.base,
                        "kmin": args.kmin, "kmax": args.kmax,
                    }),
                    None,
                );
                emit_manifest(cli, manifest, outputs, start)?;
                Ok(0)
            }
            WeightsCmd::Constants(args) => {
                let rho = parse_vector(&args.rho)?;
                let sigma = parse_vector(&args.sigma)?;
                let profile = WeightedProfile::new(rho, sigma)?;
                let constants = bad_constants_weighted(&profile, args.b)?;
                outputs.write(
                    &args.json,
                    &serde_json::to_string_pretty(&constants).unwrap(),
                )?;
                if args.json.is_none() {
                    println!("{}", serde_json::to_string(&constants).unwrap());
                }
                let manifest = RunManifest::new(
                    "weights constants",
                    json!({"rho": args.rho, "sigma": args.sigma, "b": args.b}),
                    None,
                );
                emit_manifest(cli, manifest, outputs, start)?;
                Ok(0)
            }
        },
        Command::Series(args) => {
            let cfg: SeriesConfig = parse_struct(&args.config)?;
            let ws = cfg.weights.build()?;
            let g = cfg.g.build(&ws)?;
            let value = match &cfg.f {
                Some(fcfg) => {
                    let f = fcfg.build(&ws)?;
                    let report =
                        check_series_equivalence(&ws, &f, &g, cfg.block_base, cfg.block_count)?;
                    serde_json::to_value(&report).unwrap()
                }
                None => {
                    let spec = SeriesSpec::dirichlet_sum(ws.clone(), g);
                    let report = classify_series(&spec, cfg.block_base, cfg.block_count)?;
                    serde_json::to_value(&report).unwrap()
                }
            };
            outputs.write(&args.json, &serde_json::to_string_pretty(&value).unwrap())?;
            if args.json.is_none() {
                println!("{}", serde_json::to_string(&value).unwrap());
            }
            let manifest = RunManifest::new("series", read_json_arg(&args.config)?, None);
            emit_manifest(cli, manifest, outputs, start)?;
            Ok(0)
        }
    }
}
