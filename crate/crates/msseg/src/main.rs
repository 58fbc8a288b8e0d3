//! `msseg` command line: calibration, fitting, feature inference, oracle
//! diagnostics, and the simulation experiments.

use clap::{Args, Parser, Subcommand};
use msseg::error::{Error, Result};
use msseg::harness::{self, materialize_signal, ExperimentConfig, ExperimentKind, OutputFormat};
use msseg::inference::{feature_report, ConfidenceParams};
use msseg::intervals::{IntervalSystem, SystemKind};
use msseg::multiscale::{simulate_quantile, PenaltyKind, ThresholdRule};
use msseg::oracle::{approx_error_curve, equal_partition, oracle_risk};
use msseg::signals::Observation;
use msseg::solver::{fit, Estimate};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "msseg",
    about = "Multiscale change-point segmentation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Args)]
struct CommonFit {
    /// Scale penalty family.
    #[arg(long, default_value = "smuce", value_parser = parse_penalty)]
    penalty: PenaltyKind,
    /// Interval system.
    #[arg(long, default_value = "dyadic-length", value_parser = parse_system)]
    intervals: SystemKind,
    /// Base seed for Monte Carlo calibration.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the null quantile of the multiscale statistic.
    Calibrate {
        #[command(flatten)]
        common: CommonFit,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        /// Monte Carlo replicates.
        #[arg(long, default_value_t = 10_000)]
        mc: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the jump-minimal segmentation to a CSV series.
    Fit {
        #[command(flatten)]
        common: CommonFit,
        /// Input CSV with header `index,value`.
        #[arg(long)]
        input: PathBuf,
        /// Known noise scale of the observations.
        #[arg(long)]
        sigma: f64,
        /// universal:a=<x> | quantile:beta=<x>[,mc=<k>] | value:<x>
        #[arg(long, default_value = "quantile:beta=0.1,mc=10000")]
        threshold: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Feature inference on a fitted estimate.
    Features {
        /// Estimate JSON produced by `msseg fit`.
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        /// Window in cells, or `auto` for floor(log n).
        #[arg(long, default_value = "auto")]
        m: String,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Optional gnuplot-ready annotation table (location, type, significant).
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Best piecewise-constant approximation error curve.
    Oracle {
        #[arg(long)]
        signal: String,
        #[arg(long)]
        n: usize,
        /// Largest jump budget of the curve.
        #[arg(long, default_value_t = 64)]
        curve: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Risk decomposition of the oracle segmentation on a partition.
    OracleRisk {
        #[arg(long)]
        signal: String,
        /// `equal:m=<k>` or comma-separated interior breakpoints.
        #[arg(long)]
        partition: String,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Threshold-stability experiment on the Olshen signal.
    Stability(ExperimentArgs),
    /// Noise-level sweep for a named signal.
    NoiseSweep(ExperimentArgs),
    /// Sine-distorted Olshen signal experiment.
    Robustness(ExperimentArgs),
    /// Empirical convergence rates for blocks or heavisine.
    Convergence(ExperimentArgs),
}

#[derive(Clone, Args)]
struct ExperimentArgs {
    /// Experiment manifest file (flat key = value); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    signal: Option<String>,
    /// Sample counts, comma separated.
    #[arg(long)]
    n: Option<String>,
    /// Signal-to-noise ratios, comma separated.
    #[arg(long)]
    snr: Option<String>,
    /// Significance levels, comma separated.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, value_parser = parse_penalty)]
    penalty: Option<PenaltyKind>,
    #[arg(long, value_parser = parse_system)]
    intervals: Option<SystemKind>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Monte Carlo replicates for threshold calibration.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sine distortion frequency factor.
    #[arg(long)]
    a: Option<f64>,
    /// Sine distortion amplitude factor.
    #[arg(long)]
    b: Option<f64>,
    /// Extra L^p losses to record, comma separated.
    #[arg(long)]
    lp: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
}

fn parse_penalty(s: &str) -> std::result::Result<PenaltyKind, String> {
    PenaltyKind::parse(s).ok_or_else(|| format!("unknown penalty `{s}`"))
}

fn parse_system(s: &str) -> std::result::Result<SystemKind, String> {
    SystemKind::parse(s).ok_or_else(|| format!("unknown interval system `{s}`"))
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    OutputFormat::parse(s).ok_or_else(|| format!("unknown format `{s}`"))
}

fn parse_grid<T: std::str::FromStr>(value: &str, what: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim().parse::<T>().map_err(|_| Error::Parse {
                what: what.to_string(),
                detail: format!("bad entry `{v}`"),
            })
        })
        .collect()
}

impl ExperimentArgs {
    fn into_config(self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let mut cfg = ExperimentConfig::from_file_string(&text)?;
                cfg.experiment = kind;
                cfg
            }
            None => {
                let mut cfg = ExperimentConfig::new(kind);
                if kind == ExperimentKind::Convergence {
                    cfg.signal = "blocks".into();
                    cfg.n_grid = vec![1023, 2046, 4092, 8184];
                    cfg.snr_grid = vec![2.5];
                    cfg.replicates = 20;
                }
                cfg
            }
        };
        if let Some(v) = self.signal {
            cfg.signal = v;
        }
        if let Some(v) = &self.n {
            cfg.n_grid = parse_grid(v, "--n")?;
        }
        if let Some(v) = &self.snr {
            cfg.snr_grid = parse_grid(v, "--snr")?;
        }
        if let Some(v) = &self.beta {
            cfg.beta_grid = parse_grid(v, "--beta")?;
        }
        if let Some(v) = self.penalty {
            cfg.penalty = v;
        }
        if let Some(v) = self.intervals {
            cfg.intervals = v;
        }
        if let Some(v) = self.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = self.mc {
            cfg.n_mc = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.a {
            cfg.distortion_a = v;
        }
        if let Some(v) = self.b {
            cfg.distortion_b = v;
        }
        if let Some(v) = &self.lp {
            cfg.lp = parse_grid(v, "--lp")?;
        }
        if let Some(v) = self.output {
            cfg.output = Some(v);
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        // the full system on large grids is quadratic in memory and time
        if cfg.intervals == SystemKind::Full && cfg.n_grid.iter().any(|&n| n > 2000) {
            return Err(Error::InvalidConfig(
                "the full interval system is limited to n <= 2000 in experiments; \
                 use --intervals dyadic-length"
                    .into(),
            ));
        }
        Ok(cfg)
    }
}

fn read_observation_csv(path: &Path, sigma: f64) -> Result<Observation> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Observation::from_csv(&text, sigma)
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn run_experiment(
    kind: ExperimentKind,
    args: ExperimentArgs,
    driver: fn(&ExperimentConfig) -> Result<msseg::harness::ExperimentResult>,
) -> Result<()> {
    let cfg = args.into_config(kind)?;
    let result = driver(&cfg)?;
    let text = harness::render(&result, cfg.format)?;
    write_or_print(cfg.output.as_deref(), &text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate {
            common,
            n,
            sigma,
            beta,
            mc,
            output,
        } => {
            let system = IntervalSystem::new(common.intervals, n);
            let cal = simulate_quantile(beta, n, &system, common.penalty, sigma, mc, common.seed)?;
            let mut text = serde_json::to_string_pretty(&cal)?;
            text.push('\n');
            write_or_print(output.as_deref(), &text)
        }
        Command::Fit {
            common,
            input,
            sigma,
            threshold,
            output,
        } => {
            let obs = read_observation_csv(&input, sigma)?;
            let rule = ThresholdRule::parse(&threshold, common.seed)?;
            let system = IntervalSystem::new(common.intervals, obs.n);
            let (eta, _cal) = rule.resolve(obs.n, &system, common.penalty, sigma)?;
            let mut est = fit(&obs, &system, common.penalty, eta)?;
            est.meta.threshold = rule.to_string();
            let mut text = serde_json::to_string_pretty(&est)?;
            text.push('\n');
            write_or_print(output.as_deref(), &text)
        }
        Command::Features {
            estimate,
            beta,
            m,
            output,
            annotations,
        } => {
            let text = std::fs::read_to_string(&estimate).map_err(|e| Error::io(&estimate, e))?;
            let est: Estimate = serde_json::from_str(&text)?;
            let params = if m == "auto" {
                ConfidenceParams::auto(beta, est.eta, est.meta.n)
            } else {
                let m: usize = m.parse().map_err(|_| Error::Parse {
                    what: "--m".into(),
                    detail: "expected `auto` or a positive integer".into(),
                })?;
                ConfidenceParams::new(beta, est.eta, m)?
            };
            let system = IntervalSystem::new(est.meta.system, est.meta.n);
            let report = feature_report(&est, &system, &params)?;
            if let Some(path) = &annotations {
                let mut table = String::from("# location type significant\n");
                for (loc, kind, flag) in report.annotation_rows() {
                    table.push_str(&format!("{loc} {kind} {}\n", flag as u8));
                }
                std::fs::write(path, table).map_err(|e| Error::io(path, e))?;
            }
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            write_or_print(output.as_deref(), &text)
        }
        Command::Oracle {
            signal,
            n,
            curve,
            output,
        } => {
            let sig = materialize_signal(&signal)?;
            let curve = approx_error_curve(&sig, n, curve)?;
            let mut text = String::from("k,delta,gamma_hat\n");
            let gamma = curve.slope.map(|s| -s.slope);
            for (k, err) in curve.ks.iter().zip(&curve.errors) {
                match gamma {
                    Some(g) => text.push_str(&format!("{k},{err},{g}\n")),
                    None => text.push_str(&format!("{k},{err},\n")),
                }
            }
            write_or_print(output.as_deref(), &text)
        }
        Command::OracleRisk {
            signal,
            partition,
            sigma,
            n,
            output,
        } => {
            let sig = materialize_signal(&signal)?;
            let tau = if let Some(m) = partition.strip_prefix("equal:m=") {
                let m: usize = m.parse().map_err(|_| Error::Parse {
                    what: "--partition".into(),
                    detail: "expected equal:m=<k>".into(),
                })?;
                equal_partition(m)
            } else {
                let mut tau = vec![0.0];
                tau.extend(parse_grid::<f64>(&partition, "--partition")?);
                tau.push(1.0);
                tau
            };
            let risk = oracle_risk(&sig, &tau, sigma, n)?;
            let mut text = serde_json::to_string_pretty(&risk)?;
            text.push('\n');
            write_or_print(output.as_deref(), &text)
        }
        Command::Stability(args) => {
            run_experiment(ExperimentKind::Stability, args, harness::run_stability)
        }
        Command::NoiseSweep(args) => {
            run_experiment(ExperimentKind::NoiseSweep, args, harness::run_noise_sweep)
        }
        Command::Robustness(args) => {
            run_experiment(ExperimentKind::Robustness, args, harness::run_robustness)
        }
        Command::Convergence(args) => {
            run_experiment(ExperimentKind::Convergence, args, harness::run_convergence)
        }
    }
}

fn main() {
    // MSSEG_THREADS caps the calibration/replicate parallelism
    if let Ok(threads) = std::env::var("MSSEG_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global()
                .ok();
        }
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
