//! Experiment drivers and their plumbing: configuration files, per-replicate
//! records, aggregation, and CSV/JSON/gnuplot emission.

mod experiments;

pub use experiments::{
    materialize_signal, run_convergence, run_noise_sweep, run_robustness, run_stability,
};

use crate::error::{Error, Result};
use crate::intervals::SystemKind;
use crate::multiscale::PenaltyKind;
use crate::oracle::SlopeFit;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Stability,
    NoiseSweep,
    Robustness,
    Convergence,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Stability => "stability",
            ExperimentKind::NoiseSweep => "noise-sweep",
            ExperimentKind::Robustness => "robustness",
            ExperimentKind::Convergence => "convergence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stability" => Some(ExperimentKind::Stability),
            "noise-sweep" => Some(ExperimentKind::NoiseSweep),
            "robustness" => Some(ExperimentKind::Robustness),
            "convergence" => Some(ExperimentKind::Convergence),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    Gnuplot,
}

impl OutputFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Gnuplot => "gnuplot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            "gnuplot" => Some(OutputFormat::Gnuplot),
            _ => None,
        }
    }
}

/// One experiment manifest; mirrors the CLI flags and round-trips through a
/// flat key-value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub signal: String,
    pub n_grid: Vec<usize>,
    pub snr_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub penalty: PenaltyKind,
    pub intervals: SystemKind,
    pub replicates: usize,
    pub n_mc: usize,
    pub seed: u64,
    /// Sine-distortion frequency and amplitude factors (robustness only).
    pub distortion_a: f64,
    pub distortion_b: f64,
    /// Extra L^p losses to record besides L^2.
    pub lp: Vec<f64>,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            signal: "olshen".into(),
            n_grid: vec![crate::signals::OLSHEN_N],
            snr_grid: vec![1.0],
            beta_grid: vec![0.1],
            penalty: PenaltyKind::Smuce,
            intervals: SystemKind::DyadicLength,
            replicates: 100,
            n_mc: 10_000,
            seed: 1,
            distortion_a: 0.025,
            distortion_b: 0.3,
            lp: Vec::new(),
            output: None,
            format: OutputFormat::Csv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.snr_grid.is_empty() || self.beta_grid.is_empty() {
            return Err(Error::InvalidConfig("all grids must be non-empty".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.beta_grid.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::InvalidConfig(
                "significance levels must lie in (0,1)".into(),
            ));
        }
        if self.snr_grid.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::InvalidConfig("SNR values must be positive".into()));
        }
        match self.experiment {
            ExperimentKind::Stability => {
                if self.signal != "olshen" || self.n_grid != vec![crate::signals::OLSHEN_N] {
                    return Err(Error::InvalidConfig(
                        "the stability experiment runs the olshen signal at n = 497".into(),
                    ));
                }
            }
            ExperimentKind::Robustness => {
                if self.signal != "olshen" {
                    return Err(Error::InvalidConfig(
                        "the robustness experiment distorts the olshen signal".into(),
                    ));
                }
            }
            ExperimentKind::Convergence => {
                if !matches!(self.signal.as_str(), "blocks" | "heavisine") {
                    return Err(Error::InvalidConfig(
                        "the convergence experiment runs blocks or heavisine".into(),
                    ));
                }
            }
            ExperimentKind::NoiseSweep => {}
        }
        Ok(())
    }

    /// Flat `key = value` rendering; grids join with commas.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let join_f = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "experiment = {}", self.experiment.as_str());
        let _ = writeln!(s, "signal = {}", self.signal);
        let _ = writeln!(
            s,
            "n = {}",
            self.n_grid
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "snr = {}", join_f(&self.snr_grid));
        let _ = writeln!(s, "beta = {}", join_f(&self.beta_grid));
        let _ = writeln!(s, "penalty = {}", self.penalty.as_str());
        let _ = writeln!(s, "intervals = {}", self.intervals.as_str());
        let _ = writeln!(s, "replicates = {}", self.replicates);
        let _ = writeln!(s, "mc = {}", self.n_mc);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "a = {}", self.distortion_a);
        let _ = writeln!(s, "b = {}", self.distortion_b);
        if !self.lp.is_empty() {
            let _ = writeln!(s, "lp = {}", join_f(&self.lp));
        }
        if let Some(path) = &self.output {
            let _ = writeln!(s, "output = {}", path.display());
        }
        let _ = writeln!(s, "format = {}", self.format.as_str());
        s
    }

    /// Parses the flat key-value format; `#` starts a comment.
    pub fn from_file_string(text: &str) -> Result<Self> {
        let bad = |line: &str, detail: &str| Error::Parse {
            what: format!("config line `{line}`"),
            detail: detail.into(),
        };
        let mut experiment = None;
        let mut cfg = ExperimentConfig::new(ExperimentKind::Stability);
        let mut saw_lp = false;
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line, "expected key = value"))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "experiment" => {
                    experiment = Some(
                        ExperimentKind::parse(value)
                            .ok_or_else(|| bad(line, "unknown experiment"))?,
                    )
                }
                "signal" => cfg.signal = value.to_string(),
                "n" | "n-grid" => cfg.n_grid = parse_list(value).map_err(|d| bad(line, &d))?,
                "snr" | "snr-grid" => {
                    cfg.snr_grid = parse_list(value).map_err(|d| bad(line, &d))?
                }
                "beta" | "beta-grid" => {
                    cfg.beta_grid = parse_list(value).map_err(|d| bad(line, &d))?
                }
                "penalty" => {
                    cfg.penalty =
                        PenaltyKind::parse(value).ok_or_else(|| bad(line, "unknown penalty"))?
                }
                "intervals" => {
                    cfg.intervals =
                        SystemKind::parse(value).ok_or_else(|| bad(line, "unknown system"))?
                }
                "replicates" => {
                    cfg.replicates = value.parse().map_err(|_| bad(line, "bad count"))?
                }
                "mc" => cfg.n_mc = value.parse().map_err(|_| bad(line, "bad count"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad(line, "bad seed"))?,
                "a" => cfg.distortion_a = value.parse().map_err(|_| bad(line, "bad number"))?,
                "b" => cfg.distortion_b = value.parse().map_err(|_| bad(line, "bad number"))?,
                "lp" => {
                    cfg.lp = parse_list(value).map_err(|d| bad(line, &d))?;
                    saw_lp = true;
                }
                "output" => cfg.output = Some(PathBuf::from(value)),
                "format" => {
                    cfg.format =
                        OutputFormat::parse(value).ok_or_else(|| bad(line, "unknown format"))?
                }
                _ => return Err(bad(line, "unknown key")),
            }
        }
        if !saw_lp {
            cfg.lp = Vec::new();
        }
        cfg.experiment = experiment
            .ok_or_else(|| Error::InvalidConfig("config must name an experiment".into()))?;
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| format!("bad list entry `{v}`"))
        })
        .collect()
}

/// Metrics of one fitted replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub n: usize,
    pub snr: f64,
    pub beta: f64,
    pub jumps: usize,
    pub l2_loss: f64,
    pub lp_losses: Vec<f64>,
    pub jump_distance: f64,
    pub modes: usize,
    pub troughs: usize,
    pub runtime_ms: f64,
    pub seed: u64,
}

/// Mean and standard error per (n, snr, beta) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub snr: f64,
    pub beta: f64,
    pub count: usize,
    pub mean_jumps: f64,
    pub stderr_jumps: f64,
    pub mean_l2: f64,
    pub stderr_l2: f64,
    pub mean_jump_distance: f64,
    pub stderr_jump_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicateRecord>,
    pub aggregates: Vec<AggregateRow>,
    /// Log-log slope of mean L2 loss against n (convergence runs only).
    pub slope: Option<SlopeFit>,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let count = values.len();
    if count == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    if count == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count as f64 - 1.0);
    (mean, (var / count as f64).sqrt())
}

/// Groups records by (n, snr, beta), in the order the grids were declared.
pub fn aggregate(config: &ExperimentConfig, records: &[ReplicateRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        for &snr in &config.snr_grid {
            for &beta in &config.beta_grid {
                let group: Vec<&ReplicateRecord> = records
                    .iter()
                    .filter(|r| r.n == n && r.snr == snr && r.beta == beta)
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let jumps: Vec<f64> = group.iter().map(|r| r.jumps as f64).collect();
                let l2: Vec<f64> = group.iter().map(|r| r.l2_loss).collect();
                let jd: Vec<f64> = group.iter().map(|r| r.jump_distance).collect();
                let (mean_jumps, stderr_jumps) = mean_and_stderr(&jumps);
                let (mean_l2, stderr_l2) = mean_and_stderr(&l2);
                let (mean_jump_distance, stderr_jump_distance) = mean_and_stderr(&jd);
                rows.push(AggregateRow {
                    n,
                    snr,
                    beta,
                    count: group.len(),
                    mean_jumps,
                    stderr_jumps,
                    mean_l2,
                    stderr_l2,
                    mean_jump_distance,
                    stderr_jump_distance,
                });
            }
        }
    }
    rows
}

/// Per-replicate CSV. Runtimes are deliberately excluded so that identical
/// configurations emit byte-identical files; they remain in the JSON form.
pub fn to_csv(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let mut header = String::from("replicate,n,snr,beta,jumps,l2_loss");
    for p in &result.config.lp {
        let _ = write!(header, ",lp_{p}");
    }
    header.push_str(",jump_distance,modes,troughs,seed");
    out.push_str(&header);
    out.push('\n');
    for r in &result.records {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.replicate, r.n, r.snr, r.beta, r.jumps, r.l2_loss
        );
        for v in &r.lp_losses {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            r.jump_distance, r.modes, r.troughs, r.seed
        );
    }
    out
}

/// Whitespace-separated aggregate table with a comment header.
pub fn to_gnuplot(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "# n snr beta count mean_jumps stderr_jumps mean_l2 stderr_l2 mean_jump_distance stderr_jump_distance\n",
    );
    for a in &result.aggregates {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {}",
            a.n,
            a.snr,
            a.beta,
            a.count,
            a.mean_jumps,
            a.stderr_jumps,
            a.mean_l2,
            a.stderr_l2,
            a.mean_jump_distance,
            a.stderr_jump_distance
        );
    }
    if let Some(slope) = &result.slope {
        let _ = writeln!(
            out,
            "# slope {} stderr {} intercept {}",
            slope.slope, slope.stderr, slope.intercept
        );
    }
    out
}

/// Renders the result in the requested format.
pub fn render(result: &ExperimentResult, format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Csv => to_csv(result),
        OutputFormat::Gnuplot => to_gnuplot(result),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(result)?;
            s.push('\n');
            s
        }
    })
}

/// Writes the rendered result to the path, surfacing failures with context.
pub fn emit(result: &ExperimentResult, format: OutputFormat, path: &std::path::Path) -> Result<()> {
    let text = render(result, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Convergence);
        cfg.signal = "blocks".into();
        cfg.n_grid = vec![1023, 2046];
        cfg.snr_grid = vec![2.5];
        cfg.beta_grid = vec![0.1];
        cfg.replicates = 3;
        cfg.n_mc = 500;
        cfg.seed = 99;
        cfg.lp = vec![1.0, 2.5];
        cfg.output = Some(PathBuf::from("out.csv"));
        cfg
    }

    #[test]
    fn config_round_trips_through_file_format() {
        let cfg = sample_config();
        let text = cfg.to_file_string();
        let back = ExperimentConfig::from_file_string(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn config_parser_rejects_garbage() {
        assert!(ExperimentConfig::from_file_string("experiment = nope\n").is_err());
        assert!(ExperimentConfig::from_file_string("signal = blocks\n").is_err()); // no experiment
        assert!(ExperimentConfig::from_file_string("experiment = stability\nwhat = 3\n").is_err());
    }

    #[test]
    fn config_validation_enforces_experiment_preconditions() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Stability);
        cfg.signal = "blocks".into();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(ExperimentKind::Convergence);
        cfg.signal = "heavisine".into();
        assert!(cfg.validate().is_ok());
        cfg.beta_grid = vec![1.5];
        assert!(cfg.validate().is_err());
    }

    fn sample_result() -> ExperimentResult {
        let config = sample_config();
        let records = vec![
            ReplicateRecord {
                replicate: 0,
                n: 1023,
                snr: 2.5,
                beta: 0.1,
                jumps: 11,
                l2_loss: 0.5,
                lp_losses: vec![0.4, 0.6],
                jump_distance: 0.01,
                modes: 4,
                troughs: 3,
                runtime_ms: 12.5,
                seed: 7,
            },
            ReplicateRecord {
                replicate: 1,
                n: 1023,
                snr: 2.5,
                beta: 0.1,
                jumps: 12,
                l2_loss: 0.7,
                lp_losses: vec![0.5, 0.8],
                jump_distance: 0.02,
                modes: 5,
                troughs: 3,
                runtime_ms: 11.0,
                seed: 8,
            },
        ];
        let aggregates = aggregate(&config, &records);
        ExperimentResult {
            config,
            records,
            aggregates,
            slope: None,
        }
    }

    #[test]
    fn empty_result_renders_header_only_csv() {
        let mut result = sample_result();
        result.records.clear();
        result.aggregates.clear();
        let csv = to_csv(&result);
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("replicate,n,snr,beta,jumps,l2_loss,lp_1,lp_2.5"));
    }

    #[test]
    fn json_round_trips_field_by_field() {
        let result = sample_result();
        let json = render(&result, OutputFormat::Json).unwrap();
        let back: ExperimentResult = serde_json::from_str(&json).unwrap();
        assert_eq!(result, back);
    }

    #[test]
    fn gnuplot_table_has_one_row_per_group() {
        let result = sample_result();
        let table = to_gnuplot(&result);
        let data_rows = table.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(data_rows, result.aggregates.len());
    }

    #[test]
    fn aggregate_means_match_recomputation() {
        let result = sample_result();
        for row in &result.aggregates {
            let group: Vec<&ReplicateRecord> = result
                .records
                .iter()
                .filter(|r| r.n == row.n && r.snr == row.snr && r.beta == row.beta)
                .collect();
            let mean = group.iter().map(|r| r.l2_loss).sum::<f64>() / group.len() as f64;
            assert!((mean - row.mean_l2).abs() < 1e-12);
            let mean_j = group.iter().map(|r| r.jumps as f64).sum::<f64>() / group.len() as f64;
            assert!((mean_j - row.mean_jumps).abs() < 1e-12);
        }
    }
}
