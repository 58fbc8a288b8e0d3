//! Scale penalties, the multiscale statistic, and threshold selection.
//!
//! The working constraint family is scale-equivariant: every local test uses
//! the effective penalty `sigma * s_I`, where `sigma` is the observation's
//! declared noise scale. At `sigma = 1` this reduces to the dimensionless
//! penalty formulas, and the Monte Carlo quantile is calibrated against the
//! same family, so fits commute with rescaling the data.

use crate::error::{Error, Result};
use crate::intervals::{GridInterval, IntervalSystem, SystemKind};
use crate::signals::{replicate_seed, Observation, StepFunction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    /// `s_I = sqrt(2 log(e/|I|))`.
    Smuce,
    /// `s_I = sqrt(2 log(e |S|/|I|))` with `S` the constant segment containing `I`.
    Fdrseg,
    /// Unpenalized local tests.
    None,
}

impl PenaltyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PenaltyKind::Smuce => "smuce",
            PenaltyKind::Fdrseg => "fdrseg",
            PenaltyKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "smuce" => Some(PenaltyKind::Smuce),
            "fdrseg" => Some(PenaltyKind::Fdrseg),
            "none" => Some(PenaltyKind::None),
            _ => None,
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Penalty as a function of interval measure; `segment_measure` only matters
/// for the segment-relative penalty.
pub fn penalty_for_measure(kind: PenaltyKind, measure: f64, segment_measure: f64) -> f64 {
    debug_assert!(measure > 0.0 && measure <= 1.0);
    match kind {
        PenaltyKind::Smuce => (2.0 * (1.0 - measure.ln())).sqrt(),
        PenaltyKind::Fdrseg => {
            assert!(
                segment_measure + 1e-12 >= measure,
                "segment-relative penalty requires the interval inside its segment"
            );
            (2.0 * (1.0 + segment_measure.ln() - measure.ln())).sqrt()
        }
        PenaltyKind::None => 0.0,
    }
}

/// Penalty of a grid interval inside a candidate segment.
pub fn penalty_value(
    kind: PenaltyKind,
    interval: GridInterval,
    segment: GridInterval,
    n: usize,
) -> f64 {
    if kind == PenaltyKind::Fdrseg {
        assert!(
            segment.contains(&interval),
            "segment-relative penalty requires the interval inside its segment"
        );
    }
    penalty_for_measure(kind, interval.measure(n), segment.measure(n))
}

/// Prefix sums with a leading zero: `out[j] = y[0] + ... + y[j-1]`.
pub(crate) fn prefix_sums(y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for &v in y {
        acc += v;
        out.push(acc);
    }
    out
}

/// Precomputed per-length tables for the local tests of one constraint family.
#[derive(Debug, Clone)]
pub(crate) struct ConstraintTables {
    pub kind: PenaltyKind,
    pub sigma: f64,
    pub n: usize,
    inv_len: Vec<f64>,
    inv_sqrt: Vec<f64>,
    /// `sigma * s_len`, valid for the segment-independent penalties.
    scaled_pen: Vec<f64>,
    ln_len: Vec<f64>,
}

impl ConstraintTables {
    pub fn new(kind: PenaltyKind, n: usize, sigma: f64) -> Self {
        let nf = n as f64;
        let mut inv_len = Vec::with_capacity(n + 1);
        let mut inv_sqrt = Vec::with_capacity(n + 1);
        let mut scaled_pen = Vec::with_capacity(n + 1);
        let mut ln_len = Vec::with_capacity(n + 1);
        inv_len.push(0.0);
        inv_sqrt.push(0.0);
        scaled_pen.push(0.0);
        ln_len.push(0.0);
        for len in 1..=n {
            let lf = len as f64;
            inv_len.push(1.0 / lf);
            inv_sqrt.push(1.0 / lf.sqrt());
            ln_len.push(lf.ln());
            let pen = match kind {
                PenaltyKind::Fdrseg => 0.0, // segment-dependent; see scaled_penalty
                _ => penalty_for_measure(kind, lf / nf, 1.0),
            };
            scaled_pen.push(sigma * pen);
        }
        ConstraintTables {
            kind,
            sigma,
            n,
            inv_len,
            inv_sqrt,
            scaled_pen,
            ln_len,
        }
    }

    #[inline]
    pub fn inv_len(&self, len: usize) -> f64 {
        self.inv_len[len]
    }

    /// Effective penalty `sigma * s_I` for a member of `len` cells inside a
    /// `seg_len`-cell segment.
    #[inline]
    pub fn scaled_penalty(&self, len: usize, seg_len: usize) -> f64 {
        match self.kind {
            PenaltyKind::Fdrseg => {
                self.sigma * (2.0 * (1.0 + self.ln_len[seg_len] - self.ln_len[len])).sqrt()
            }
            _ => self.scaled_pen[len],
        }
    }

    /// Width of the member's admissible value interval around its sample mean.
    #[inline]
    pub fn halfwidth(&self, eta: f64, len: usize, seg_len: usize) -> f64 {
        (eta + self.scaled_penalty(len, seg_len)) * self.inv_sqrt[len]
    }

    /// Sup of the penalized local statistics over all system members inside
    /// `segment`, for a candidate that is constant `value` there.
    pub fn segment_sup(
        &self,
        prefix: &[f64],
        system: &IntervalSystem,
        segment: GridInterval,
        value: f64,
    ) -> f64 {
        let seg_len = segment.len_cells();
        let mut sup = f64::NEG_INFINITY;
        match system.kind {
            SystemKind::Full => {
                for start in segment.start..segment.end {
                    let base = prefix[start];
                    for (offset, p_end) in prefix[start + 1..=segment.end].iter().enumerate() {
                        let len = offset + 1;
                        let dev = (p_end - base - len as f64 * value).abs();
                        let t = dev * self.inv_sqrt[len] - self.scaled_penalty(len, seg_len);
                        if t > sup {
                            sup = t;
                        }
                    }
                }
            }
            _ => {
                system.for_each_within(segment, |m| {
                    let len = m.len_cells();
                    let dev = (prefix[m.end] - prefix[m.start] - len as f64 * value).abs();
                    let t = dev * self.inv_sqrt[len] - self.scaled_penalty(len, seg_len);
                    if t > sup {
                        sup = t;
                    }
                });
            }
        }
        sup
    }

    /// Dimensionless penalty bound `max_I |s_I| / sqrt(log n)`.
    pub fn delta_bound(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        // singles carry the largest penalty in every supported system
        let s_max = penalty_for_measure(
            match self.kind {
                PenaltyKind::Fdrseg => PenaltyKind::Fdrseg,
                k => k,
            },
            1.0 / self.n as f64,
            1.0,
        );
        s_max / (self.n as f64).ln().sqrt()
    }
}

/// The multiscale statistic of a candidate step function: the sup over system
/// members contained in one of the candidate's constant segments of the
/// normalized absolute residual sum minus the (scale-weighted) penalty.
pub fn multiscale_statistic(
    obs: &Observation,
    candidate: &StepFunction,
    system: &IntervalSystem,
    penalty: PenaltyKind,
) -> Result<f64> {
    if system.n != obs.n {
        return Err(Error::ContractViolation(format!(
            "system grid {} does not match observation length {}",
            system.n, obs.n
        )));
    }
    let cells = candidate.grid_breakpoints(obs.n)?;
    let tables = ConstraintTables::new(penalty, obs.n, obs.sigma);
    let prefix = prefix_sums(&obs.y);
    let mut sup = f64::NEG_INFINITY;
    for (seg_idx, w) in cells.windows(2).enumerate() {
        let segment = GridInterval::new(w[0], w[1]);
        let value = candidate.values()[seg_idx];
        sup = sup.max(tables.segment_sup(&prefix, system, segment, value));
    }
    Ok(sup)
}

/// Universal threshold `a * sqrt(log n)`.
pub fn universal_threshold(a: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(
            "universal threshold needs a grid of at least 2 cells".into(),
        ));
    }
    if a.is_nan() || a <= 0.0 {
        return Err(Error::Domain(
            "threshold coefficient must be positive".into(),
        ));
    }
    Ok(a * (n as f64).ln().sqrt())
}

/// A Monte Carlo quantile calibration outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub eta: f64,
    pub beta: f64,
    pub n_mc: usize,
    pub seed: u64,
    /// Observed `max |s_I| / sqrt(log n)` of the penalty family.
    pub delta_bound: f64,
}

/// Sorted null statistics `T(xi; 0)`; quantiles for several levels can be
/// read off one simulation.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    sorted: Vec<f64>,
    pub n: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub delta_bound: f64,
}

impl NullDistribution {
    /// Draws `n_mc` Gaussian noise vectors of scale `sigma` and evaluates the
    /// statistic of the zero candidate (one constant segment covering the
    /// whole grid, so every member qualifies). Replicates run in parallel on
    /// derived seeds; the result is independent of evaluation order.
    pub fn simulate(
        n: usize,
        system: &IntervalSystem,
        penalty: PenaltyKind,
        sigma: f64,
        n_mc: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_mc < 100 {
            return Err(Error::Domain(
                "quantile calibration needs at least 100 replicates".into(),
            ));
        }
        if system.n != n {
            return Err(Error::ContractViolation(
                "system grid size does not match n".into(),
            ));
        }
        let tables = ConstraintTables::new(penalty, n, sigma);
        let whole = GridInterval::new(0, n);
        let mut stats: Vec<f64> = (0..n_mc as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, r));
                let noise: Vec<f64> = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sigma * z
                    })
                    .collect();
                let prefix = prefix_sums(&noise);
                tables.segment_sup(&prefix, system, whole, 0.0)
            })
            .collect();
        stats.sort_unstable_by(f64::total_cmp);
        Ok(NullDistribution {
            sorted: stats,
            n,
            n_mc,
            seed,
            delta_bound: tables.delta_bound(),
        })
    }

    /// Empirical upper quantile: the k-th order statistic, k = ceil((1-beta) n_mc).
    pub fn quantile(&self, beta: f64) -> Result<CalibrationResult> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!(
                "significance level must lie in (0,1), got {beta}"
            )));
        }
        let k = ((1.0 - beta) * self.n_mc as f64).ceil() as usize;
        let k = k.clamp(1, self.n_mc);
        Ok(CalibrationResult {
            eta: self.sorted[k - 1],
            beta,
            n_mc: self.n_mc,
            seed: self.seed,
            delta_bound: self.delta_bound,
        })
    }
}

/// Convenience wrapper: one simulation, one quantile.
pub fn simulate_quantile(
    beta: f64,
    n: usize,
    system: &IntervalSystem,
    penalty: PenaltyKind,
    sigma: f64,
    n_mc: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    NullDistribution::simulate(n, system, penalty, sigma, n_mc, seed)?.quantile(beta)
}

/// How the threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum ThresholdRule {
    Universal { a: f64 },
    Quantile { beta: f64, n_mc: usize, seed: u64 },
    Explicit { value: f64 },
}

impl ThresholdRule {
    /// Parses `universal:a=<x>`, `quantile:beta=<x>,mc=<k>`, or `value:<x>`.
    /// The quantile rule takes its seed from `default_seed`.
    pub fn parse(s: &str, default_seed: u64) -> Result<Self> {
        let bad = |detail: &str| Error::Parse {
            what: format!("threshold specification `{s}`"),
            detail: detail.into(),
        };
        if let Some(rest) = s.strip_prefix("value:") {
            let value: f64 = rest.parse().map_err(|_| bad("expected value:<number>"))?;
            return Ok(ThresholdRule::Explicit { value });
        }
        if let Some(rest) = s.strip_prefix("universal:") {
            let rest = rest
                .strip_prefix("a=")
                .ok_or_else(|| bad("expected universal:a=<x>"))?;
            let a: f64 = rest.parse().map_err(|_| bad("expected universal:a=<x>"))?;
            return Ok(ThresholdRule::Universal { a });
        }
        if let Some(rest) = s.strip_prefix("quantile:") {
            let mut beta = None;
            let mut n_mc = 10_000usize;
            for part in rest.split(',') {
                if let Some(v) = part.strip_prefix("beta=") {
                    beta = Some(v.parse().map_err(|_| bad("bad beta"))?);
                } else if let Some(v) = part.strip_prefix("mc=") {
                    n_mc = v.parse().map_err(|_| bad("bad mc"))?;
                } else if !part.is_empty() {
                    return Err(bad("expected quantile:beta=<x>[,mc=<k>]"));
                }
            }
            let beta = beta.ok_or_else(|| bad("quantile rule requires beta"))?;
            return Ok(ThresholdRule::Quantile {
                beta,
                n_mc,
                seed: default_seed,
            });
        }
        Err(bad(
            "expected universal:a=<x>, quantile:beta=<x>[,mc=<k>], or value:<x>",
        ))
    }

    /// Resolves the rule to a numeric threshold for a concrete problem.
    pub fn resolve(
        &self,
        n: usize,
        system: &IntervalSystem,
        penalty: PenaltyKind,
        sigma: f64,
    ) -> Result<(f64, Option<CalibrationResult>)> {
        match *self {
            ThresholdRule::Universal { a } => Ok((universal_threshold(a, n)?, None)),
            ThresholdRule::Explicit { value } => Ok((value, None)),
            ThresholdRule::Quantile { beta, n_mc, seed } => {
                let cal = simulate_quantile(beta, n, system, penalty, sigma, n_mc, seed)?;
                Ok((cal.eta, Some(cal)))
            }
        }
    }
}

impl std::fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdRule::Universal { a } => write!(f, "universal:a={a}"),
            ThresholdRule::Quantile { beta, n_mc, .. } => {
                write!(f, "quantile:beta={beta},mc={n_mc}")
            }
            ThresholdRule::Explicit { value } => write!(f, "value:{value}"),
        }
    }
}
