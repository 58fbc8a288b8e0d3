//! Feature detection with simultaneous confidence.
//!
//! Every claim rests on the same event: with probability at least `1 - beta`
//! the local means of the truth and of the fit agree on every system member
//! up to `r_I = 2 (eta + sigma s_I) / sqrt(n |I|)`. Disjoint value intervals
//! across a jump certify a true change, and ordered intervals on half
//! segments certify increases and decreases, simultaneously over all claims.

use crate::error::{Error, Result};
use crate::intervals::{GridInterval, IntervalSystem};
use crate::multiscale::{penalty_for_measure, PenaltyKind};
use crate::signals::StepFunction;
use crate::solver::Estimate;
use serde::{Deserialize, Serialize};

/// Parameters shared by all confidence statements on one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub beta: f64,
    pub eta: f64,
    /// Window length in cells used for change-point assessments.
    pub m: usize,
}

impl ConfidenceParams {
    pub fn new(beta: f64, eta: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("window length must be at least 1".into()));
        }
        Ok(ConfidenceParams { beta, eta, m })
    }

    /// Default window `floor(log n)`, at least one cell.
    pub fn auto(beta: f64, eta: f64, n: usize) -> Self {
        ConfidenceParams {
            beta,
            eta,
            m: default_window(n),
        }
    }
}

pub fn default_window(n: usize) -> usize {
    ((n as f64).ln().floor() as usize).max(1)
}

/// `r_I = 2 (eta + s_I) / sqrt(n |I|)` with the dimensionless penalty.
pub fn r_value(
    interval: GridInterval,
    eta: f64,
    penalty: PenaltyKind,
    segment: GridInterval,
    n: usize,
) -> f64 {
    let s = crate::multiscale::penalty_value(penalty, interval, segment, n);
    r_from_scale(eta, s, interval.len_cells())
}

/// The same formula from raw ingredients: `2 (eta + s) / sqrt(len)`.
pub fn r_from_scale(eta: f64, s: f64, len_cells: usize) -> f64 {
    2.0 * (eta + s) / (len_cells as f64).sqrt()
}

/// Scale-weighted radius used internally, consistent with the solver's bands.
fn r_scaled(
    eta: f64,
    penalty: PenaltyKind,
    sigma: f64,
    len_cells: usize,
    seg_cells: usize,
    n: usize,
) -> f64 {
    let s = penalty_for_measure(
        penalty,
        len_cells as f64 / n as f64,
        seg_cells as f64 / n as f64,
    );
    r_from_scale(eta, sigma * s, len_cells)
}

/// Certifies `mean of truth on I1 > mean of truth on I2` at confidence
/// `1 - beta`: true iff the estimate's means differ by more than `r_1 + r_2`.
/// The estimate must be constant on both intervals.
pub fn mean_order_claim(
    est: &Estimate,
    i1: GridInterval,
    i2: GridInterval,
    params: &ConfidenceParams,
) -> Result<bool> {
    let n = est.meta.n;
    let grid = est.fit.grid_breakpoints(n)?;
    let locate = |iv: GridInterval| -> Result<(f64, GridInterval)> {
        for (idx, w) in grid.windows(2).enumerate() {
            let seg = GridInterval::new(w[0], w[1]);
            if seg.contains(&iv) {
                return Ok((est.fit.values()[idx], seg));
            }
        }
        Err(Error::ContractViolation(format!(
            "estimate is not constant on cells [{}, {})",
            iv.start, iv.end
        )))
    };
    let (v1, seg1) = locate(i1)?;
    let (v2, seg2) = locate(i2)?;
    let r1 = r_scaled(
        params.eta,
        est.meta.penalty,
        est.meta.sigma,
        i1.len_cells(),
        seg1.len_cells(),
        n,
    );
    let r2 = r_scaled(
        params.eta,
        est.meta.penalty,
        est.meta.sigma,
        i2.len_cells(),
        seg2.len_cells(),
        n,
    );
    Ok(v1 > v2 + r1 + r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Increase,
    Decrease,
    Inconclusive,
}

/// Directed claim for one adjacent segment pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityEntry {
    pub jump_index: usize,
    pub location: f64,
    pub direction: Direction,
    /// min/max of `value ± r_I` over members in the half-segment windows.
    pub upper_left: Option<f64>,
    pub lower_left: Option<f64>,
    pub upper_right: Option<f64>,
    pub lower_right: Option<f64>,
}

/// Bounds `value ± min r_I` over system members inside `[lo, hi)`; `None`
/// when no member fits.
fn window_bounds(
    system: &IntervalSystem,
    lo: usize,
    hi: usize,
    value: f64,
    seg: GridInterval,
    est: &Estimate,
    params: &ConfidenceParams,
) -> (Option<f64>, Option<f64>) {
    if lo >= hi {
        return (None, None);
    }
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut seen = false;
    system.for_each_within(GridInterval::new(lo, hi), |m| {
        let r = r_scaled(
            params.eta,
            est.meta.penalty,
            est.meta.sigma,
            m.len_cells(),
            seg.len_cells(),
            est.meta.n,
        );
        upper = upper.min(value + r);
        lower = lower.max(value - r);
        seen = true;
    });
    if seen {
        (Some(upper), Some(lower))
    } else {
        (None, None)
    }
}

/// Directed increase/decrease claims on the half-segment windows around each
/// jump of the estimate. Windows with no system member are inconclusive.
pub fn monotonicity(
    est: &Estimate,
    system: &IntervalSystem,
    params: &ConfidenceParams,
) -> Result<Vec<MonotonicityEntry>> {
    let n = est.meta.n;
    let grid = est.fit.grid_breakpoints(n)?;
    let values = est.fit.values();
    let mut out = Vec::new();
    for i in 1..grid.len() - 1 {
        let (prev, here, next) = (grid[i - 1], grid[i], grid[i + 1]);
        let left_seg = GridInterval::new(prev, here);
        let right_seg = GridInterval::new(here, next);
        // half-segment windows [tau_{i-1/2}, tau_i) and [tau_i, tau_{i+1/2})
        let left_lo = (prev + here).div_ceil(2);
        let right_hi = (here + next) / 2;
        let (upper_left, lower_left) =
            window_bounds(system, left_lo, here, values[i - 1], left_seg, est, params);
        let (upper_right, lower_right) =
            window_bounds(system, here, right_hi, values[i], right_seg, est, params);
        let direction = match (upper_left, lower_left, upper_right, lower_right) {
            (Some(ul), Some(ll), Some(ur), Some(lr)) => {
                if ul < lr {
                    Direction::Increase
                } else if ll > ur {
                    Direction::Decrease
                } else {
                    Direction::Inconclusive
                }
            }
            _ => Direction::Inconclusive,
        };
        out.push(MonotonicityEntry {
            jump_index: i,
            location: est.fit.jump_locations()[i - 1],
            direction,
            upper_left,
            lower_left,
            upper_right,
            lower_right,
        });
    }
    Ok(out)
}

/// Assessment of one estimated change-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpAssessment {
    pub location: f64,
    pub cell: usize,
    pub left: (f64, f64),
    pub right: (f64, f64),
    pub significant: bool,
    /// True when an m-cell window was clipped at a segment boundary.
    pub clipped: bool,
}

/// Flags the estimated change-points whose adjacent m-cell value intervals
/// `[c ± r]` are disjoint. Windows are clipped at segment boundaries and the
/// clip is recorded.
pub fn significant_jumps(est: &Estimate, params: &ConfidenceParams) -> Result<Vec<JumpAssessment>> {
    let n = est.meta.n;
    let grid = est.fit.grid_breakpoints(n)?;
    let values = est.fit.values();
    let mut out = Vec::new();
    for i in 1..grid.len() - 1 {
        let (prev, here, next) = (grid[i - 1], grid[i], grid[i + 1]);
        let left_lo = here.saturating_sub(params.m).max(prev);
        let right_hi = (here + params.m).min(next);
        let clipped = here - left_lo < params.m || right_hi - here < params.m;
        let r_left = r_scaled(
            params.eta,
            est.meta.penalty,
            est.meta.sigma,
            here - left_lo,
            here - prev,
            n,
        );
        let r_right = r_scaled(
            params.eta,
            est.meta.penalty,
            est.meta.sigma,
            right_hi - here,
            next - here,
            n,
        );
        let left = (values[i - 1] - r_left, values[i - 1] + r_left);
        let right = (values[i] - r_right, values[i] + r_right);
        let significant = left.1 < right.0 || right.1 < left.0;
        out.push(JumpAssessment {
            location: est.fit.jump_locations()[i - 1],
            cell: here,
            left,
            right,
            significant,
            clipped,
        });
    }
    Ok(out)
}

/// One-sided max-min distance from the true jump set to the estimated one:
/// `max over true tau of min over estimated tau-hat of |tau - tau-hat|`.
/// Empty truth gives 0; empty estimate against non-empty truth gives infinity.
pub fn jump_distance(estimated: &[f64], truth: &[f64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    if estimated.is_empty() {
        return f64::INFINITY;
    }
    truth
        .iter()
        .map(|t| {
            estimated
                .iter()
                .map(|e| (t - e).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Mode and trough counts of a canonical step function. Boundary segments
/// count when strictly above/below their single neighbor; the interior
/// counts are also reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCounts {
    pub modes: usize,
    pub troughs: usize,
    pub interior_modes: usize,
    pub interior_troughs: usize,
}

pub fn count_modes_troughs(f: &StepFunction) -> ModeCounts {
    let v = f.values();
    let k = v.len();
    let mut counts = ModeCounts {
        modes: 0,
        troughs: 0,
        interior_modes: 0,
        interior_troughs: 0,
    };
    for i in 1..k.saturating_sub(1) {
        if v[i - 1] < v[i] && v[i] > v[i + 1] {
            counts.interior_modes += 1;
        }
        if v[i - 1] > v[i] && v[i] < v[i + 1] {
            counts.interior_troughs += 1;
        }
    }
    counts.modes = counts.interior_modes;
    counts.troughs = counts.interior_troughs;
    if k >= 2 {
        // canonical form guarantees strict inequality with the neighbor
        if v[0] > v[1] {
            counts.modes += 1;
        } else {
            counts.troughs += 1;
        }
        if v[k - 1] > v[k - 2] {
            counts.modes += 1;
        } else {
            counts.troughs += 1;
        }
    }
    counts
}

/// Full feature report at one confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub beta: f64,
    pub jump_assessments: Vec<JumpAssessment>,
    pub monotonicity: Vec<MonotonicityEntry>,
    /// Certified increase-to-decrease transitions over non-overlapping windows.
    pub modes_lower_bound: usize,
    pub troughs_lower_bound: usize,
}

pub fn feature_report(
    est: &Estimate,
    system: &IntervalSystem,
    params: &ConfidenceParams,
) -> Result<FeatureReport> {
    let jump_assessments = significant_jumps(est, params)?;
    let entries = monotonicity(est, system, params)?;
    let certified: Vec<Direction> = entries
        .iter()
        .map(|e| e.direction)
        .filter(|d| *d != Direction::Inconclusive)
        .collect();
    let mut modes_lower_bound = 0;
    let mut troughs_lower_bound = 0;
    for w in certified.windows(2) {
        match (w[0], w[1]) {
            (Direction::Increase, Direction::Decrease) => modes_lower_bound += 1,
            (Direction::Decrease, Direction::Increase) => troughs_lower_bound += 1,
            _ => {}
        }
    }
    Ok(FeatureReport {
        beta: params.beta,
        jump_assessments,
        monotonicity: entries,
        modes_lower_bound,
        troughs_lower_bound,
    })
}

impl FeatureReport {
    /// Plot-ready annotation rows: location, feature type, significance flag.
    pub fn annotation_rows(&self) -> Vec<(f64, String, bool)> {
        let mut rows: Vec<(f64, String, bool)> = self
            .jump_assessments
            .iter()
            .map(|a| (a.location, "jump".to_string(), a.significant))
            .collect();
        for e in &self.monotonicity {
            let label = match e.direction {
                Direction::Increase => "increase",
                Direction::Decrease => "decrease",
                Direction::Inconclusive => continue,
            };
            rows.push((e.location, label.to_string(), true));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        rows
    }
}
