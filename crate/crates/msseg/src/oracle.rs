//! Best piecewise-constant approximants, oracle segmentation risks, and
//! L^p losses.

use crate::error::{Error, Result};
use crate::multiscale::prefix_sums;
use crate::signals::{
    blocks_step, cell_means, ContinuousSignal, Observation, Signal, StepFunction,
};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// k-segment least squares on the cell grid
// ---------------------------------------------------------------------------

/// Layered segment DP: optimal sum of squared errors for every segment count
/// up to a bound, with predecessors for reconstruction. Ties take the
/// leftmost breakpoints.
struct SegmentDp {
    n: usize,
    /// `sse[s]` = optimal SSE with exactly `s` segments (index 0 unused).
    sse: Vec<f64>,
    choice: Vec<Vec<u32>>,
}

fn segment_dp(cells: &[f64], max_segments: usize) -> SegmentDp {
    let n = cells.len();
    let p = prefix_sums(cells);
    let q = prefix_sums(&cells.iter().map(|v| v * v).collect::<Vec<_>>());
    let seg_sse = |i: usize, j: usize| -> f64 {
        let w = (j - i) as f64;
        let s = p[j] - p[i];
        (q[j] - q[i] - s * s / w).max(0.0)
    };
    let layers = max_segments.min(n) + 1;
    let mut cost = vec![vec![f64::INFINITY; n + 1]; layers];
    let mut choice = vec![vec![0u32; n + 1]; layers];
    cost[0][n] = 0.0;
    for i in (0..n).rev() {
        for s in 1..layers.min(n - i + 1) {
            let mut best = f64::INFINITY;
            let mut arg = i + 1;
            let deeper_row = &cost[s - 1];
            for (j, deeper) in deeper_row.iter().enumerate().skip(i + 1) {
                if deeper.is_finite() {
                    let total = seg_sse(i, j) + deeper;
                    if total < best {
                        best = total;
                        arg = j;
                    }
                }
            }
            cost[s][i] = best;
            choice[s][i] = arg as u32;
        }
    }
    let sse = (0..layers).map(|s| cost[s][0]).collect();
    SegmentDp { n, sse, choice }
}

impl SegmentDp {
    fn reconstruct(&self, segments: usize) -> Vec<usize> {
        let mut cuts = vec![0usize];
        let mut at = 0usize;
        for s in (1..=segments).rev() {
            let next = self.choice[s][at] as usize;
            cuts.push(next);
            at = next;
        }
        debug_assert_eq!(at, self.n);
        cuts
    }

    fn step_function(&self, cells: &[f64], segments: usize) -> StepFunction {
        let cuts = self.reconstruct(segments);
        let n = self.n as f64;
        let values: Vec<f64> = cuts
            .windows(2)
            .map(|w| cells[w[0]..w[1]].iter().sum::<f64>() / (w[1] - w[0]) as f64)
            .collect();
        let breakpoints: Vec<f64> = cuts
            .iter()
            .map(|&c| if c == self.n { 1.0 } else { c as f64 / n })
            .collect();
        StepFunction::new(breakpoints, values).expect("DP cuts are valid")
    }
}

/// Best grid step function with at most `k` jumps for the weighted squared
/// error `sum (cells_i - g_i)^2 / n`; ties broken by leftmost breakpoints.
pub fn best_approximant(cells: &[f64], k: usize) -> StepFunction {
    assert!(!cells.is_empty());
    let segments = (k + 1).min(cells.len());
    let dp = segment_dp(cells, segments);
    dp.step_function(cells, segments)
}

/// Weighted approximation error of the best approximant with at most `k`
/// jumps: `sqrt(min SSE / n)`.
pub fn approximation_error(cells: &[f64], k: usize) -> f64 {
    let segments = (k + 1).min(cells.len());
    let dp = segment_dp(cells, segments);
    (dp.sse[segments] / cells.len() as f64).sqrt()
}

/// Least-squares line fit; `None` with fewer than two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let stderr = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(SlopeFit {
        slope,
        intercept,
        stderr,
    })
}

/// Approximation-error curve `k -> Delta_{2,k}` on the cell grid, with the
/// log-log slope fitted over `k in [4, K]`, zero errors excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximantCurve {
    pub ks: Vec<usize>,
    pub errors: Vec<f64>,
    pub approximants: Vec<StepFunction>,
    pub slope: Option<SlopeFit>,
}

pub fn approx_error_curve(f: &Signal, n: usize, k_max: usize) -> Result<ApproximantCurve> {
    if k_max < 1 {
        return Err(Error::Domain("curve needs at least one jump budget".into()));
    }
    let cells = cell_means(f, n)?;
    let segments_max = (k_max + 1).min(n);
    let dp = segment_dp(&cells, segments_max);
    let mut ks = Vec::new();
    let mut errors = Vec::new();
    let mut approximants = Vec::new();
    for k in 1..=k_max {
        let segments = (k + 1).min(n);
        ks.push(k);
        errors.push((dp.sse[segments] / n as f64).sqrt());
        approximants.push(dp.step_function(&cells, segments));
    }
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(&errors)
        .filter(|(&k, &e)| k >= 4 && e > 0.0)
        .map(|(&k, &e)| ((k as f64).ln(), e.ln()))
        .collect();
    let slope = least_squares_slope(
        &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
        &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
    );
    Ok(ApproximantCurve {
        ks,
        errors,
        approximants,
        slope,
    })
}

// ---------------------------------------------------------------------------
// Oracle segmentation and risks
// ---------------------------------------------------------------------------

/// Validates a grid-aligned partition `0 = tau_0 < ... < tau_k = 1` and
/// returns the cell cut indices.
pub fn partition_cells(tau: &[f64], n: usize) -> Result<Vec<usize>> {
    if tau.len() < 2 || tau[0] != 0.0 || *tau.last().unwrap() != 1.0 {
        return Err(Error::ContractViolation(
            "partition must run from 0 to 1".into(),
        ));
    }
    if tau
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::ContractViolation(
            "partition must be strictly increasing".into(),
        ));
    }
    let cells: Vec<usize> = tau
        .iter()
        .map(|t| (t * n as f64).round() as usize)
        .collect();
    for (t, &c) in tau.iter().zip(&cells) {
        if ((t * n as f64) - c as f64).abs() > 1e-9 || c > n {
            return Err(Error::ContractViolation(format!(
                "partition point {t} does not lie on the {n}-cell grid"
            )));
        }
    }
    Ok(cells)
}

/// Equal partition `(0, 1/m, ..., 1)`.
pub fn equal_partition(m: usize) -> Vec<f64> {
    assert!(m >= 1);
    let mut tau: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    tau.push(1.0);
    tau
}

/// Piecewise-constant least squares on an externally supplied partition:
/// segment sample means of the observations.
pub fn oracle_segmentation(y: &Observation, tau: &[f64]) -> Result<StepFunction> {
    let cuts = partition_cells(tau, y.n)?;
    let p = prefix_sums(&y.y);
    let values: Vec<f64> = cuts
        .windows(2)
        .map(|w| (p[w[1]] - p[w[0]]) / (w[1] - w[0]) as f64)
        .collect();
    let breakpoints: Vec<f64> = cuts
        .iter()
        .map(|&c| if c == y.n { 1.0 } else { c as f64 / y.n as f64 })
        .collect();
    StepFunction::new(breakpoints, values)
}

/// Risk decomposition of the oracle segmentation estimator on a partition:
/// squared approximation bias plus `segments * sigma^2 / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRisk {
    pub partition: Vec<f64>,
    pub bias_sq: f64,
    pub variance: f64,
    pub total: f64,
}

fn signal_integral(f: &Signal, a: f64, b: f64) -> f64 {
    match f {
        Signal::Step(step) => step_integral(step, a, b),
        Signal::Continuous(ContinuousSignal::Blocks) => step_integral(&blocks_step(), a, b),
        Signal::Continuous(ContinuousSignal::Ramp) => 0.5 * (b * b - a * a),
        Signal::Continuous(sig) => {
            crate::signals::adaptive_gl5(&|x| sig.value(x), a, b, 1e-12, 0, 52)
        }
    }
}

fn step_integral(f: &StepFunction, a: f64, b: f64) -> f64 {
    f.pieces()
        .map(|(lo, hi, v)| {
            let l = lo.max(a);
            let h = hi.min(b);
            if l < h {
                v * (h - l)
            } else {
                0.0
            }
        })
        .sum()
}

fn signal_sq_dev_integral(f: &Signal, a: f64, b: f64, c: f64) -> f64 {
    match f {
        Signal::Step(step) => step_sq_dev(step, a, b, c),
        Signal::Continuous(ContinuousSignal::Blocks) => step_sq_dev(&blocks_step(), a, b, c),
        Signal::Continuous(ContinuousSignal::Ramp) => {
            // antiderivative of (x - c)^2 is (x - c)^3 / 3
            ((b - c).powi(3) - (a - c).powi(3)) / 3.0
        }
        Signal::Continuous(sig) => crate::signals::adaptive_gl5(
            &|x| {
                let d = sig.value(x) - c;
                d * d
            },
            a,
            b,
            1e-12,
            0,
            52,
        ),
    }
}

fn step_sq_dev(f: &StepFunction, a: f64, b: f64, c: f64) -> f64 {
    f.pieces()
        .map(|(lo, hi, v)| {
            let l = lo.max(a);
            let h = hi.min(b);
            if l < h {
                (v - c) * (v - c) * (h - l)
            } else {
                0.0
            }
        })
        .sum()
}

/// Continuum risk: bias from exact or quadrature integration of
/// `(f - s_tau)^2` with `s_tau` the best constant per segment, plus the
/// sampling variance term.
pub fn oracle_risk(f: &Signal, tau: &[f64], sigma: f64, n: usize) -> Result<OracleRisk> {
    partition_cells(tau, n)?;
    let mut bias_sq = 0.0;
    for w in tau.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mean = signal_integral(f, a, b) / (b - a);
        bias_sq += signal_sq_dev_integral(f, a, b, mean);
    }
    let segments = tau.len() - 1;
    let variance = segments as f64 / n as f64 * sigma * sigma;
    Ok(OracleRisk {
        partition: tau.to_vec(),
        bias_sq,
        variance,
        total: bias_sq + variance,
    })
}

/// The same risk with the bias measured on the cell grid (cell means against
/// discrete segment means). The difference to [`oracle_risk`] is the
/// discretization gap of the bias term.
pub fn discrete_oracle_risk(f: &Signal, tau: &[f64], sigma: f64, n: usize) -> Result<OracleRisk> {
    let cuts = partition_cells(tau, n)?;
    let cells = cell_means(f, n)?;
    let p = prefix_sums(&cells);
    let q = prefix_sums(&cells.iter().map(|v| v * v).collect::<Vec<_>>());
    let mut bias_sq = 0.0;
    for w in cuts.windows(2) {
        let len = (w[1] - w[0]) as f64;
        let s = p[w[1]] - p[w[0]];
        bias_sq += (q[w[1]] - q[w[0]] - s * s / len).max(0.0);
    }
    bias_sq /= n as f64;
    let segments = tau.len() - 1;
    let variance = segments as f64 / n as f64 * sigma * sigma;
    Ok(OracleRisk {
        partition: tau.to_vec(),
        bias_sq,
        variance,
        total: bias_sq + variance,
    })
}

// ---------------------------------------------------------------------------
// L^p losses
// ---------------------------------------------------------------------------

/// `L^p` distance between a signal and a step function on `[0, 1)`: exact
/// piecewise evaluation when the signal is a step function, composite
/// adaptive quadrature per step-function segment otherwise.
pub fn lp_loss(f: &Signal, g: &StepFunction, p: f64) -> f64 {
    assert!(p > 0.0 && p.is_finite(), "exponent must lie in (0, inf)");
    let total: f64 = match f {
        Signal::Step(step) => step_lp_pow(step, g, p),
        Signal::Continuous(ContinuousSignal::Blocks) => step_lp_pow(&blocks_step(), g, p),
        Signal::Continuous(sig) => g
            .pieces()
            .map(|(a, b, c)| {
                crate::signals::adaptive_gl5(
                    &|x| (sig.value(x) - c).abs().powf(p),
                    a,
                    b,
                    1e-9,
                    0,
                    48,
                )
            })
            .sum(),
    };
    total.max(0.0).powf(1.0 / p)
}

fn step_lp_pow(f: &StepFunction, g: &StepFunction, p: f64) -> f64 {
    // merge the breakpoint sets; both functions are constant on each piece
    let mut cuts: Vec<f64> = f
        .breakpoints()
        .iter()
        .chain(g.breakpoints())
        .copied()
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (f.value_at(mid) - g.value_at(mid)).abs().powf(p) * (w[1] - w[0])
        })
        .sum()
}
