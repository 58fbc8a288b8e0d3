//! The constrained jump-minimization solver.
//!
//! A candidate segment `[i/n, j/n)` may take any constant value inside its
//! feasible band: the intersection, over system members contained in the
//! segment, of `[mean_I - (eta + sigma s_I)/sqrt(n|I|), mean_I + ...]`.
//! Stage 1 finds the minimal number of segments whose bands are all
//! non-empty; stage 2 minimizes the residual sum of squares over partitions
//! of that size, with segment values clipped into their bands.
//!
//! Bands are computed by a left-endpoint sweep using
//! `B(i,j) = B(i,j-1) ∩ B(i+1,j) ∩ band([i,j))`, which touches every member
//! once: O(n^2) updates for the full system, O(n log n) member touches for
//! dyadic lengths. The segment-relative penalty changes with the outer
//! segment, so that recurrence is disabled for it and bands are rescanned.

use crate::error::{Error, Result};
use crate::intervals::{GridInterval, IntervalSystem, SystemKind};
use crate::multiscale::{multiscale_statistic, prefix_sums, ConstraintTables, PenaltyKind};
use crate::signals::{Observation, StepFunction};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Member set of the partition system: a hash lookup plus the sorted list.
type PartitionMembers = (HashSet<(usize, usize)>, Vec<GridInterval>);

/// Slack added to each band endpoint before emptiness tests, guarding against
/// intersections emptied purely by rounding.
pub const BAND_SLACK: f64 = 1e-9;

/// Admissible value range for a constant segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBand {
    pub lo: f64,
    pub hi: f64,
    pub empty: bool,
}

impl FeasibleBand {
    fn from_bounds(lo: f64, hi: f64) -> Self {
        FeasibleBand {
            lo,
            hi,
            empty: lo - hi > 2.0 * BAND_SLACK,
        }
    }

    /// Representative value closest to `target` within the band.
    fn clip(&self, target: f64) -> f64 {
        if self.lo <= self.hi {
            target.clamp(self.lo, self.hi)
        } else {
            // inverted within slack: the band is a point up to rounding
            0.5 * (self.lo + self.hi)
        }
    }
}

/// Fitted segmentation with its feasibility certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub fit: StepFunction,
    pub jumps: usize,
    pub bands: Vec<FeasibleBand>,
    pub eta: f64,
    /// Value of the multiscale statistic at the fit; at most `eta` up to slack.
    pub certificate: f64,
    pub meta: EstimateMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub n: usize,
    pub sigma: f64,
    pub system: SystemKind,
    pub penalty: PenaltyKind,
    pub threshold: String,
}

struct Problem<'a> {
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
    tables: ConstraintTables,
    system: &'a IntervalSystem,
    eta: f64,
    /// member lookup and sorted list for the partition system; full/dyadic
    /// lengths test membership arithmetically
    partition_members: Option<PartitionMembers>,
}

impl<'a> Problem<'a> {
    fn new(obs: &Observation, system: &'a IntervalSystem, penalty: PenaltyKind, eta: f64) -> Self {
        let partition_members = match system.kind {
            SystemKind::DyadicPartition => {
                let list = system.enumerate();
                let set = list.iter().map(|m| (m.start, m.end)).collect();
                Some((set, list))
            }
            _ => None,
        };
        Problem {
            prefix: prefix_sums(&obs.y),
            prefix_sq: prefix_sums(&obs.y.iter().map(|v| v * v).collect::<Vec<_>>()),
            tables: ConstraintTables::new(penalty, obs.n, obs.sigma),
            system,
            eta,
            partition_members,
        }
    }

    #[inline]
    fn is_member(&self, start: usize, end: usize) -> bool {
        match self.system.kind {
            SystemKind::Full => true,
            SystemKind::DyadicLength => (end - start).is_power_of_two(),
            SystemKind::DyadicPartition => self
                .partition_members
                .as_ref()
                .unwrap()
                .0
                .contains(&(start, end)),
        }
    }

    /// Band contribution of the single member `[start, end)` inside a
    /// `seg_len`-cell segment.
    #[inline]
    fn member_bounds(&self, start: usize, end: usize, seg_len: usize) -> (f64, f64) {
        let len = end - start;
        let mean = (self.prefix[end] - self.prefix[start]) * self.tables.inv_len(len);
        let hw = self.tables.halfwidth(self.eta, len, seg_len);
        (mean - hw, mean + hw)
    }

    /// Full rescan of the band of `[i, j)`.
    fn band_scan(&self, i: usize, j: usize) -> FeasibleBand {
        let seg_len = j - i;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut take = |start: usize, end: usize| {
            let (l, h) = self.member_bounds(start, end, seg_len);
            if l > lo {
                lo = l;
            }
            if h < hi {
                hi = h;
            }
        };
        if let Some((_, list)) = &self.partition_members {
            // members are sorted by (start, end); skip straight to start >= i
            let from = list.partition_point(|m| m.start < i);
            for m in &list[from..] {
                if m.start >= j {
                    break;
                }
                if m.end <= j {
                    take(m.start, m.end);
                }
            }
        } else {
            self.system
                .for_each_within(GridInterval::new(i, j), |m| take(m.start, m.end));
        }
        FeasibleBand::from_bounds(lo, hi)
    }

    fn mean(&self, i: usize, j: usize) -> f64 {
        (self.prefix[j] - self.prefix[i]) / (j - i) as f64
    }

    /// Residual sum of squares of the segment at its clipped value.
    fn clipped_cost(&self, i: usize, j: usize, band: &FeasibleBand) -> (f64, f64) {
        let w = (j - i) as f64;
        let sum = self.prefix[j] - self.prefix[i];
        let mean = sum / w;
        let sse = (self.prefix_sq[j] - self.prefix_sq[i] - sum * sum / w).max(0.0);
        let value = band.clip(mean);
        let d = mean - value;
        (sse + w * d * d, value)
    }

    /// Whether the band recurrence applies (segment-independent penalties).
    fn incremental(&self) -> bool {
        self.tables.kind != PenaltyKind::Fdrseg
    }

    /// Computes the row of bands for left endpoint `i` into `(lo, hi)`,
    /// reading the row for `i + 1`. Entries at indices `<= i` are the empty
    /// segment's universe. Returns the largest feasible right endpoint.
    fn fill_row(
        &self,
        i: usize,
        lo_prev: &[f64],
        hi_prev: &[f64],
        lo_cur: &mut [f64],
        hi_cur: &mut [f64],
    ) -> usize {
        let n = self.tables.n;
        lo_cur[i] = f64::NEG_INFINITY;
        hi_cur[i] = f64::INFINITY;
        let mut last_feasible = i;
        let mut dead = false;
        for j in i + 1..=n {
            if dead {
                lo_cur[j] = f64::INFINITY;
                hi_cur[j] = f64::NEG_INFINITY;
                continue;
            }
            let (mut lo, mut hi) = if self.incremental() {
                (lo_cur[j - 1].max(lo_prev[j]), hi_cur[j - 1].min(hi_prev[j]))
            } else {
                let band = self.band_scan(i, j);
                (band.lo, band.hi)
            };
            if self.incremental() && self.is_member(i, j) {
                let (l, h) = self.member_bounds(i, j, j - i);
                lo = lo.max(l);
                hi = hi.min(h);
            }
            lo_cur[j] = lo;
            hi_cur[j] = hi;
            if lo - hi > 2.0 * BAND_SLACK {
                if self.incremental() {
                    // bands only shrink as j grows, so the rest of the row is empty
                    dead = true;
                }
            } else {
                last_feasible = j;
            }
        }
        last_feasible
    }
}

/// The feasible band of the candidate segment covering cells `i..j`.
pub fn segment_band(
    obs: &Observation,
    i: usize,
    j: usize,
    system: &IntervalSystem,
    penalty: PenaltyKind,
    eta: f64,
) -> FeasibleBand {
    assert!(
        i < j && j <= obs.n,
        "segment must cover cells within the grid"
    );
    Problem::new(obs, system, penalty, eta).band_scan(i, j)
}

/// Largest `j` such that the band of `[i, j)` is non-empty. For the
/// segment-independent penalties emptiness is monotone in `j`, so the scan
/// stops at the first empty band; the segment-relative penalty requires a
/// full sweep.
pub fn prune_certificate(
    obs: &Observation,
    i: usize,
    system: &IntervalSystem,
    penalty: PenaltyKind,
    eta: f64,
) -> usize {
    assert!(i < obs.n);
    let problem = Problem::new(obs, system, penalty, eta);
    let single = problem.band_scan(i, i + 1);
    assert!(!single.empty, "single-cell band at {i} must be non-empty");
    let mut best = i + 1;
    for j in i + 2..=obs.n {
        let band = problem.band_scan(i, j);
        if !band.empty {
            best = j;
        } else if problem.incremental() {
            break;
        }
    }
    best
}

/// Solves the jump-minimization problem at threshold `eta`.
pub fn fit(
    obs: &Observation,
    system: &IntervalSystem,
    penalty: PenaltyKind,
    eta: f64,
) -> Result<Estimate> {
    if system.n != obs.n {
        return Err(Error::ContractViolation(format!(
            "system grid {} does not match observation length {}",
            system.n, obs.n
        )));
    }
    let n = obs.n;
    let problem = Problem::new(obs, system, penalty, eta);

    // Precondition: every single-cell band must be non-empty. A one-cell
    // segment contains only its own member, so the bands share one halfwidth.
    if problem.tables.halfwidth(eta, 1, 1) < -BAND_SLACK {
        return Err(Error::Infeasible { cell: 0 });
    }

    // Stage 1: minimal number of segments covering [i, n).
    let mut lo_prev = vec![f64::NEG_INFINITY; n + 1];
    let mut hi_prev = vec![f64::INFINITY; n + 1];
    let mut lo_cur = vec![f64::NEG_INFINITY; n + 1];
    let mut hi_cur = vec![f64::INFINITY; n + 1];
    let mut min_segments = vec![usize::MAX; n + 1];
    min_segments[n] = 0;
    for i in (0..n).rev() {
        let last = problem.fill_row(i, &lo_prev, &hi_prev, &mut lo_cur, &mut hi_cur);
        let mut best = usize::MAX;
        for j in i + 1..=last {
            if lo_cur[j] - hi_cur[j] <= 2.0 * BAND_SLACK && min_segments[j] != usize::MAX {
                best = best.min(min_segments[j]);
            }
        }
        debug_assert!(
            best != usize::MAX,
            "single cells keep every suffix coverable"
        );
        min_segments[i] = best.saturating_add(1);
        std::mem::swap(&mut lo_prev, &mut lo_cur);
        std::mem::swap(&mut hi_prev, &mut hi_cur);
    }
    let n_segments = min_segments[0];

    // Stage 2: among partitions into exactly `n_segments` feasible segments,
    // minimize the clipped residual sum of squares. Suffix DP
    // `E[s][i] = min_j segcost(i,j) + E[s-1][j]`; every layer of a row only
    // reads later rows, so one band sweep serves all layers. Ties pick the
    // smallest next breakpoint, giving the lexicographically smallest
    // change-point sequence.
    let layers = n_segments + 1;
    if layers.saturating_mul(n + 1) > 50_000_000 {
        return Err(Error::ContractViolation(format!(
            "stage-2 table of {n_segments} segments x {n} cells exceeds the supported size"
        )));
    }
    let mut suffix_cost = vec![vec![f64::INFINITY; n + 1]; layers];
    let mut choice = vec![vec![0u32; n + 1]; layers];
    suffix_cost[0][n] = 0.0;
    lo_prev.fill(f64::NEG_INFINITY);
    hi_prev.fill(f64::INFINITY);
    let mut row_cost = vec![f64::INFINITY; n + 1];
    for i in (0..n).rev() {
        let last = problem.fill_row(i, &lo_prev, &hi_prev, &mut lo_cur, &mut hi_cur);
        for j in i + 1..=last {
            row_cost[j] = if lo_cur[j] - hi_cur[j] <= 2.0 * BAND_SLACK {
                let band = FeasibleBand::from_bounds(lo_cur[j], hi_cur[j]);
                problem.clipped_cost(i, j, &band).0
            } else {
                f64::INFINITY
            };
        }
        let max_layer = layers.min(n - i + 1);
        for s in 1..max_layer {
            let mut best = f64::INFINITY;
            let mut arg = i + 1;
            let deeper = &suffix_cost[s - 1];
            for j in i + 1..=last {
                let c = row_cost[j];
                if c.is_finite() && deeper[j].is_finite() {
                    let total = c + deeper[j];
                    if total < best {
                        best = total;
                        arg = j;
                    }
                }
            }
            suffix_cost[s][i] = best;
            choice[s][i] = arg as u32;
        }
        std::mem::swap(&mut lo_prev, &mut lo_cur);
        std::mem::swap(&mut hi_prev, &mut hi_cur);
    }
    debug_assert!(
        suffix_cost[layers - 1][0].is_finite(),
        "stage 1 guarantees feasibility"
    );

    // Backtrack the partition, smallest breakpoints first.
    let mut cuts = vec![0usize];
    let mut at = 0usize;
    for s in (1..layers).rev() {
        let next = choice[s][at] as usize;
        cuts.push(next);
        at = next;
    }
    debug_assert_eq!(at, n);

    // Clip segment values into their bands.
    let mut values = Vec::with_capacity(n_segments);
    for w in cuts.windows(2) {
        let band = problem.band_scan(w[0], w[1]);
        values.push(band.clip(problem.mean(w[0], w[1])));
    }
    let breakpoints: Vec<f64> = cuts
        .iter()
        .map(|&c| if c == n { 1.0 } else { c as f64 / n as f64 })
        .collect();
    let fit_fn = StepFunction::new(breakpoints, values)?;

    // Report bands for the canonical fit's segments.
    let grid = fit_fn.grid_breakpoints(n)?;
    let bands: Vec<FeasibleBand> = grid
        .windows(2)
        .map(|w| problem.band_scan(w[0], w[1]))
        .collect();
    let certificate = multiscale_statistic(obs, &fit_fn, system, penalty)?;
    debug_assert!(
        certificate <= eta + 1e-9,
        "certificate {certificate} above eta {eta}"
    );
    Ok(Estimate {
        jumps: fit_fn.jump_count(),
        bands,
        eta,
        certificate,
        meta: EstimateMeta {
            n,
            sigma: obs.sigma,
            system: system.kind,
            penalty,
            threshold: format!("value:{eta}"),
        },
        fit: fit_fn,
    })
}
