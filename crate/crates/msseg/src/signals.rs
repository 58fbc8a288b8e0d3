//! Test signals, exact cell means, and noisy observation sampling.
//!
//! Signals live on the unit interval `[0, 1)`. Observations follow the
//! regression model `y_i = n * integral of f over [i/n, (i+1)/n) + noise_i`,
//! so every generator bottoms out in [`cell_means`].

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Mixing constant for per-replicate seed derivation (splitmix64 increment).
pub const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed for replicate `r` of an experiment with the given base seed.
pub fn replicate_seed(base: u64, r: u64) -> u64 {
    base ^ r.wrapping_mul(SEED_MIX)
}

// ---------------------------------------------------------------------------
// Step functions
// ---------------------------------------------------------------------------

/// Right-continuous step function on `[0, 1)` in canonical form: breakpoints
/// `0 = b_0 < b_1 < ... < b_{k+1} = 1` and one value per piece, with adjacent
/// values always distinct. `jump_count` is the number of interior breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStepFunction", into = "RawStepFunction")]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawStepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl From<StepFunction> for RawStepFunction {
    fn from(f: StepFunction) -> Self {
        RawStepFunction {
            breakpoints: f.breakpoints,
            values: f.values,
        }
    }
}

impl TryFrom<RawStepFunction> for StepFunction {
    type Error = Error;
    fn try_from(raw: RawStepFunction) -> Result<StepFunction> {
        StepFunction::new(raw.breakpoints, raw.values)
    }
}

impl StepFunction {
    /// Builds a canonical step function; pieces with equal adjacent values are merged.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidConfig(
                "step function needs at least the two endpoint breakpoints".into(),
            ));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} values for {} breakpoints, got {}",
                breakpoints.len() - 1,
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::InvalidConfig(
                "breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::InvalidConfig(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints
            .iter()
            .chain(values.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidConfig(
                "breakpoints and values must be finite".into(),
            ));
        }

        // Canonicalize: merge runs of equal adjacent values.
        let mut bp = Vec::with_capacity(breakpoints.len());
        let mut vals = Vec::with_capacity(values.len());
        bp.push(0.0);
        for (i, &v) in values.iter().enumerate() {
            if vals.last() == Some(&v) {
                continue;
            }
            if !vals.is_empty() {
                bp.push(breakpoints[i]);
            }
            vals.push(v);
        }
        bp.push(1.0);
        Ok(StepFunction {
            breakpoints: bp,
            values: vals,
        })
    }

    pub fn constant(value: f64) -> Self {
        StepFunction {
            breakpoints: vec![0.0, 1.0],
            values: vec![value],
        }
    }

    /// Step function with pieces on the sampling grid, one value per cell.
    pub fn from_cell_values(cells: &[f64]) -> Result<Self> {
        let n = cells.len();
        if n == 0 {
            return Err(Error::InvalidConfig("empty cell sequence".into()));
        }
        let breakpoints = (0..=n).map(|i| i as f64 / n as f64).collect();
        let mut bp: Vec<f64> = breakpoints;
        *bp.last_mut().unwrap() = 1.0;
        StepFunction::new(bp, cells.to_vec())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of jumps `#J(f)`, i.e. interior breakpoints.
    pub fn jump_count(&self) -> usize {
        self.breakpoints.len() - 2
    }

    /// The interior breakpoints (jump locations).
    pub fn jump_locations(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    pub fn value_at(&self, x: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&x), "evaluation outside [0,1)");
        // partition_point returns the first breakpoint > x; piece index is that - 1.
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        self.values[idx.saturating_sub(1).min(self.values.len() - 1)]
    }

    /// Iterator over pieces `(start, end, value)`.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn integral(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v * (b - a)).sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v * v * (b - a)).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// True when every breakpoint is a multiple of `1/n` (up to 1e-9 absolute).
    pub fn is_on_grid(&self, n: usize) -> bool {
        self.breakpoints.iter().all(|&b| {
            let scaled = b * n as f64;
            (scaled - scaled.round()).abs() < 1e-9
        })
    }

    /// Breakpoints as cell indices; requires [`is_on_grid`](Self::is_on_grid).
    pub fn grid_breakpoints(&self, n: usize) -> Result<Vec<usize>> {
        if !self.is_on_grid(n) {
            return Err(Error::ContractViolation(format!(
                "step function breakpoints do not lie on the {n}-cell grid"
            )));
        }
        Ok(self
            .breakpoints
            .iter()
            .map(|&b| (b * n as f64).round() as usize)
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Continuous test signals
// ---------------------------------------------------------------------------

/// Donoho-Johnstone style test signals plus the ramp and a step signal with
/// an additive index-wise sine distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContinuousSignal {
    Blocks,
    Bumps,
    Heavisine,
    Doppler,
    /// The identity `f(x) = x`.
    Ramp,
    /// `base` plus `0.25 * amplitude * sin(frequency * pi * i)` added at the
    /// sample index `i`. `grid` fixes the sampling rate used when the signal
    /// is evaluated pointwise; cell means always use the requested rate.
    SineDistortedStep {
        base: StepFunction,
        amplitude: f64,
        frequency: f64,
        grid: usize,
    },
}

const BLOCKS_T: [f64; 11] = [
    0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81,
];
const BLOCKS_H: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMPS_H: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMPS_W: [f64; 11] = [
    0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005,
];

/// Blocks as an explicit step function (its exact representation).
pub fn blocks_step() -> StepFunction {
    let mut bp = vec![0.0];
    bp.extend_from_slice(&BLOCKS_T);
    bp.push(1.0);
    let mut vals = Vec::with_capacity(12);
    let mut level = 0.0;
    vals.push(level);
    for h in BLOCKS_H {
        level += h;
        vals.push(level);
    }
    StepFunction::new(bp, vals).expect("blocks constants are valid")
}

impl ContinuousSignal {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            ContinuousSignal::Blocks => {
                let mut acc = 0.0;
                for (t, h) in BLOCKS_T.iter().zip(BLOCKS_H) {
                    if x >= *t {
                        acc += h;
                    }
                }
                acc
            }
            ContinuousSignal::Bumps => {
                let mut acc = 0.0;
                for ((t, h), w) in BLOCKS_T.iter().zip(BUMPS_H).zip(BUMPS_W) {
                    let u = (x - t) / w;
                    acc += h * (1.0 + u.abs()).powi(-4);
                }
                acc
            }
            ContinuousSignal::Heavisine => {
                4.0 * (4.0 * std::f64::consts::PI * x).sin() - sgn(x - 0.3) - sgn(0.72 - x)
            }
            ContinuousSignal::Doppler => {
                let eps = 0.05;
                (x * (1.0 - x)).max(0.0).sqrt()
                    * (2.0 * std::f64::consts::PI * (1.0 + eps) / (x + eps)).sin()
            }
            ContinuousSignal::Ramp => x,
            ContinuousSignal::SineDistortedStep {
                base,
                amplitude,
                frequency,
                grid,
            } => {
                base.value_at(x)
                    + 0.25 * amplitude * (frequency * std::f64::consts::PI * x * *grid as f64).sin()
            }
        }
    }

    /// Discontinuity locations, for jump-distance bookkeeping.
    pub fn jump_locations(&self) -> Vec<f64> {
        match self {
            ContinuousSignal::Blocks => BLOCKS_T.to_vec(),
            ContinuousSignal::Heavisine => vec![0.3, 0.72],
            ContinuousSignal::SineDistortedStep { base, .. } => base.jump_locations().to_vec(),
            _ => Vec::new(),
        }
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A signal is either an explicit step function or one of the continuous kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Signal {
    Step(StepFunction),
    Continuous(ContinuousSignal),
}

impl From<StepFunction> for Signal {
    fn from(f: StepFunction) -> Self {
        Signal::Step(f)
    }
}

impl From<ContinuousSignal> for Signal {
    fn from(f: ContinuousSignal) -> Self {
        Signal::Continuous(f)
    }
}

impl Signal {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Signal::Step(f) => f.value_at(x),
            Signal::Continuous(f) => f.value(x),
        }
    }

    pub fn jump_locations(&self) -> Vec<f64> {
        match self {
            Signal::Step(f) => f.jump_locations().to_vec(),
            Signal::Continuous(f) => f.jump_locations(),
        }
    }
}

// ---------------------------------------------------------------------------
// Cell means
// ---------------------------------------------------------------------------

/// `n` times the integral of `f` over each sampling cell `[i/n, (i+1)/n)`.
///
/// Exact for step functions (including Blocks and the ramp) and for the
/// sine-distorted step, whose distortion is added at the sample index rather
/// than integrated. Bumps and Doppler use adaptive Gauss-Legendre quadrature
/// with absolute tolerance 1e-10 per cell; Heavisine integrates in closed form.
pub fn cell_means(f: &Signal, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let means = match f {
        Signal::Step(step) => step_cell_means(step, n),
        Signal::Continuous(ContinuousSignal::Blocks) => step_cell_means(&blocks_step(), n),
        Signal::Continuous(ContinuousSignal::Ramp) => {
            (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
        }
        Signal::Continuous(ContinuousSignal::Heavisine) => heavisine_cell_means(n),
        Signal::Continuous(ContinuousSignal::SineDistortedStep {
            base,
            amplitude,
            frequency,
            ..
        }) => {
            let mut means = step_cell_means(base, n);
            for (i, m) in means.iter_mut().enumerate() {
                *m += 0.25 * amplitude * (frequency * std::f64::consts::PI * i as f64).sin();
            }
            means
        }
        Signal::Continuous(sig) => {
            let min_depth = |a: f64| {
                // Doppler oscillates fastest near 0; force extra refinement there.
                if matches!(sig, ContinuousSignal::Doppler) && a < 0.1 {
                    4
                } else {
                    0
                }
            };
            (0..n)
                .map(|i| {
                    let a = i as f64 / n as f64;
                    let b = (i + 1) as f64 / n as f64;
                    let integral = adaptive_gl5(&|x| sig.value(x), a, b, 1e-11, min_depth(a), 48);
                    n as f64 * integral
                })
                .collect()
        }
    };
    if let Some(cell) = means.iter().position(|m| !m.is_finite()) {
        return Err(Error::Evaluation {
            cell,
            detail: "cell mean is not finite".into(),
        });
    }
    Ok(means)
}

fn step_cell_means(f: &StepFunction, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut means = Vec::with_capacity(n);
    let bp = f.breakpoints();
    let vals = f.values();
    let mut piece = 0usize;
    for i in 0..n {
        let a = i as f64 / nf;
        let b = (i + 1) as f64 / nf;
        // rewind is never needed: cells advance monotonically
        while piece + 1 < vals.len() && bp[piece + 1] <= a {
            piece += 1;
        }
        if piece + 2 >= bp.len() || bp[piece + 1] >= b {
            // cell lies inside a single piece; the mean is that value exactly
            means.push(vals[piece]);
            continue;
        }
        let mut acc = 0.0;
        let mut p = piece;
        let mut lo = a;
        loop {
            let hi = if p + 1 < bp.len() {
                bp[p + 1].min(b)
            } else {
                b
            };
            acc += vals[p] * (hi - lo);
            if hi >= b || p + 1 >= vals.len() {
                break;
            }
            lo = hi;
            p += 1;
        }
        means.push(acc * nf);
    }
    means
}

fn heavisine_cell_means(n: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    // antiderivative of 4 sin(4 pi x) is -cos(4 pi x) / pi
    let smooth = |x: f64| -(4.0 * PI * x).cos() / PI;
    // -sgn(x - 0.3) - sgn(0.72 - x) equals -2 on (0.3, 0.72) and 0 outside
    let step_part = StepFunction::new(vec![0.0, 0.3, 0.72, 1.0], vec![0.0, -2.0, 0.0])
        .expect("valid heavisine step part");
    let step_means = step_cell_means(&step_part, n);
    (0..n)
        .map(|i| {
            let a = i as f64 / n as f64;
            let b = (i + 1) as f64 / n as f64;
            n as f64 * (smooth(b) - smooth(a)) + step_means[i]
        })
        .collect()
}

/// Five-point Gauss-Legendre rule on `[a, b]`.
fn gl5(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let hw = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    hw * X
        .iter()
        .zip(W)
        .map(|(&x, w)| w * f(mid + hw * x))
        .sum::<f64>()
}

/// Adaptive bisection on top of [`gl5`]: the whole-interval estimate is
/// compared with the two-half estimate and the interval is split until the
/// two agree within `tol` (absolute) or `max_depth` is reached.
pub(crate) fn adaptive_gl5(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    min_depth: u32,
    max_depth: u32,
) -> f64 {
    let whole = gl5(f, a, b);
    let mid = 0.5 * (a + b);
    let halves = gl5(f, a, mid) + gl5(f, mid, b);
    if min_depth == 0 && (whole - halves).abs() <= tol {
        return halves;
    }
    if max_depth == 0 {
        return halves;
    }
    let next_min = min_depth.saturating_sub(1);
    adaptive_gl5(f, a, mid, tol, next_min, max_depth - 1)
        + adaptive_gl5(f, mid, b, tol, next_min, max_depth - 1)
}

// ---------------------------------------------------------------------------
// Observations and noise
// ---------------------------------------------------------------------------

/// Observed data: `n` samples and the declared noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub n: usize,
    pub y: Vec<f64>,
    pub sigma: f64,
}

impl Observation {
    pub fn new(y: Vec<f64>, sigma: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidConfig("observation must be non-empty".into()));
        }
        if let Some(cell) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                cell,
                detail: "observation value is not finite".into(),
            });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain(
                "sigma must be finite and non-negative".into(),
            ));
        }
        Ok(Observation {
            n: y.len(),
            y,
            sigma,
        })
    }

    /// Renders the series as `index,value` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.y.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }

    /// Parses the `index,value` format; the header row is optional.
    pub fn from_csv(text: &str, sigma: f64) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
                continue;
            }
            let value_field = line.split(',').nth(1).ok_or_else(|| Error::Parse {
                what: format!("observation CSV line {}", lineno + 1),
                detail: "expected `index,value`".into(),
            })?;
            let v: f64 = value_field.trim().parse().map_err(|_| Error::Parse {
                what: format!("observation CSV line {}", lineno + 1),
                detail: format!("bad value `{value_field}`"),
            })?;
            values.push(v);
        }
        Observation::new(values, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    Gaussian,
    /// `+sigma` or `-sigma` with equal probability.
    ScaledRademacher,
    /// Uniform on `[-sigma*sqrt(3), sigma*sqrt(3)]` (variance `sigma^2`).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    /// One draw per cell, deterministic in the seed.
    pub fn draw(&self, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| match self.kind {
                NoiseKind::Gaussian => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    self.sigma * z
                }
                NoiseKind::ScaledRademacher => {
                    if rng.random::<bool>() {
                        self.sigma
                    } else {
                        -self.sigma
                    }
                }
                NoiseKind::Uniform => {
                    let half = self.sigma * 3.0_f64.sqrt();
                    rng.random_range(-half..=half)
                }
            })
            .collect()
    }
}

/// `sigma` achieving the requested signal-to-noise ratio `||f||_L2 / sigma`,
/// with the norm computed from cell means at the experiment's sample count.
pub fn snr_sigma(f: &Signal, n: usize, target_snr: f64) -> Result<f64> {
    if target_snr.is_nan() || target_snr <= 0.0 {
        return Err(Error::Domain("target SNR must be positive".into()));
    }
    let means = cell_means(f, n)?;
    let norm_sq = means.iter().map(|m| m * m).sum::<f64>() / n as f64;
    if norm_sq <= 0.0 {
        return Err(Error::Domain(
            "signal has zero L2 norm; SNR is undefined".into(),
        ));
    }
    Ok(norm_sq.sqrt() / target_snr)
}

/// Samples `y = cell_means(f, n) + noise`; identical inputs give identical output.
pub fn sample_observations(f: &Signal, n: usize, noise: &NoiseModel) -> Result<Observation> {
    let means = cell_means(f, n)?;
    let xi = noise.draw(n);
    let y = means.iter().zip(xi).map(|(m, e)| m + e).collect();
    Observation::new(y, noise.sigma)
}

// ---------------------------------------------------------------------------
// Named experiment signals
// ---------------------------------------------------------------------------

/// Companion sample size of the Olshen-Zhang copy-number test signal.
pub const OLSHEN_N: usize = 497;

/// The seven-segment test signal with six change-points at sample indices
/// 138, 225, 242, 299, 308, 332 on a 497-cell grid.
pub fn make_olshen_signal() -> StepFunction {
    let idx = [138.0, 225.0, 242.0, 299.0, 308.0, 332.0];
    let mut bp = vec![0.0];
    bp.extend(idx.iter().map(|i| i / OLSHEN_N as f64));
    bp.push(1.0);
    let values = vec![-0.18, 0.08, 1.07, -0.53, 0.16, -0.69, -0.16];
    StepFunction::new(bp, values).expect("olshen constants are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn indicator(from: f64) -> Signal {
        Signal::Step(StepFunction::new(vec![0.0, from, 1.0], vec![0.0, 1.0]).unwrap())
    }

    #[test]
    fn cell_means_grid_aligned_indicator() {
        let m = cell_means(&indicator(0.5), 4).unwrap();
        assert_eq!(m, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn cell_means_partial_cell_indicator() {
        let m = cell_means(&indicator(0.375), 4).unwrap();
        assert_eq!(m, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn cell_means_blocks_match_fine_riemann_sum() {
        let n = 1023;
        let sig = Signal::Continuous(ContinuousSignal::Blocks);
        let means = cell_means(&sig, n).unwrap();
        // brute-force oracle: 2^14 midpoint evaluations per cell; a midpoint
        // rule cannot localize a jump below one subcell, so the 11 cells
        // containing a breakpoint get the |jump| / 2^15 error bound instead
        let res: usize = 1 << 14;
        let bp = blocks_step();
        for (i, &m) in means.iter().enumerate() {
            let a = i as f64 / n as f64;
            let b = (i + 1) as f64 / n as f64;
            let w = 1.0 / (n as f64 * res as f64);
            let riemann: f64 = (0..res)
                .map(|j| sig.value(a + (j as f64 + 0.5) * w))
                .sum::<f64>()
                / res as f64;
            let has_jump = bp.jump_locations().iter().any(|&t| a < t && t < b);
            let tol = if has_jump { 5.1 / res as f64 } else { 1e-6 };
            assert!(
                (m - riemann).abs() < tol,
                "cell {i}: exact {m} vs riemann {riemann}"
            );
        }
    }

    #[test]
    fn cell_means_heavisine_match_quadrature_oracle() {
        let n = 64;
        let sig = ContinuousSignal::Heavisine;
        let means = cell_means(&Signal::Continuous(sig.clone()), n).unwrap();
        for (i, &m) in means.iter().enumerate() {
            let a = i as f64 / n as f64;
            let b = (i + 1) as f64 / n as f64;
            let q = n as f64 * adaptive_gl5(&|x| sig.value(x), a, b, 1e-13, 0, 52);
            assert_abs_diff_eq!(m, q, epsilon = 1e-9);
        }
    }

    #[test]
    fn cell_means_bumps_and_doppler_are_finite_and_bounded() {
        for sig in [ContinuousSignal::Bumps, ContinuousSignal::Doppler] {
            let means = cell_means(&Signal::Continuous(sig), 256).unwrap();
            assert!(means.iter().all(|m| m.is_finite() && m.abs() < 60.0));
        }
    }

    #[test]
    fn step_cell_means_reproduce_integral() {
        let f = make_olshen_signal();
        for n in [7, 100, 497, 1000] {
            let means = cell_means(&Signal::Step(f.clone()), n).unwrap();
            let total: f64 = means.iter().sum::<f64>() / n as f64;
            assert_abs_diff_eq!(total, f.integral(), epsilon = 1e-12);
        }
    }

    #[test]
    fn olshen_signal_shape() {
        let f = make_olshen_signal();
        assert_eq!(f.jump_count(), 6);
        assert_eq!(f.values()[0], -0.18);
        assert_abs_diff_eq!(f.jump_locations()[0], 138.0 / 497.0, epsilon = 0.0);
        assert_eq!(OLSHEN_N, 497);
    }

    #[test]
    fn snr_sigma_examples() {
        let unit = Signal::Step(StepFunction::constant(1.0));
        assert_abs_diff_eq!(snr_sigma(&unit, 16, 2.0).unwrap(), 0.5, epsilon = 1e-12);
        let three = Signal::Step(StepFunction::constant(3.0));
        assert_abs_diff_eq!(snr_sigma(&three, 10, 3.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(snr_sigma(&Signal::Step(StepFunction::constant(0.0)), 8, 1.0).is_err());
    }

    #[test]
    fn snr_sigma_olshen_matches_numeric_norm_oracle() {
        let f = make_olshen_signal();
        // independent norm oracle: fine Riemann sum of f^2
        let res = 200_000;
        let norm_sq: f64 = (0..res)
            .map(|j| {
                let x = (j as f64 + 0.5) / res as f64;
                let v = f.value_at(x);
                v * v
            })
            .sum::<f64>()
            / res as f64;
        let sigma = snr_sigma(&Signal::Step(f), OLSHEN_N, 1.0).unwrap();
        assert_abs_diff_eq!(sigma, norm_sq.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn sample_observations_zero_noise_is_exact() {
        let f = Signal::Step(make_olshen_signal());
        let obs = sample_observations(&f, 497, &NoiseModel::gaussian(0.0, 7)).unwrap();
        let means = cell_means(&f, 497).unwrap();
        assert_eq!(obs.y, means);
        assert_eq!(obs.sigma, 0.0);
    }

    #[test]
    fn sample_observations_deterministic() {
        let f = Signal::Continuous(ContinuousSignal::Heavisine);
        let noise = NoiseModel::gaussian(1.3, 99);
        let a = sample_observations(&f, 128, &noise).unwrap();
        let b = sample_observations(&f, 128, &noise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rademacher_residuals_have_two_point_support() {
        let f = Signal::Step(StepFunction::constant(0.25));
        let noise = NoiseModel {
            kind: NoiseKind::ScaledRademacher,
            sigma: 1.0,
            seed: 3,
        };
        let obs = sample_observations(&f, 200, &noise).unwrap();
        for y in obs.y {
            let r = y - 0.25;
            assert!((r - 1.0).abs() < 1e-15 || (r + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_monte_carlo_mean_is_centered() {
        // CLT bound: mean of 1e5 iid rows of 10 standard normals stays within
        // 4 * sigma * 10^(-5/2) * sqrt(10) of zero.
        let f = Signal::Step(StepFunction::constant(0.0));
        let reps = 100_000;
        let mut acc = 0.0;
        for r in 0..reps {
            let noise = NoiseModel::gaussian(1.0, replicate_seed(42, r));
            let obs = sample_observations(&f, 10, &noise).unwrap();
            acc += obs.y.iter().sum::<f64>();
        }
        let mean = acc / (reps as f64 * 10.0);
        let bound = 4.0 * 1.0 * 10f64.powf(-2.5) * 10f64.sqrt();
        assert!(mean.abs() < bound, "MC mean {mean} exceeds {bound}");
    }

    #[test]
    fn sine_distortion_applies_at_sample_index() {
        let base = make_olshen_signal();
        let sig = Signal::Continuous(ContinuousSignal::SineDistortedStep {
            base: base.clone(),
            amplitude: 0.3,
            frequency: 0.025,
            grid: 497,
        });
        let plain = cell_means(&Signal::Step(base), 497).unwrap();
        let distorted = cell_means(&sig, 497).unwrap();
        for i in 0..497 {
            let expected = plain[i] + 0.25 * 0.3 * (0.025 * std::f64::consts::PI * i as f64).sin();
            assert_abs_diff_eq!(distorted[i], expected, epsilon = 0.0);
        }
    }

    #[test]
    fn replicate_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> =
            (0..10_000).map(|r| replicate_seed(12345, r)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn step_function_rejects_malformed_input() {
        assert!(StepFunction::new(vec![0.0, 0.5], vec![1.0, 2.0]).is_err());
        assert!(StepFunction::new(vec![0.0, 0.5, 0.4, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(StepFunction::new(vec![0.1, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn observation_csv_round_trip() {
        let obs = Observation::new(vec![0.5, -1.25, 3.0], 0.7).unwrap();
        let csv = obs.to_csv();
        assert!(csv.starts_with("index,value\n0,0.5\n"));
        let back = Observation::from_csv(&csv, 0.7).unwrap();
        assert_eq!(obs, back);
        assert!(Observation::from_csv("index,value\n0,huh\n", 1.0).is_err());
    }

    #[test]
    fn step_function_json_round_trip() {
        let f = make_olshen_signal();
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.starts_with("{\"breakpoints\":"));
        let back: StepFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(f, back);
    }

    proptest! {
        #[test]
        fn canonicalization_merges_and_is_idempotent(values in prop::collection::vec(-3i32..3, 1..12)) {
            let vals: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let k = vals.len();
            let bp: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
            let f = StepFunction::new(bp, vals).unwrap();
            for w in f.values().windows(2) {
                prop_assert_ne!(w[0], w[1]);
            }
            let again = StepFunction::new(f.breakpoints().to_vec(), f.values().to_vec()).unwrap();
            prop_assert_eq!(&f, &again);
            prop_assert_eq!(f.jump_count(), f.breakpoints().len() - 2);
        }

        #[test]
        fn step_integral_matches_cell_mean_sum(values in prop::collection::vec(-5.0f64..5.0, 1..9), n in 1usize..40) {
            let k = values.len();
            let bp: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
            let f = StepFunction::new(bp, values).unwrap();
            let means = cell_means(&Signal::Step(f.clone()), n).unwrap();
            let total = means.iter().sum::<f64>() / n as f64;
            prop_assert!((total - f.integral()).abs() < 1e-12);
        }
    }
}
