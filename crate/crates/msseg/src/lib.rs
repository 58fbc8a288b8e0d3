//! Multiscale change-point segmentation.
//!
//! The estimator returns the step function with the fewest jumps whose local
//! residual sums, penalized per scale and tested simultaneously over an
//! interval system, all stay below a threshold. The crate provides the
//! solver, Monte Carlo threshold calibration, feature inference with
//! simultaneous confidence, best piecewise-constant approximants and oracle
//! risks, and experiment drivers behind the `msseg` binary.
//!
//! ```
//! use msseg::*;
//!
//! // two segments with a clear jump at 1/2, plus seeded Gaussian noise
//! let truth = StepFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 4.0])?;
//! let signal = Signal::Step(truth);
//! let n = 64;
//! let sigma = snr_sigma(&signal, n, 10.0)?;
//! let obs = sample_observations(&signal, n, &NoiseModel::gaussian(sigma, 7))?;
//!
//! let system = IntervalSystem::new(SystemKind::DyadicLength, n);
//! let eta = simulate_quantile(0.1, n, &system, PenaltyKind::Smuce, sigma, 500, 7)?.eta;
//! let est = fit(&obs, &system, PenaltyKind::Smuce, eta)?;
//! assert_eq!(est.jumps, 1);
//! assert!(est.certificate <= est.eta + 1e-9);
//!
//! let report = feature_report(&est, &system, &ConfidenceParams::auto(0.1, eta, n))?;
//! assert!(report.jump_assessments[0].significant);
//! # Ok::<(), msseg::Error>(())
//! ```

#![forbid(unsafe_code)]

pub mod error;
pub mod harness;
pub mod inference;
pub mod intervals;
pub mod multiscale;
pub mod oracle;
pub mod signals;
pub mod solver;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentKind, ExperimentResult, OutputFormat};
pub use inference::{
    count_modes_troughs, feature_report, jump_distance, mean_order_claim, monotonicity, r_value,
    significant_jumps, ConfidenceParams, Direction, FeatureReport,
};
pub use intervals::{GridInterval, IntervalSystem, SystemKind};
pub use multiscale::{
    multiscale_statistic, penalty_value, simulate_quantile, universal_threshold, CalibrationResult,
    NullDistribution, PenaltyKind, ThresholdRule,
};
pub use oracle::{
    approx_error_curve, best_approximant, lp_loss, oracle_risk, oracle_segmentation,
    ApproximantCurve, OracleRisk, SlopeFit,
};
pub use signals::{
    cell_means, make_olshen_signal, sample_observations, snr_sigma, ContinuousSignal, NoiseModel,
    Observation, Signal, StepFunction, OLSHEN_N,
};
pub use solver::{fit, prune_certificate, segment_band, Estimate, FeasibleBand};
