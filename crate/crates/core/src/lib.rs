//! Treatment effect estimation for randomized experiments with endogenous
//! post-stratification.
//!
//! A regression fitted on the control arm maps each unit's covariates to a
//! scalar post-stratification factor (its predicted control outcome). Strata
//! boundaries are placed on that factor with a root-cumulative-density rule,
//! and an out-of-bag delete-D jackknife separates the units that choose the
//! boundaries from the units that estimate the effect while also supplying
//! the standard error.
//!
//! ```
//! use opj::{opj_run, Estimand, ExperimentData, JackknifeConfig};
//!
//! // 40 units per arm, one covariate, outcome = 2 x + 0.5 w.
//! let n = 80;
//! let x: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64 / n as f64).collect();
//! let w: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
//! let y: Vec<f64> = x.iter().zip(&w).map(|(x, &t)| 2.0 * x + 0.5 * t as f64).collect();
//! let data = ExperimentData::new(y, w, x, 1).unwrap();
//!
//! let run = opj_run(&data, Estimand::Difference, &JackknifeConfig::default()).unwrap();
//! assert!((run.report.point - 0.5).abs() < 0.05);
//! ```

pub mod data;
pub mod error;
pub mod estimators;
pub mod jackknife;
pub mod regression;
pub mod rng;
pub mod simulation;
pub mod stratify;

pub use data::{g_apply, Estimand, EstimateReport, ExperimentData, Method};
pub use error::{Arm, Error, Result};
pub use estimators::{
    baseline_estimate, baseline_report, baseline_se, imputation_estimate, post_stratified_estimate,
    strata_summary, variance_decomposition, StrataSummary, VarianceDecomposition,
};
pub use jackknife::{
    confidence_interval, imputation_jackknife, jackknife_se, opj_run, partition_buckets,
    post_stratified_jackknife, BoundaryRule, BucketPartition, JackknifeConfig, JackknifeRun,
    ReplicateTrace,
};
pub use regression::{fit_arm_models, fit_control_model, fit_ols, predict, LinearModel};
pub use simulation::{
    aggregate_metrics, naive_psf_run, run_monte_carlo, true_tau, EffectForm, MethodResult,
    OutcomeForm, ScenarioSpec, SimMethod, SimulationMetrics,
};
pub use stratify::{
    assign, class_boundaries, kde_fit, quantile_boundaries, root_cum_boundaries, KdeModel,
    StrataAssignment, StrataBoundaries,
};
