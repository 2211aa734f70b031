//! Simulation scenarios and the Monte Carlo harness.
//!
//! Covariates are `X1, X2 ~ N(0, 1)` and `X3` uniform on
//! `{-sqrt2, -sqrt2/2, 0, sqrt2/2, sqrt2}`; noise is `N(0, 1)`. Outcomes are
//! generated as `Y = base(X) + effect(X) W + eps` with linear or quadratic
//! `base` and a linear, quadratic or constant additive `effect`.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{Estimand, EstimateReport, ExperimentData, Method};
use crate::error::{Error, Result};
use crate::estimators::baseline_report;
use crate::jackknife::{
    imputation_jackknife, opj_run, post_stratified_jackknife, BoundaryRule, JackknifeConfig,
};
use crate::rng::{self, tag};

/// Support of the discrete covariate `X3`.
pub const X3_SUPPORT: [f64; 5] = [-SQRT_2, -SQRT_2 / 2.0, 0.0, SQRT_2 / 2.0, SQRT_2];
/// Number of simulated covariates.
pub const COVARIATES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeForm {
    Independent,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectForm {
    None,
    Linear,
    Quadratic,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub outcome: OutcomeForm,
    pub effect: EffectForm,
    pub estimand: Estimand,
    pub n0: usize,
    pub n1: usize,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// A scenario with 1000 units per arm and 2000 replications.
    pub fn new(outcome: OutcomeForm, effect: EffectForm, estimand: Estimand) -> Self {
        ScenarioSpec {
            outcome,
            effect,
            estimand,
            n0: 1000,
            n1: 1000,
            reps: 2000,
            seed: 0,
        }
    }

    pub fn with_reps(self, reps: usize) -> Self {
        ScenarioSpec { reps, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ScenarioSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        use EffectForm as E;
        use OutcomeForm as O;
        let legal = matches!(
            (self.outcome, self.effect),
            (O::Independent, E::None)
                | (O::Linear, E::Linear)
                | (O::Linear, E::Constant)
                | (O::Quadratic, E::Quadratic)
                | (O::Quadratic, E::Constant)
        );
        if !legal {
            return Err(Error::IllegalScenario(format!(
                "{:?} outcome with {:?} effect",
                self.outcome, self.effect
            )));
        }
        if self.outcome == O::Independent && self.estimand == Estimand::Ratio {
            return Err(Error::IllegalScenario(
                "the ratio is undefined for a zero-mean independent outcome".into(),
            ));
        }
        if self.n0 == 0 || self.n1 == 0 || self.reps == 0 {
            return Err(Error::IllegalScenario(
                "arm sizes and reps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Mean outcome without and with treatment at covariates `x`.
    pub fn potential_means(&self, x: &[f64]) -> (f64, f64) {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        let linear = 1.0 + 3.0 * x1 - 2.0 * x2 + x3;
        let base = match self.outcome {
            OutcomeForm::Independent => 0.0,
            OutcomeForm::Linear => linear,
            OutcomeForm::Quadratic => linear + 2.0 * x1 * x1 + 3.0 * x2 * x2 + x3 * x3,
        };
        let effect = match self.effect {
            EffectForm::None => 0.0,
            EffectForm::Constant => 1.0,
            EffectForm::Linear => 1.0 + x1 + 2.0 * x2 + 3.0 * x3,
            EffectForm::Quadratic => {
                1.0 + x1 + 2.0 * x2 + 3.0 * x3 - x1 * x1 - 2.0 * x2 * x2 + 3.0 * x3 * x3
            }
        } / 5.0;
        (base, base + effect)
    }
}

/// Named scenarios: `independent`, `lin-lin`, `lin-const`, `quad-quad`,
/// `quad-const`.
impl FromStr for ScenarioSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (o, e) = match s {
            "independent" => (OutcomeForm::Independent, EffectForm::None),
            "lin-lin" => (OutcomeForm::Linear, EffectForm::Linear),
            "lin-const" => (OutcomeForm::Linear, EffectForm::Constant),
            "quad-quad" => (OutcomeForm::Quadratic, EffectForm::Quadratic),
            "quad-const" => (OutcomeForm::Quadratic, EffectForm::Constant),
            other => {
                return Err(Error::IllegalScenario(format!(
                    "unknown scenario `{other}`"
                )))
            }
        };
        Ok(ScenarioSpec::new(o, e, Estimand::Difference))
    }
}

/// `n x 3` covariates, row-major.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut x = Vec::with_capacity(n * COVARIATES);
    for _ in 0..n {
        let x1: f64 = StandardNormal.sample(rng);
        let x2: f64 = StandardNormal.sample(rng);
        let x3 = X3_SUPPORT[rng.random_range(0..X3_SUPPORT.len())];
        x.extend([x1, x2, x3]);
    }
    x
}

/// Observed outcomes for row-major covariates `x` and treatments `w`.
pub fn gen_outcome<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    x: &[f64],
    w: &[u8],
    rng: &mut R,
) -> Vec<f64> {
    x.chunks_exact(COVARIATES)
        .zip(w)
        .map(|(row, &t)| {
            let (m0, m1) = spec.potential_means(row);
            let eps: f64 = StandardNormal.sample(rng);
            let mean = if t == 1 { m1 } else { m0 };
            mean + eps
        })
        .collect()
}

/// Population value of `g(E Y(0), E Y(1))`.
pub fn true_tau(spec: &ScenarioSpec) -> f64 {
    // E X1^2 = E X2^2 = E X3^2 = 1 and all covariates have mean zero.
    let ey0 = match spec.outcome {
        OutcomeForm::Independent => 0.0,
        OutcomeForm::Linear => 1.0,
        OutcomeForm::Quadratic => 1.0 + 2.0 + 3.0 + 1.0,
    };
    let effect = match spec.effect {
        EffectForm::None => 0.0,
        EffectForm::Constant | EffectForm::Linear => 0.2,
        // E[1 + X1 + 2 X2 + 3 X3 - X1^2 - 2 X2^2 + 3 X3^2] = 1 - 1 - 2 + 3.
        EffectForm::Quadratic => 1.0 / 5.0,
    };
    match spec.estimand {
        Estimand::Difference => effect,
        Estimand::Ratio => (ey0 + effect) / ey0,
    }
}

/// Dataset of replication `rep`: covariates, complete randomization with
/// exactly `n1` treated units, then outcomes.
pub fn generate_dataset(spec: &ScenarioSpec, rep: usize) -> Result<ExperimentData> {
    let n = spec.n0 + spec.n1;
    let mut rng = rng::stream(spec.seed, tag::REPLICATION_DATA, rep as u64);
    let x = gen_covariates(n, &mut rng);
    let mut w: Vec<u8> = (0..n).map(|i| u8::from(i >= spec.n0)).collect();
    w.shuffle(&mut rng);
    let y = gen_outcome(spec, &x, &w, &mut rng);
    ExperimentData::new(y, w, x, COVARIATES)
}

/// An estimator compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimMethod {
    Base,
    Impute,
    Opj,
    /// Post-stratification on raw covariate `j` (zero-based): quantile strata
    /// for the continuous covariates, class strata for the discrete one.
    NaivePsf(usize),
}

impl SimMethod {
    pub fn label(self) -> String {
        match self {
            SimMethod::Base => "base".into(),
            SimMethod::Impute => "impute".into(),
            SimMethod::Opj => "opj".into(),
            SimMethod::NaivePsf(j) => format!("x{}", j + 1),
        }
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Runs one estimator on one dataset.
pub fn estimate(
    method: SimMethod,
    data: &ExperimentData,
    estimand: Estimand,
    cfg: &JackknifeConfig,
) -> Result<EstimateReport> {
    match method {
        SimMethod::Base => baseline_report(data, estimand, cfg.alpha),
        SimMethod::Impute => imputation_jackknife(data, estimand, cfg),
        SimMethod::Opj => opj_run(data, estimand, cfg).map(|r| r.report),
        SimMethod::NaivePsf(j) => {
            if j >= data.q() {
                return Err(Error::DimensionMismatch {
                    expected: data.q(),
                    got: j + 1,
                });
            }
            let psf = data.x_column(j);
            let rule = if j == 2 {
                BoundaryRule::Class
            } else {
                BoundaryRule::Quantile
            };
            post_stratified_jackknife(data, estimand, cfg, &psf, rule, Method::NaivePs)
                .map(|r| r.report)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationMetrics {
    pub mean_bias: f64,
    pub mean_se: f64,
    pub rmse: f64,
    pub coverage: f64,
}

/// Bias, mean SE, RMSE and interval coverage against the true effect.
pub fn aggregate_metrics(
    points: &[f64],
    ses: &[f64],
    cis: &[(f64, f64)],
    tau: f64,
) -> SimulationMetrics {
    assert!(!points.is_empty(), "no replications to aggregate");
    assert!(
        points.len() == ses.len() && points.len() == cis.len(),
        "length mismatch"
    );
    let n = points.len() as f64;
    let mean_bias = points.iter().map(|p| p - tau).sum::<f64>() / n;
    let mean_se = ses.iter().sum::<f64>() / n;
    let rmse = (points.iter().map(|p| (p - tau).powi(2)).sum::<f64>() / n).sqrt();
    let covered = cis
        .iter()
        .filter(|(lo, hi)| *lo <= tau && tau <= *hi)
        .count();
    SimulationMetrics {
        mean_bias,
        mean_se,
        rmse,
        coverage: covered as f64 / n,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: SimMethod,
    pub metrics: SimulationMetrics,
    /// `point - tau` for every replication, in replication order.
    pub errors: Vec<f64>,
}

/// Generates `spec.reps` datasets and runs every method on each.
///
/// All methods see the same dataset in a replication. Replication `r`
/// draws its data and its jackknife streams from seeds derived from
/// `(spec.seed, r)`; the seed in `cfg` is ignored.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    methods: &[SimMethod],
    cfg: &JackknifeConfig,
) -> Result<Vec<MethodResult>> {
    spec.validate()?;
    cfg.validate()?;
    let reports: Vec<Vec<EstimateReport>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let jk_seed = rng::derive_seed(spec.seed, tag::REPLICATION_JACKKNIFE, rep as u64);
            let wrap = |e: Error| Error::Replication {
                rep,
                seed: rng::derive_seed(spec.seed, tag::REPLICATION_DATA, rep as u64),
                source: Box::new(e),
            };
            let data = generate_dataset(spec, rep).map_err(wrap)?;
            let rep_cfg = cfg.with_seed(jk_seed);
            methods
                .iter()
                .map(|&m| estimate(m, &data, spec.estimand, &rep_cfg).map_err(wrap))
                .collect()
        })
        .collect::<Result<_>>()?;

    let tau = true_tau(spec);
    Ok(methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let col: Vec<&EstimateReport> = reports.iter().map(|r| &r[j]).collect();
            let points: Vec<f64> = col.iter().map(|r| r.point).collect();
            let ses: Vec<f64> = col.iter().map(|r| r.se).collect();
            let cis: Vec<(f64, f64)> = col.iter().map(|r| (r.ci_low, r.ci_high)).collect();
            MethodResult {
                method,
                metrics: aggregate_metrics(&points, &ses, &cis, tau),
                errors: points.iter().map(|p| p - tau).collect(),
            }
        })
        .collect())
}

/// Naive post-stratification on covariate `covariate` (1-based, 1..=3).
pub fn naive_psf_run(
    spec: &ScenarioSpec,
    covariate: usize,
    cfg: &JackknifeConfig,
) -> Result<SimulationMetrics> {
    if spec.outcome != OutcomeForm::Quadratic
        || spec.effect != EffectForm::Quadratic
        || spec.estimand != Estimand::Difference
    {
        return Err(Error::IllegalScenario(
            "naive factor comparison runs on the quadratic difference scenario".into(),
        ));
    }
    if !(1..=COVARIATES).contains(&covariate) {
        return Err(Error::InvalidConfig(format!(
            "covariate must be 1..=3, got {covariate}"
        )));
    }
    let out = run_monte_carlo(spec, &[SimMethod::NaivePsf(covariate - 1)], cfg)?;
    Ok(out[0].metrics)
}
