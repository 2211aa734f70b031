//! Out-of-bag post-stratified delete-D jackknife.
//!
//! Units are dealt into `B` buckets separately within each arm. Each of the
//! `M` iterations draws `D` buckets at random: the factor values of the units
//! in those buckets place the strata boundaries, and the units of the other
//! `B - D` buckets are stratified and used for the estimate. The point
//! estimate is the mean of the `M` replicate estimates and its standard error
//! is `sqrt((B - D) / (D M) * sum (est_m - mean)^2)`.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Estimand, EstimateReport, ExperimentData, Method};
use crate::error::{Arm, Error, Result};
use crate::estimators::{imputation_estimate, post_stratified_estimate, summary_from};
use crate::regression::{fit_control_model, predict};
use crate::rng::{self, tag};
use crate::stratify::{
    assign, class_boundaries, kde_fit, quantile_boundaries, root_cum_boundaries, StrataBoundaries,
};

#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeConfig {
    /// Number of buckets `B`.
    pub buckets: usize,
    /// Buckets deleted per iteration, `D`.
    pub deleted: usize,
    /// Number of iterations `M`.
    pub iterations: usize,
    /// Number of strata `K`.
    pub strata: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for JackknifeConfig {
    fn default() -> Self {
        JackknifeConfig {
            buckets: 20,
            deleted: 4,
            iterations: 60,
            strata: 5,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl JackknifeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.buckets < 2 {
            return bad(format!("B must be at least 2, got {}", self.buckets));
        }
        if self.deleted == 0 || self.deleted >= self.buckets {
            return bad(format!(
                "D must satisfy 1 <= D < B = {}, got {}",
                self.buckets, self.deleted
            ));
        }
        if self.iterations < 2 {
            return bad(format!("M must be at least 2, got {}", self.iterations));
        }
        if self.strata == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        JackknifeConfig {
            seed,
            ..self.clone()
        }
    }

    fn echo(&self, with_strata: bool) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        if with_strata {
            m.insert("K".to_string(), self.strata as u64);
        }
        m.insert("B".to_string(), self.buckets as u64);
        m.insert("D".to_string(), self.deleted as u64);
        m.insert("M".to_string(), self.iterations as u64);
        m.insert("seed".to_string(), self.seed);
        m
    }
}

/// Zero-based bucket label of every unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketPartition {
    pub labels: Vec<usize>,
    pub buckets: usize,
}

impl BucketPartition {
    /// Units per bucket as `[control, treated]`.
    pub fn arm_sizes(&self, w: &[u8]) -> Vec<[usize; 2]> {
        let mut sizes = vec![[0; 2]; self.buckets];
        for (&b, &t) in self.labels.iter().zip(w) {
            sizes[b][t as usize] += 1;
        }
        sizes
    }
}

/// Shuffles each arm and deals its units round-robin into `buckets` buckets.
pub fn partition_buckets<R: Rng + ?Sized>(
    data: &ExperimentData,
    buckets: usize,
    rng: &mut R,
) -> Result<BucketPartition> {
    let mut labels = vec![0; data.len()];
    for arm in [Arm::Control, Arm::Treated] {
        let mut idx = data.arm_indices(arm);
        if idx.len() < buckets {
            return Err(Error::ArmSmallerThanB {
                arm,
                size: idx.len(),
                buckets,
            });
        }
        idx.shuffle(rng);
        for (pos, i) in idx.into_iter().enumerate() {
            labels[i] = pos % buckets;
        }
    }
    Ok(BucketPartition { labels, buckets })
}

/// `sqrt((B - D) / (D M) * sum_m (est_m - mean)^2)`.
pub fn jackknife_se(estimates: &[f64], buckets: usize, deleted: usize) -> f64 {
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let ss: f64 = estimates.iter().map(|e| (e - mean) * (e - mean)).sum();
    ((buckets - deleted) as f64 / (deleted as f64 * m) * ss).sqrt()
}

/// Student-t quantile with `df` degrees of freedom.
pub fn t_quantile(df: f64, p: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom must be positive")
        .inverse_cdf(p)
}

/// `point -/+ t(B - 1, 1 - alpha / 2) se`.
pub fn confidence_interval(point: f64, se: f64, buckets: usize, alpha: f64) -> (f64, f64) {
    let half = if se == 0.0 {
        0.0
    } else {
        t_quantile((buckets - 1) as f64, 1.0 - alpha / 2.0) * se
    };
    (point - half, point + half)
}

/// How strata boundaries are placed on the deleted buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRule {
    /// Equal shares of the integral of the square-rooted density estimate.
    RootCumulative,
    /// Equally spaced empirical quantiles.
    Quantile,
    /// One stratum per distinct value; `K` is ignored.
    Class,
}

impl BoundaryRule {
    pub fn boundaries(self, values: &[f64], k: usize) -> Result<StrataBoundaries> {
        match self {
            BoundaryRule::RootCumulative => root_cum_boundaries(&kde_fit(values)?, k),
            BoundaryRule::Quantile => quantile_boundaries(values, k),
            BoundaryRule::Class => class_boundaries(values),
        }
    }
}

/// One delete-D iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateTrace {
    pub iteration: usize,
    /// Zero-based labels of the `D` deleted buckets, ascending.
    pub deleted: Vec<usize>,
    pub estimate: f64,
    /// Boundaries after merging degenerate strata.
    pub boundaries: StrataBoundaries,
    pub merges: usize,
    /// The factor values of the deleted buckets were too concentrated to place
    /// distinct cuts, so the replicate used one stratum.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct JackknifeRun {
    pub report: EstimateReport,
    pub traces: Vec<ReplicateTrace>,
    /// Number of iterations in which each unit was among the retained units.
    pub inclusion: Vec<u32>,
    pub partition: BucketPartition,
}

impl JackknifeRun {
    pub fn replicate_estimates(&self) -> Vec<f64> {
        self.traces.iter().map(|t| t.estimate).collect()
    }

    /// Indices of the units retained for estimation in iteration `m`.
    pub fn retained_units(&self, m: usize) -> Vec<usize> {
        let deleted = &self.traces[m].deleted;
        (0..self.partition.labels.len())
            .filter(|&i| !deleted.contains(&self.partition.labels[i]))
            .collect()
    }
}

/// Merges every stratum lacking one of the arms into its neighbour with the
/// smaller total count (ties go to the lower stratum) until each stratum
/// holds both arms or a single stratum remains. Returns the merge count.
pub fn merge_degenerate(boundaries: &mut StrataBoundaries, counts: &mut Vec<[usize; 2]>) -> usize {
    let mut merges = 0;
    while counts.len() > 1 {
        let Some(k) = counts.iter().position(|c| c[0] == 0 || c[1] == 0) else {
            break;
        };
        let total = |s: usize| counts[s][0] + counts[s][1];
        let partner = if k == 0 {
            1
        } else if k + 1 == counts.len() || total(k - 1) <= total(k + 1) {
            k - 1
        } else {
            k + 1
        };
        let lo = k.min(partner);
        boundaries.merge_with_next(lo);
        let upper = counts.remove(lo + 1);
        counts[lo][0] += upper[0];
        counts[lo][1] += upper[1];
        merges += 1;
    }
    merges
}

/// Deleted bucket set for iteration `m`, and the unit split it induces.
struct Split {
    deleted: Vec<usize>,
    strat: Vec<usize>,
    retained: Vec<usize>,
}

fn draw_split(partition: &BucketPartition, cfg: &JackknifeConfig, m: usize) -> Split {
    let mut rng = rng::stream(cfg.seed, tag::ITERATION, m as u64);
    let mut deleted = index::sample(&mut rng, cfg.buckets, cfg.deleted).into_vec();
    deleted.sort_unstable();
    let mut is_deleted = vec![false; cfg.buckets];
    for &b in &deleted {
        is_deleted[b] = true;
    }
    let (strat, retained) =
        (0..partition.labels.len()).partition(|&i| is_deleted[partition.labels[i]]);
    Split {
        deleted,
        strat,
        retained,
    }
}

fn make_partition(data: &ExperimentData, cfg: &JackknifeConfig) -> Result<BucketPartition> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, tag::PARTITION, 0);
    partition_buckets(data, cfg.buckets, &mut rng)
}

fn inclusion_counts(partition: &BucketPartition, traces: &[ReplicateTrace]) -> Vec<u32> {
    let mut per_bucket = vec![traces.len() as u32; partition.buckets];
    for t in traces {
        for &b in &t.deleted {
            per_bucket[b] -= 1;
        }
    }
    partition.labels.iter().map(|&b| per_bucket[b]).collect()
}

fn finish(
    point: f64,
    estimates: &[f64],
    cfg: &JackknifeConfig,
    method: Method,
    estimand: Estimand,
) -> EstimateReport {
    let se = jackknife_se(estimates, cfg.buckets, cfg.deleted);
    let (ci_low, ci_high) = confidence_interval(point, se, cfg.buckets, cfg.alpha);
    EstimateReport {
        point,
        se,
        ci_low,
        ci_high,
        method,
        estimand,
        alpha: cfg.alpha,
        config_echo: cfg.echo(method != Method::Impute),
    }
}

/// One post-stratified replicate: boundaries from the deleted units, estimate
/// on the retained units.
fn ps_replicate(
    data: &ExperimentData,
    psf: &[f64],
    estimand: Estimand,
    rule: BoundaryRule,
    k: usize,
    split: Split,
    iteration: usize,
) -> Result<ReplicateTrace> {
    let strat_psf: Vec<f64> = split.strat.iter().map(|&i| psf[i]).collect();
    let (mut boundaries, degenerate) = match rule.boundaries(&strat_psf, k) {
        Ok(b) => (b, false),
        Err(Error::DegenerateSample | Error::TooFewDistinctValues { .. }) => {
            (StrataBoundaries::single(), true)
        }
        Err(e) => return Err(e),
    };
    let ret_psf: Vec<f64> = split.retained.iter().map(|&i| psf[i]).collect();
    let ret_w: Vec<u8> = split.retained.iter().map(|&i| data.w()[i]).collect();
    let ret_y: Vec<f64> = split.retained.iter().map(|&i| data.y()[i]).collect();

    let mut assignment = assign(&boundaries, &ret_psf, &ret_w);
    let merges = merge_degenerate(&mut boundaries, &mut assignment.counts);
    if merges > 0 {
        assignment = assign(&boundaries, &ret_psf, &ret_w);
    }
    let estimate = post_stratified_estimate(&summary_from(&ret_y, &ret_w, &assignment), estimand)?;
    Ok(ReplicateTrace {
        iteration,
        deleted: split.deleted,
        estimate,
        boundaries,
        merges,
        degenerate,
    })
}

/// Post-stratified jackknife on a caller-supplied factor.
pub fn post_stratified_jackknife(
    data: &ExperimentData,
    estimand: Estimand,
    cfg: &JackknifeConfig,
    psf: &[f64],
    rule: BoundaryRule,
    method: Method,
) -> Result<JackknifeRun> {
    if psf.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: psf.len(),
        });
    }
    let partition = make_partition(data, cfg)?;
    let traces = (0..cfg.iterations)
        .into_par_iter()
        .map(|m| {
            let split = draw_split(&partition, cfg, m);
            ps_replicate(data, psf, estimand, rule, cfg.strata, split, m)
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<f64> = traces.iter().map(|t| t.estimate).collect();
    let point = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let report = finish(point, &estimates, cfg, method, estimand);
    let inclusion = inclusion_counts(&partition, &traces);
    Ok(JackknifeRun {
        report,
        traces,
        inclusion,
        partition,
    })
}

/// The out-of-bag post-stratified jackknife: the factor is the prediction of
/// a regression fitted once on every control unit.
pub fn opj_run(
    data: &ExperimentData,
    estimand: Estimand,
    cfg: &JackknifeConfig,
) -> Result<JackknifeRun> {
    let model = fit_control_model(data)?;
    let psf = predict(&model, data)?;
    post_stratified_jackknife(
        data,
        estimand,
        cfg,
        &psf,
        BoundaryRule::RootCumulative,
        Method::Opj,
    )
}

/// Regression imputation with a delete-D jackknife standard error. Both arm
/// models are refitted on the retained units of every iteration; the point
/// estimate is the full-sample imputation estimate.
pub fn imputation_jackknife(
    data: &ExperimentData,
    estimand: Estimand,
    cfg: &JackknifeConfig,
) -> Result<EstimateReport> {
    let point = imputation_estimate(data, estimand)?;
    let partition = make_partition(data, cfg)?;
    let estimates = (0..cfg.iterations)
        .into_par_iter()
        .map(|m| {
            let split = draw_split(&partition, cfg, m);
            imputation_estimate(&data.subset(&split.retained)?, estimand)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(point, &estimates, cfg, Method::Impute, estimand))
}
