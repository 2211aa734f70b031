//! Baseline, regression-imputation and post-stratified point estimators.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{g_apply, Estimand, EstimateReport, ExperimentData, Method};
use crate::error::{Arm, Error, Result};
use crate::regression::fit_arm_models;
use crate::stratify::StrataAssignment;

/// Per-arm sums and counts in unit order.
fn arm_moments(y: &[f64], w: &[u8]) -> [(f64, usize); 2] {
    let mut m = [(0.0, 0usize); 2];
    for (&v, &t) in y.iter().zip(w) {
        m[t as usize].0 += v;
        m[t as usize].1 += 1;
    }
    m
}

fn arm_means(y: &[f64], w: &[u8]) -> Result<[f64; 2]> {
    let m = arm_moments(y, w);
    if m[0].1 == 0 {
        return Err(Error::EmptyArm(Arm::Control));
    }
    if m[1].1 == 0 {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    Ok([m[0].0 / m[0].1 as f64, m[1].0 / m[1].1 as f64])
}

/// `g` of the two arm means over the given outcomes.
pub(crate) fn baseline_from(y: &[f64], w: &[u8], estimand: Estimand) -> Result<f64> {
    let [m0, m1] = arm_means(y, w)?;
    g_apply(estimand, m0, m1)
}

/// Difference or ratio of the raw arm means.
pub fn baseline_estimate(data: &ExperimentData, estimand: Estimand) -> Result<f64> {
    baseline_from(data.y(), data.w(), estimand)
}

/// Closed-form standard error of the baseline estimate: the two-sample
/// formula for a difference, the delta method for a ratio.
pub fn baseline_se(data: &ExperimentData, estimand: Estimand) -> Result<f64> {
    let (y, w) = (data.y(), data.w());
    let [m0, m1] = arm_means(y, w)?;
    let mut ss = [0.0; 2];
    let mut n = [0usize; 2];
    for (&v, &t) in y.iter().zip(w) {
        let d = v - [m0, m1][t as usize];
        ss[t as usize] += d * d;
        n[t as usize] += 1;
    }
    if let Some(&got) = n.iter().find(|&&c| c < 2) {
        return Err(Error::SubsetTooSmall { needed: 2, got });
    }
    let (n0, n1) = (n[0] as f64, n[1] as f64);
    let (v0, v1) = (ss[0] / (n0 - 1.0), ss[1] / (n1 - 1.0));
    match estimand {
        Estimand::Difference => Ok((v0 / n0 + v1 / n1).sqrt()),
        Estimand::Ratio => {
            // Reuse the zero guard of the estimand itself.
            g_apply(estimand, m0, m1)?;
            let m0sq = m0 * m0;
            Ok((v1 / (n1 * m0sq) + m1 * m1 * v0 / (n0 * m0sq * m0sq)).sqrt())
        }
    }
}

/// Baseline estimate with its closed-form SE and a normal-theory interval.
pub fn baseline_report(
    data: &ExperimentData,
    estimand: Estimand,
    alpha: f64,
) -> Result<EstimateReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let point = baseline_estimate(data, estimand)?;
    let se = baseline_se(data, estimand)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let half = if se == 0.0 { 0.0 } else { z * se };
    Ok(EstimateReport {
        point,
        se,
        ci_low: point - half,
        ci_high: point + half,
        method: Method::Base,
        estimand,
        alpha,
        config_echo: BTreeMap::new(),
    })
}

/// Average over units of `g(Y_i(0), Y_i(1))` with both potential outcomes
/// predicted from separate arm regressions, evaluated literally unit by unit.
///
/// For a ratio this average is undefined whenever a predicted control outcome
/// sits near zero, and its sampling distribution is heavy-tailed when the
/// control predictions straddle zero. [`imputation_estimate`] is the
/// estimator used everywhere else.
pub fn imputation_estimate_unitwise(data: &ExperimentData, estimand: Estimand) -> Result<f64> {
    let (m0, m1) = fit_arm_models(data)?;
    let mut acc = 0.0;
    for i in 0..data.len() {
        let row = data.x_row(i);
        acc += g_apply(estimand, m0.predict_row(row), m1.predict_row(row))?;
    }
    Ok(acc / data.len() as f64)
}

/// Regression imputation estimate: `g` of the average predicted control and
/// treated outcomes over all units.
///
/// For a difference this is identical to the unit-wise average of
/// [`imputation_estimate_unitwise`].
pub fn imputation_estimate(data: &ExperimentData, estimand: Estimand) -> Result<f64> {
    let (m0, m1) = fit_arm_models(data)?;
    let (mut s0, mut s1) = (0.0, 0.0);
    for i in 0..data.len() {
        let row = data.x_row(i);
        s0 += m0.predict_row(row);
        s1 += m1.predict_row(row);
    }
    let n = data.len() as f64;
    g_apply(estimand, s0 / n, s1 / n)
}

/// Stratum weights and arm means.
#[derive(Debug, Clone, PartialEq)]
pub struct StrataSummary {
    /// `n_k / N`
    pub weights: Vec<f64>,
    /// `[mean over control, mean over treated]`, `None` for an empty cell.
    pub means: Vec<[Option<f64>; 2]>,
    pub counts: Vec<[usize; 2]>,
}

impl StrataSummary {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Post-stratified arm means `sum_k p_k Ybar_k(w)`.
    pub fn stratified_means(&self) -> Result<[f64; 2]> {
        let mut out = [0.0; 2];
        for (k, (p, means)) in self.weights.iter().zip(&self.means).enumerate() {
            for (arm, slot) in [Arm::Control, Arm::Treated].into_iter().zip(out.iter_mut()) {
                let m =
                    means[arm.indicator() as usize].ok_or(Error::EmptyCell { stratum: k, arm })?;
                *slot += p * m;
            }
        }
        Ok(out)
    }
}

pub(crate) fn summary_from(y: &[f64], w: &[u8], assignment: &StrataAssignment) -> StrataSummary {
    let k = assignment.k();
    let mut sums = vec![[0.0; 2]; k];
    for ((&v, &t), &l) in y.iter().zip(w).zip(&assignment.labels) {
        sums[l][t as usize] += v;
    }
    let n = assignment.len() as f64;
    let weights = (0..k).map(|s| assignment.n(s) as f64 / n).collect();
    let means = sums
        .iter()
        .zip(&assignment.counts)
        .map(|(s, c)| [0, 1].map(|a| (c[a] > 0).then(|| s[a] / c[a] as f64)))
        .collect();
    StrataSummary {
        weights,
        means,
        counts: assignment.counts.clone(),
    }
}

/// Weights and per-arm means for each stratum.
pub fn strata_summary(data: &ExperimentData, assignment: &StrataAssignment) -> StrataSummary {
    summary_from(data.y(), data.w(), assignment)
}

/// `g` applied to the two post-stratified means.
pub fn post_stratified_estimate(summary: &StrataSummary, estimand: Estimand) -> Result<f64> {
    let [m0, m1] = summary.stratified_means()?;
    g_apply(estimand, m0, m1)
}

/// Within- and between-strata outcome variances on observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    /// Sample variance per stratum and arm; `None` when the cell has fewer
    /// than two units.
    pub within: Vec<[Option<f64>; 2]>,
    /// `(1 / (N - 1)) sum_k n_k (Ybar_k(w) - Ybar(w))^2` per arm; `None`
    /// when some stratum has no units of that arm.
    pub between: [Option<f64>; 2],
}

/// Diagnostic variance split. Never used by any estimator.
pub fn variance_decomposition(
    data: &ExperimentData,
    assignment: &StrataAssignment,
) -> VarianceDecomposition {
    let (y, w) = (data.y(), data.w());
    let summary = strata_summary(data, assignment);
    let k = assignment.k();
    let mut ss = vec![[0.0; 2]; k];
    for ((&v, &t), &l) in y.iter().zip(w).zip(&assignment.labels) {
        if let Some(m) = summary.means[l][t as usize] {
            ss[l][t as usize] += (v - m) * (v - m);
        }
    }
    let within = ss
        .iter()
        .zip(&assignment.counts)
        .map(|(s, c)| [0, 1].map(|a| (c[a] >= 2).then(|| s[a] / (c[a] - 1) as f64)))
        .collect();

    let overall = arm_moments(y, w);
    let n = data.len() as f64;
    let between = [0, 1].map(|a| {
        let mean = overall[a].0 / overall[a].1 as f64;
        (0..k)
            .map(|s| summary.means[s][a].map(|m| assignment.n(s) as f64 * (m - mean).powi(2)))
            .sum::<Option<f64>>()
            .map(|t| t / (n - 1.0))
    });
    VarianceDecomposition { within, between }
}
