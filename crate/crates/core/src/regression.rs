//! Ordinary least squares on a subset of units.
//!
//! The design always carries an intercept column. Coefficients are obtained
//! from a thin QR factorization of the design; the rank check uses the
//! singular values of the triangular factor, which equal those of the design.

use nalgebra::{DMatrix, DVector};

use crate::data::ExperimentData;
use crate::error::{Arm, Error, Result};

/// Smallest-to-largest singular value ratio below which a design is singular.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Linear predictor: intercept first, then one coefficient per covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn new(coefficients: Vec<f64>) -> Self {
        LinearModel { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    /// Prediction for a single covariate row. The row length must be `q`.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.coefficients[1..]
            .iter()
            .zip(row)
            .fold(self.coefficients[0], |acc, (b, x)| acc + b * x)
    }
}

/// Fits `y ~ 1 + x` by least squares over the units in `subset`.
pub fn fit_ols(data: &ExperimentData, subset: &[usize]) -> Result<LinearModel> {
    let p = data.q() + 1;
    let n = subset.len();
    if n < p + 1 {
        return Err(Error::SubsetTooSmall {
            needed: p + 1,
            got: n,
        });
    }
    if let Some(&index) = subset.iter().find(|&&i| i >= data.len()) {
        return Err(Error::IndexOutOfRange {
            index,
            n: data.len(),
        });
    }
    let design = DMatrix::from_fn(n, p, |r, c| {
        if c == 0 {
            1.0
        } else {
            data.x_row(subset[r])[c - 1]
        }
    });
    let response = DVector::from_iterator(n, subset.iter().map(|&i| data.y()[i]));

    let qr = design.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| {
        (hi.max(s), lo.min(s))
    });
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio.is_nan() || ratio < RANK_TOLERANCE {
        return Err(Error::RankDeficient { ratio });
    }
    let qty = qr.q().transpose() * response;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { ratio })?;
    Ok(LinearModel::new(beta.iter().copied().collect()))
}

/// Fit on every control unit.
pub fn fit_control_model(data: &ExperimentData) -> Result<LinearModel> {
    fit_ols(data, &data.arm_indices(Arm::Control))
}

/// Separate fits on each arm, returned as `(control, treated)`.
pub fn fit_arm_models(data: &ExperimentData) -> Result<(LinearModel, LinearModel)> {
    let fit_arm = |arm| {
        fit_ols(data, &data.arm_indices(arm)).map_err(|e| Error::ArmModel {
            arm,
            source: Box::new(e),
        })
    };
    Ok((fit_arm(Arm::Control)?, fit_arm(Arm::Treated)?))
}

/// Predicted outcome for every unit.
pub fn predict(model: &LinearModel, data: &ExperimentData) -> Result<Vec<f64>> {
    if model.coefficients.len() != data.q() + 1 {
        return Err(Error::DimensionMismatch {
            expected: data.q() + 1,
            got: model.coefficients.len(),
        });
    }
    Ok((0..data.len())
        .map(|i| model.predict_row(data.x_row(i)))
        .collect())
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Solves `(X'X) b = X'y` with Gaussian elimination and partial pivoting.
    /// `rows` excludes the intercept column.
    pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = rows[0].len() + 1;
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &yi) in rows.iter().zip(y) {
            let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += z[i] * z[j];
                }
                a[i][p] += z[i] * yi;
            }
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    let pivot_row = a[col].clone();
                    for (v, pv) in a[r].iter_mut().zip(pivot_row).skip(col) {
                        *v -= f * pv;
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }
}
