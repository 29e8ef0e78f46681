//! Rectified linear and logistic regression.
//!
//! Both solve the lambda-combined estimating equation over a numeric design
//! with a leading intercept column. Coefficient variances use the sandwich
//! form: inverse curvature around the score covariance, with the labeled and
//! unlabeled contributions entering independently.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{check_disjoint, check_lambda, EstimandKind};
use crate::frame::{LabeledSet, UnlabeledFrame};

/// Condition numbers above this mark the design as numerically singular.
const MAX_CONDITION: f64 = 1e12;

/// Logistic Newton solver tolerance on the max-norm of the combined score.
const SCORE_TOL: f64 = 1e-8;
const MAX_NEWTON_ITER: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct RegressionEstimate {
    pub coefficients: Vec<f64>,
    /// Per-coefficient sandwich variances.
    pub variances: Vec<f64>,
    pub lambda: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub estimand: EstimandKind,
}

struct Designs {
    x_h: DMatrix<f64>,
    x_u: DMatrix<f64>,
    y: DVector<f64>,
    yhat_h: DVector<f64>,
    yhat_u: DVector<f64>,
}

fn designs(h: &LabeledSet, u: &UnlabeledFrame) -> Result<Designs> {
    let rows_h = h.design_matrix()?;
    let rows_u = u.design_matrix()?;
    let d = rows_h[0].len();
    if rows_u[0].len() != d {
        return Err(Error::InvalidInput(format!(
            "labeled and unlabeled frames disagree on covariate dimension ({} vs {})",
            d - 1,
            rows_u[0].len() - 1
        )));
    }
    let flat = |rows: &[Vec<f64>]| -> DMatrix<f64> {
        DMatrix::from_row_iterator(rows.len(), d, rows.iter().flatten().copied())
    };
    Ok(Designs {
        x_h: flat(&rows_h),
        x_u: flat(&rows_u),
        y: DVector::from_vec(h.ys()),
        yhat_h: DVector::from_vec(h.yhats()),
        yhat_u: DVector::from_vec(u.yhats()),
    })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Sandwich covariance diagonal: `bread^-1 * meat * bread^-1`, where `meat`
/// combines the U-side and H-side score covariances.
fn sandwich_diag(
    bread_inv: &DMatrix<f64>,
    scores_u: &DMatrix<f64>,
    scores_h: &DMatrix<f64>,
    lambda: f64,
) -> Vec<f64> {
    let cov = |rows: &DMatrix<f64>| -> DMatrix<f64> {
        let n = rows.nrows() as f64;
        let mean = rows.row_mean();
        let centered = DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, j| rows[(i, j)] - mean[j]);
        centered.transpose() * &centered / (n - 1.0)
    };
    let n_u = scores_u.nrows() as f64;
    let n_h = scores_h.nrows() as f64;
    let meat = cov(scores_u) * (lambda * lambda / n_u) + cov(scores_h) / n_h;
    let full = bread_inv * meat * bread_inv.transpose();
    (0..full.nrows()).map(|i| full[(i, i)].max(0.0)).collect()
}

/// Rectified linear regression: solves `A(lambda) theta = b(lambda)` where
/// `A` mixes the second-moment matrices of U and H and `b` carries the
/// prediction-based moments corrected by the labeled sample. At `lambda = 0`
/// this is ordinary least squares on H.
pub fn rectified_linear_regression(
    h: &LabeledSet,
    u: &UnlabeledFrame,
    lambda: f64,
) -> Result<RegressionEstimate> {
    check_lambda(lambda)?;
    check_disjoint(h, u)?;
    let dz = designs(h, u)?;
    let n = h.n() as f64;
    let n_u = u.N() as f64;

    let a = (dz.x_u.transpose() * &dz.x_u) * (lambda / n_u)
        + (dz.x_h.transpose() * &dz.x_h) * ((1.0 - lambda) / n);
    let cond = condition_number(&a);
    if !cond.is_finite() || cond >= MAX_CONDITION {
        return Err(Error::SingularDesign { cond });
    }

    let b = (dz.x_u.transpose() * &dz.yhat_u) * (lambda / n_u)
        + (dz.x_h.transpose() * &dz.y) / n
        - (dz.x_h.transpose() * &dz.yhat_h) * (lambda / n);

    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularDesign { cond })?;
    let theta = &a_inv * b;

    // Per-observation scores at the solution.
    let resid_u = &dz.x_u * &theta - &dz.yhat_u;
    let scores_u = scale_rows(&dz.x_u, &resid_u);
    let resid_h = (&dz.x_h * &theta) * (1.0 - lambda) - &dz.y + &dz.yhat_h * lambda;
    let scores_h = scale_rows(&dz.x_h, &resid_h);
    let variances = sandwich_diag(&a_inv, &scores_u, &scores_h, lambda);

    Ok(RegressionEstimate {
        coefficients: theta.iter().copied().collect(),
        variances,
        lambda,
        n_labeled: h.n(),
        n_unlabeled: u.N(),
        estimand: EstimandKind::LinearRegression,
    })
}

fn scale_rows(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[i])
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Rectified logistic regression via damped Newton on the combined score.
/// Labeled responses must be 0/1; predictions are probabilities in [0, 1].
pub fn rectified_logistic_regression(
    h: &LabeledSet,
    u: &UnlabeledFrame,
    lambda: f64,
) -> Result<RegressionEstimate> {
    check_lambda(lambda)?;
    check_disjoint(h, u)?;
    let dz = designs(h, u)?;

    for (i, r) in h.records.iter().enumerate() {
        if r.y != 0.0 && r.y != 1.0 {
            return Err(Error::InvalidInput(format!(
                "logistic regression needs responses in {{0,1}}; row {i} has y = {}",
                r.y
            )));
        }
    }
    if dz
        .yhat_h
        .iter()
        .chain(dz.yhat_u.iter())
        .any(|p| !(0.0..=1.0).contains(p))
    {
        return Err(Error::InvalidInput(
            "logistic regression needs predictions in [0, 1]".into(),
        ));
    }

    let n = h.n() as f64;
    let n_u = u.N() as f64;
    let d = dz.x_h.ncols();

    let score = |theta: &DVector<f64>| -> DVector<f64> {
        let sig_u = (&dz.x_u * theta).map(sigmoid);
        let sig_h = (&dz.x_h * theta).map(sigmoid);
        let term_u = dz.x_u.transpose() * (&sig_u - &dz.yhat_u) / n_u;
        // (sig - y) - lambda (sig - yhat) = (1 - lambda) sig - y + lambda yhat
        let resid_h = sig_h * (1.0 - lambda) - &dz.y + &dz.yhat_h * lambda;
        let term_h = dz.x_h.transpose() * resid_h / n;
        term_u * lambda + term_h
    };

    let curvature = |theta: &DVector<f64>| -> DMatrix<f64> {
        let w_u = (&dz.x_u * theta).map(|z| {
            let s = sigmoid(z);
            s * (1.0 - s)
        });
        let w_h = (&dz.x_h * theta).map(|z| {
            let s = sigmoid(z);
            s * (1.0 - s)
        });
        let j_u = dz.x_u.transpose() * scale_rows(&dz.x_u, &w_u) / n_u;
        let j_h = dz.x_h.transpose() * scale_rows(&dz.x_h, &w_h) / n;
        j_u * lambda + j_h * (1.0 - lambda)
    };

    let mut theta = DVector::zeros(d);
    let mut s = score(&theta);
    let mut s_norm = s.amax();
    let mut iterations = 0;

    while s_norm >= SCORE_TOL {
        if iterations >= MAX_NEWTON_ITER {
            return Err(Error::NoConvergence {
                score_norm: s_norm,
                iterations,
            });
        }
        let j = curvature(&theta);
        let step = match j.clone().lu().solve(&(-&s)) {
            Some(step) if step.iter().all(|v| v.is_finite()) => step,
            _ => return Err(Error::CompleteSeparation),
        };

        // Backtracking damping: halve until the score norm decreases.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &theta + &step * alpha;
            let s_new = score(&candidate);
            let norm_new = s_new.amax();
            if norm_new < s_norm {
                theta = candidate;
                s = s_new;
                s_norm = norm_new;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                score_norm: s_norm,
                iterations,
            });
        }
        if theta.amax() > 1e8 || is_separated(&dz, &theta) {
            return Err(Error::CompleteSeparation);
        }
        iterations += 1;
    }

    let j = curvature(&theta);
    let cond = condition_number(&j);
    let j_inv = j.try_inverse().ok_or(Error::SingularDesign { cond })?;

    let sig_u = (&dz.x_u * &theta).map(sigmoid);
    let scores_u = scale_rows(&dz.x_u, &(&sig_u - &dz.yhat_u));
    let sig_h = (&dz.x_h * &theta).map(sigmoid);
    let resid_h = sig_h * (1.0 - lambda) - &dz.y + &dz.yhat_h * lambda;
    let scores_h = scale_rows(&dz.x_h, &resid_h);
    let variances = sandwich_diag(&j_inv, &scores_u, &scores_h, lambda);

    Ok(RegressionEstimate {
        coefficients: theta.iter().copied().collect(),
        variances,
        lambda,
        n_labeled: h.n(),
        n_unlabeled: u.N(),
        estimand: EstimandKind::LogisticRegression,
    })
}

/// Labels perfectly classified with saturated probabilities: the H-only
/// likelihood has no finite maximizer.
fn is_separated(dz: &Designs, theta: &DVector<f64>) -> bool {
    let margins = &dz.x_h * theta;
    let mut min_abs = f64::INFINITY;
    for (i, z) in margins.iter().enumerate() {
        let sign_ok = if dz.y[i] == 1.0 { *z > 0.0 } else { *z < 0.0 };
        if !sign_ok {
            return false;
        }
        min_abs = min_abs.min(z.abs());
    }
    min_abs > 15.0
}
