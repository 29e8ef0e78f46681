//! Rectified estimators.
//!
//! The mean estimator interpolates between the human-only mean (`lambda = 0`)
//! and fully trusting model predictions (`lambda = 1`):
//!
//! `theta_hat = lambda * mean_U(yhat) + mean_H(y) - lambda * mean_H(yhat)`
//!
//! The same structure generalizes to any estimand defined by a monotone score
//! `g_theta(x, y)`: solve
//!
//! `lambda * mean_U g(theta, x, yhat) + mean_H g(theta, x, y) - lambda * mean_H g(theta, x, yhat) = 0`
//!
//! which reduces to the rectified mean for `g = theta - y` and covers
//! quantiles via the indicator score.

use std::collections::HashSet;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{AttrValue, LabeledSet, UnlabeledFrame};
use crate::stats::{mean, sample_var};
use crate::uncertainty;

/// What a `RectifiedEstimate` estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EstimandKind {
    Mean,
    Quantile(f64),
    LinearRegression,
    LogisticRegression,
    Custom,
}

impl std::fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimandKind::Mean => write!(f, "mean"),
            EstimandKind::Quantile(q) => write!(f, "quantile({q})"),
            EstimandKind::LinearRegression => write!(f, "linear-regression"),
            EstimandKind::LogisticRegression => write!(f, "logistic-regression"),
            EstimandKind::Custom => write!(f, "custom"),
        }
    }
}

/// A point estimate with its variance, sample sizes, and optional interval.
#[derive(Debug, Clone, Serialize)]
pub struct RectifiedEstimate {
    pub theta_hat: f64,
    pub lambda: f64,
    pub variance: f64,
    pub ci: Option<(f64, f64)>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub estimand: EstimandKind,
}

/// Score function for a custom scalar estimand: `(theta, covariates, y) -> real`,
/// monotone in `theta` over the search bracket.
pub type ScoreFn = Arc<dyn Fn(f64, &[AttrValue], f64) -> f64 + Send + Sync>;

/// Which estimating equation to solve.
#[derive(Clone)]
pub enum EstimandSpec {
    Mean,
    Quantile { q: f64 },
    Custom { score: ScoreFn },
}

impl std::fmt::Debug for EstimandSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimandSpec::Mean => write!(f, "Mean"),
            EstimandSpec::Quantile { q } => write!(f, "Quantile {{ q: {q} }}"),
            EstimandSpec::Custom { .. } => write!(f, "Custom {{ score: <fn> }}"),
        }
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

/// Respondent ids of H and U must not overlap: the variance decomposition
/// and the unbiasedness argument both require disjoint samples.
pub fn check_disjoint(h: &LabeledSet, u: &UnlabeledFrame) -> Result<()> {
    let hs: HashSet<&str> = h.ids().collect();
    let mut count = 0usize;
    let mut example = None;
    for id in u.ids() {
        if hs.contains(id) {
            count += 1;
            example.get_or_insert_with(|| id.to_string());
        }
    }
    if count > 0 {
        return Err(Error::Overlap {
            count,
            example: example.unwrap(),
        });
    }
    Ok(())
}

/// The rectified mean: synthetic mean over U plus the labeled bias correction.
pub fn rectified_mean(h: &LabeledSet, u: &UnlabeledFrame, lambda: f64) -> Result<RectifiedEstimate> {
    check_lambda(lambda)?;
    check_disjoint(h, u)?;

    let ys = h.ys();
    let yhats_h = h.yhats();
    let yhats_u = u.yhats();

    let theta_hat = lambda * mean(&yhats_u) + mean(&ys) - lambda * mean(&yhats_h);
    let variance = uncertainty::eq2_plugin(&ys, &yhats_h, sample_var(&yhats_u), u.N(), lambda);

    Ok(RectifiedEstimate {
        theta_hat,
        lambda,
        variance,
        ci: None,
        n_labeled: h.n(),
        n_unlabeled: u.N(),
        estimand: EstimandKind::Mean,
    })
}

/// The estimator that relies solely on the human sample.
pub fn classical_mean(h: &LabeledSet) -> Result<RectifiedEstimate> {
    let ys = h.ys();
    Ok(RectifiedEstimate {
        theta_hat: mean(&ys),
        lambda: 0.0,
        variance: sample_var(&ys) / ys.len() as f64,
        ci: None,
        n_labeled: h.n(),
        n_unlabeled: 0,
        estimand: EstimandKind::Mean,
    })
}

/// Solve the lambda-combined estimating equation for a scalar estimand.
pub fn solve_estimating_equation(
    spec: &EstimandSpec,
    h: &LabeledSet,
    u: &UnlabeledFrame,
    lambda: f64,
) -> Result<RectifiedEstimate> {
    match spec {
        EstimandSpec::Mean => rectified_mean(h, u, lambda),
        EstimandSpec::Quantile { q } => rectified_quantile(h, u, *q, lambda),
        EstimandSpec::Custom { score } => solve_custom(score, h, u, lambda),
    }
}

/// Combined score `S(theta)` for a custom estimand.
fn combined_score(
    score: &ScoreFn,
    h: &LabeledSet,
    u: &UnlabeledFrame,
    lambda: f64,
    theta: f64,
) -> f64 {
    let u_term = u
        .records
        .iter()
        .map(|r| score(theta, &r.covariates, r.yhat))
        .sum::<f64>()
        / u.N() as f64;
    let h_y = h
        .records
        .iter()
        .map(|r| score(theta, &r.covariates, r.y))
        .sum::<f64>()
        / h.n() as f64;
    let h_yhat = h
        .records
        .iter()
        .map(|r| score(theta, &r.covariates, r.yhat))
        .sum::<f64>()
        / h.n() as f64;
    lambda * u_term + h_y - lambda * h_yhat
}

const MAX_DOUBLINGS: u32 = 64;

fn solve_custom(
    score: &ScoreFn,
    h: &LabeledSet,
    u: &UnlabeledFrame,
    lambda: f64,
) -> Result<RectifiedEstimate> {
    check_lambda(lambda)?;
    check_disjoint(h, u)?;

    let eval = |theta: f64| combined_score(score, h, u, lambda, theta);

    // Bracket a sign change by doubling outward from the data range.
    let values: Vec<f64> = h
        .ys()
        .into_iter()
        .chain(h.yhats())
        .chain(u.yhats())
        .collect();
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    let mut s_lo = eval(lo);
    let mut s_hi = eval(hi);
    let mut width = hi - lo;
    let mut doublings = 0;
    while s_lo * s_hi > 0.0 {
        if doublings >= MAX_DOUBLINGS {
            return Err(Error::NoBracket {
                doublings: MAX_DOUBLINGS,
            });
        }
        lo -= width;
        hi += width;
        width *= 2.0;
        s_lo = eval(lo);
        s_hi = eval(hi);
        doublings += 1;
    }

    // The score must be monotone over the bracket; check by sampling.
    let samples: Vec<f64> = (0..=16)
        .map(|t| eval(lo + (hi - lo) * t as f64 / 16.0))
        .collect();
    let scale = samples.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    let slack = 1e-9 * scale.max(1e-300);
    let nonincreasing = samples.windows(2).all(|w| w[1] <= w[0] + slack);
    let nondecreasing = samples.windows(2).all(|w| w[1] >= w[0] - slack);
    if !nonincreasing && !nondecreasing {
        return Err(Error::NonMonotoneScore);
    }

    // Bisection to machine precision.
    let (mut a, mut b, mut s_a) = (lo, hi, s_lo);
    if s_a == 0.0 {
        b = a;
    }
    if s_hi == 0.0 {
        a = b;
    }
    for _ in 0..200 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        let mid = 0.5 * (a + b);
        let s_mid = eval(mid);
        if s_mid == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if s_mid * s_a > 0.0 {
            a = mid;
            s_a = s_mid;
        } else {
            b = mid;
        }
    }
    let theta_hat = 0.5 * (a + b);

    let variance = sandwich_scalar(score, h, u, lambda, theta_hat, &eval);

    Ok(RectifiedEstimate {
        theta_hat,
        lambda,
        variance,
        ci: None,
        n_labeled: h.n(),
        n_unlabeled: u.N(),
        estimand: EstimandKind::Custom,
    })
}

/// Sandwich variance for a scalar estimand: score variance over slope squared,
/// slope from a symmetric difference of the combined score.
fn sandwich_scalar(
    score: &ScoreFn,
    h: &LabeledSet,
    u: &UnlabeledFrame,
    lambda: f64,
    theta: f64,
    eval: &dyn Fn(f64) -> f64,
) -> f64 {
    let g_u: Vec<f64> = u
        .records
        .iter()
        .map(|r| score(theta, &r.covariates, r.yhat))
        .collect();
    let g_h: Vec<f64> = h
        .records
        .iter()
        .map(|r| score(theta, &r.covariates, r.y) - lambda * score(theta, &r.covariates, r.yhat))
        .collect();
    let score_var =
        lambda * lambda * sample_var(&g_u) / u.N() as f64 + sample_var(&g_h) / h.n() as f64;

    let step = 1e-6 * theta.abs().max(1.0);
    let slope = ((eval(theta + step) - eval(theta - step)) / (2.0 * step)).abs();
    score_var / slope.max(1e-12).powi(2)
}

/// The combined quantile score over pre-sorted value arrays, scanned across
/// the sorted multiset of observed values. Returns the smallest candidate at
/// which the score crosses or touches zero. The score equals `q - 1 < 0` at
/// the largest candidate, so the scan always terminates.
pub(crate) fn quantile_scan(
    ys: &[f64],
    yhats_h: &[f64],
    yhats_u: &[f64],
    q: f64,
    lambda: f64,
) -> f64 {
    let frac_le = |sorted: &[f64], theta: f64| -> f64 {
        sorted.partition_point(|v| *v <= theta) as f64 / sorted.len() as f64
    };
    let combined = |theta: f64| -> f64 {
        q - (lambda * frac_le(yhats_u, theta) + frac_le(ys, theta)
            - lambda * frac_le(yhats_h, theta))
    };
    let mut candidates: Vec<f64> = ys.iter().chain(yhats_h).chain(yhats_u).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates
        .into_iter()
        .find(|&c| combined(c) <= 0.0)
        .expect("combined quantile score is negative at the maximum")
}

/// Rectified quantile: the indicator-score estimating equation restricted to
/// the observed candidate values.
pub fn rectified_quantile(
    h: &LabeledSet,
    u: &UnlabeledFrame,
    q: f64,
    lambda: f64,
) -> Result<RectifiedEstimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!(
            "quantile level must lie in (0, 1), got {q}"
        )));
    }
    check_lambda(lambda)?;
    check_disjoint(h, u)?;

    let mut ys = h.ys();
    let mut yhats_h = h.yhats();
    let mut yhats_u = u.yhats();
    ys.sort_by(f64::total_cmp);
    yhats_h.sort_by(f64::total_cmp);
    yhats_u.sort_by(f64::total_cmp);

    let frac_le = |sorted: &[f64], theta: f64| -> f64 {
        sorted.partition_point(|v| *v <= theta) as f64 / sorted.len() as f64
    };
    let combined = |theta: f64| -> f64 {
        q - (lambda * frac_le(&yhats_u, theta) + frac_le(&ys, theta)
            - lambda * frac_le(&yhats_h, theta))
    };

    let theta_hat = quantile_scan(&ys, &yhats_h, &yhats_u, q, lambda);

    // Sandwich variance: indicator-score variance over a kernel-smoothed
    // slope of the combined step function. Prefer the bootstrap for
    // reporting; this plug-in is an order-of-magnitude diagnostic.
    let pooled: Vec<f64> = ys.iter().chain(&yhats_h).chain(&yhats_u).copied().collect();
    let pooled_sd = sample_var(&pooled).sqrt();
    let m = (h.n() + u.N()) as f64;
    let bandwidth = (1.06 * pooled_sd * m.powf(-0.2)).max(1e-9);
    let slope =
        ((combined(theta_hat - bandwidth) - combined(theta_hat + bandwidth)) / (2.0 * bandwidth))
            .abs();

    let g_u: Vec<f64> = u
        .records
        .iter()
        .map(|r| if r.yhat <= theta_hat { 1.0 } else { 0.0 })
        .collect();
    let g_h: Vec<f64> = h
        .records
        .iter()
        .map(|r| {
            let gy = if r.y <= theta_hat { 1.0 } else { 0.0 };
            let gyh = if r.yhat <= theta_hat { 1.0 } else { 0.0 };
            gy - lambda * gyh
        })
        .collect();
    let score_var =
        lambda * lambda * sample_var(&g_u) / u.N() as f64 + sample_var(&g_h) / h.n() as f64;
    let variance = score_var / slope.max(1e-12).powi(2);

    Ok(RectifiedEstimate {
        theta_hat,
        lambda,
        variance,
        ci: None,
        n_labeled: h.n(),
        n_unlabeled: u.N(),
        estimand: EstimandKind::Quantile(q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{LabeledRecord, UnlabeledRecord};

    pub(crate) fn labeled(pairs: &[(f64, f64)]) -> LabeledSet {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(y, yhat))| LabeledRecord {
                respondent_id: format!("h{i}"),
                covariates: vec![],
                groups: vec![],
                y,
                yhat,
            })
            .collect();
        LabeledSet::new(vec![], vec![], records).unwrap()
    }

    pub(crate) fn unlabeled(yhats: &[f64]) -> UnlabeledFrame {
        let records = yhats
            .iter()
            .enumerate()
            .map(|(i, &yhat)| UnlabeledRecord {
                respondent_id: format!("u{i}"),
                covariates: vec![],
                groups: vec![],
                yhat,
            })
            .collect();
        UnlabeledFrame::new(vec![], vec![], records).unwrap()
    }

    fn mean_score() -> EstimandSpec {
        EstimandSpec::Custom {
            score: Arc::new(|theta, _x, y| theta - y),
        }
    }

    #[test]
    fn rectified_mean_hand_arithmetic() {
        // H = {(2,1),(4,3)}, U yhat = {1,3,5}, lambda = 1:
        // theta = mean_U(yhat) + mean_H(y) - mean_H(yhat) = 3 + 3 - 2 = 4
        let h = labeled(&[(2.0, 1.0), (4.0, 3.0)]);
        let u = unlabeled(&[1.0, 3.0, 5.0]);
        let est = rectified_mean(&h, &u, 1.0).unwrap();
        assert_eq!(est.theta_hat, 4.0);
        assert_eq!(est.n_labeled, 2);
        assert_eq!(est.n_unlabeled, 3);
    }

    #[test]
    fn lambda_zero_is_the_human_mean() {
        let h = labeled(&[(2.0, 100.0), (4.0, -50.0), (9.0, 7.0)]);
        let u = unlabeled(&[1.0, 2.0]);
        let est = rectified_mean(&h, &u, 0.0).unwrap();
        assert_eq!(est.theta_hat, 5.0);
    }

    #[test]
    fn perfect_predictions_reduce_to_imputed_mean() {
        let h = labeled(&[(2.0, 2.0), (4.0, 4.0), (6.0, 6.0)]);
        let u = unlabeled(&[10.0, 20.0]);
        let est = rectified_mean(&h, &u, 1.0).unwrap();
        assert_eq!(est.theta_hat, 15.0);
    }

    #[test]
    fn overlapping_ids_are_rejected() {
        let h = labeled(&[(1.0, 1.0), (2.0, 2.0)]);
        let mut u = unlabeled(&[3.0]);
        u.records[0].respondent_id = "h1".into();
        assert!(matches!(
            rectified_mean(&h, &u, 0.5),
            Err(Error::Overlap { count: 1, .. })
        ));
    }

    #[test]
    fn classical_mean_variance() {
        let h = labeled(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let est = classical_mean(&h).unwrap();
        assert_eq!(est.theta_hat, 2.0);
        assert!((est.variance - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(est.lambda, 0.0);
        assert_eq!(est.n_unlabeled, 0);

        let constant = labeled(&[(5.0, 0.0), (5.0, 0.0), (5.0, 0.0)]);
        let est = classical_mean(&constant).unwrap();
        assert_eq!(est.theta_hat, 5.0);
        assert_eq!(est.variance, 0.0);
    }

    #[test]
    fn mean_score_reduces_to_rectified_mean() {
        let h = labeled(&[(2.0, 1.0), (4.0, 3.0)]);
        let u = unlabeled(&[1.0, 3.0, 5.0]);
        let est = solve_estimating_equation(&mean_score(), &h, &u, 1.0).unwrap();
        assert!((est.theta_hat - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_score_is_detected() {
        // oscillating score: crosses zero inside the bracket but dips on the
        // way up
        let spec = EstimandSpec::Custom {
            score: Arc::new(|theta, _x, y| theta - y + 2.0 * theta.sin()),
        };
        let h = labeled(&[(0.0, 0.0), (5.0, 5.0)]);
        let u = unlabeled(&[2.5]);
        assert!(matches!(
            solve_estimating_equation(&spec, &h, &u, 0.0),
            Err(Error::NonMonotoneScore)
        ));
    }

    #[test]
    fn bracket_failure_is_reported() {
        // Score bounded away from zero: no root anywhere.
        let spec = EstimandSpec::Custom {
            score: Arc::new(|_theta, _x, _y| 1.0),
        };
        let h = labeled(&[(0.0, 0.0), (1.0, 1.0)]);
        let u = unlabeled(&[0.5]);
        assert!(matches!(
            solve_estimating_equation(&spec, &h, &u, 0.5),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn quantile_lambda_zero_examples() {
        // q = 0.25 on {1,2,3,4}: smallest crossing is 1
        let h = labeled(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]);
        let u = unlabeled(&[1.0]);
        let est = rectified_quantile(&h, &u, 0.25, 0.0).unwrap();
        assert_eq!(est.theta_hat, 1.0);

        // median of odd sample
        let h = labeled(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let est = rectified_quantile(&h, &u, 0.5, 0.0).unwrap();
        assert_eq!(est.theta_hat, 2.0);
    }

    #[test]
    fn quantile_imputed_with_perfect_predictions() {
        // yhat = y on H, U yhat = {10,20,30}: lambda=1 median is 20.
        let h = labeled(&[(1.0, 1.0), (2.0, 2.0)]);
        let u = unlabeled(&[10.0, 20.0, 30.0]);
        let est = rectified_quantile(&h, &u, 0.5, 1.0).unwrap();
        assert_eq!(est.theta_hat, 20.0);
    }

    #[test]
    fn quantile_perfect_predictions_match_lambda_zero() {
        // yhat = y on H and U yhat equal to H's y values: both terms coincide.
        let h = labeled(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (7.0, 7.0)]);
        let u = unlabeled(&[1.0, 2.0, 3.0, 7.0]);
        for q in [0.2, 0.5, 0.8] {
            let a = rectified_quantile(&h, &u, q, 0.0).unwrap();
            let b = rectified_quantile(&h, &u, q, 1.0).unwrap();
            assert_eq!(a.theta_hat, b.theta_hat, "q = {q}");
        }
    }
}
