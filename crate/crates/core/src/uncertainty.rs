//! Analytic variance, confidence intervals, the effectiveness condition, and
//! coverage accounting.
//!
//! The analytic variance of the rectified mean decomposes into the
//! variability of synthetic predictions and the prediction-error variance on
//! the labeled set:
//!
//! `Var(theta_hat) = lambda^2 Var_U(yhat) / N + Var_H(y - lambda yhat) / n`
//!
//! No finite-population correction is applied; U is modeled as an i.i.d.
//! sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{check_disjoint, check_lambda, EstimandKind, RectifiedEstimate};
use crate::frame::{LabeledSet, UnlabeledFrame};
use crate::rng::substream;
use crate::stats::{mean, normal_quantile, quantile_sorted, sample_var};
use crate::tuning::TuningMoments;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    AnalyticNormal,
    BootstrapPercentile,
}

impl std::fmt::Display for CiMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CiMethod::AnalyticNormal => write!(f, "analytic-normal"),
            CiMethod::BootstrapPercentile => write!(f, "bootstrap-percentile"),
        }
    }
}

/// How to build a confidence interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub level: f64,
    pub method: CiMethod,
    pub bootstrap_b: usize,
    pub seed: u64,
    /// Re-tune lambda inside each bootstrap resample instead of holding it
    /// fixed. Off by default: the resampling target is the reported
    /// estimator. Exposed for sensitivity analysis.
    pub retune_lambda: bool,
}

impl Default for IntervalSpec {
    fn default() -> Self {
        IntervalSpec {
            level: 0.95,
            method: CiMethod::AnalyticNormal,
            bootstrap_b: 2000,
            seed: 0,
            retune_lambda: false,
        }
    }
}

impl IntervalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "interval level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.bootstrap_b < 100 {
            return Err(Error::InvalidInput(format!(
                "bootstrap_b must be at least 100, got {}",
                self.bootstrap_b
            )));
        }
        Ok(())
    }
}

/// Eq.-(2) plug-in from raw parts; shared by the estimators.
pub(crate) fn eq2_plugin(ys: &[f64], yhats_h: &[f64], v_u: f64, n_u: usize, lambda: f64) -> f64 {
    let diffs: Vec<f64> = ys
        .iter()
        .zip(yhats_h)
        .map(|(y, yh)| y - lambda * yh)
        .collect();
    lambda * lambda * v_u / n_u as f64 + sample_var(&diffs) / ys.len() as f64
}

/// Plug-in analytic variance of the rectified mean at the given lambda.
pub fn analytic_variance(h: &LabeledSet, u: &UnlabeledFrame, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_disjoint(h, u)?;
    Ok(eq2_plugin(
        &h.ys(),
        &h.yhats(),
        sample_var(&u.yhats()),
        u.N(),
        lambda,
    ))
}

/// Confidence interval for an estimate produced from the same (H, U) pair.
pub fn confidence_interval(
    est: &RectifiedEstimate,
    h: &LabeledSet,
    u: &UnlabeledFrame,
    spec: &IntervalSpec,
) -> Result<(f64, f64)> {
    spec.validate()?;
    match spec.method {
        CiMethod::AnalyticNormal => {
            let variance = match est.estimand {
                EstimandKind::Mean => analytic_variance(h, u, est.lambda)?,
                // Eq. (2) is mean-specific; other estimands carry their own
                // sandwich variance.
                _ => est.variance,
            };
            let z = normal_quantile(0.5 * (1.0 + spec.level));
            let half = z * variance.sqrt();
            Ok((est.theta_hat - half, est.theta_hat + half))
        }
        CiMethod::BootstrapPercentile => bootstrap_percentile(est, h, u, spec),
    }
}

/// Percentile bootstrap: resample H (paired, size n) and U (size N)
/// independently B times, re-estimate with the same fixed lambda, and take
/// the empirical percentile interval. Each resample draws from its own
/// substream, so results do not depend on scheduling.
fn bootstrap_percentile(
    est: &RectifiedEstimate,
    h: &LabeledSet,
    u: &UnlabeledFrame,
    spec: &IntervalSpec,
) -> Result<(f64, f64)> {
    let ys = h.ys();
    let yhats_h = h.yhats();
    let yhats_u = u.yhats();
    let n = ys.len();
    let n_u = yhats_u.len();
    let lambda = est.lambda;
    let estimand = est.estimand;

    let mut thetas: Vec<f64> = (0..spec.bootstrap_b)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(spec.seed, "bootstrap", b as u64);
            let mut y_star = Vec::with_capacity(n);
            let mut yh_star = Vec::with_capacity(n);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                y_star.push(ys[i]);
                yh_star.push(yhats_h[i]);
            }
            let mut yu_star = Vec::with_capacity(n_u);
            for _ in 0..n_u {
                yu_star.push(yhats_u[rng.random_range(0..n_u)]);
            }

            match estimand {
                EstimandKind::Quantile(q) => {
                    quantile_point(&mut y_star, &mut yh_star, &mut yu_star, q, lambda)
                }
                _ => {
                    let lam = if spec.retune_lambda {
                        TuningMoments::from_parts(&y_star, &yh_star, &yu_star)
                            .choose()
                            .lambda
                    } else {
                        lambda
                    };
                    lam * mean(&yu_star) + mean(&y_star) - lam * mean(&yh_star)
                }
            }
        })
        .collect();

    thetas.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - spec.level);
    Ok((
        quantile_sorted(&thetas, alpha),
        quantile_sorted(&thetas, 1.0 - alpha),
    ))
}

/// Quantile point estimate from raw vectors (sorts its inputs in place).
/// The bootstrap cannot rebuild frames from resampled rows without violating
/// the unique-id invariant, so it works on values directly.
fn quantile_point(ys: &mut [f64], yhats_h: &mut [f64], yhats_u: &mut [f64], q: f64, lambda: f64) -> f64 {
    ys.sort_by(f64::total_cmp);
    yhats_h.sort_by(f64::total_cmp);
    yhats_u.sort_by(f64::total_cmp);
    crate::estimator::quantile_scan(ys, yhats_h, yhats_u, q, lambda)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectivenessCheck {
    /// Whether the rectified estimator is strictly more precise than the
    /// human-only estimator (the stopping rule for using synthetic data).
    pub effective: bool,
    /// Plug-in variance of the rectified estimator.
    pub lhs: f64,
    /// Variance of the human-only estimator, `Var_H(y) / n`.
    pub rhs: f64,
}

/// The effectiveness condition: synthetic data helps only when the plug-in
/// variance beats the human-only variance strictly.
pub fn effectiveness_check(
    h: &LabeledSet,
    u: &UnlabeledFrame,
    lambda: f64,
) -> Result<EffectivenessCheck> {
    let lhs = analytic_variance(h, u, lambda)?;
    let ys = h.ys();
    let rhs = sample_var(&ys) / ys.len() as f64;
    Ok(EffectivenessCheck {
        effective: lhs < rhs,
        lhs,
        rhs,
    })
}

/// Fraction of intervals containing the true value (closed endpoints).
pub fn record_coverage(intervals: &[(f64, f64)], theta_star: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::EmptyInput("coverage needs at least one interval".into()));
    }
    let covered = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= theta_star && theta_star <= *hi)
        .count();
    Ok(covered as f64 / intervals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::rectified_mean;
    use crate::frame::{LabeledRecord, LabeledSet, UnlabeledFrame, UnlabeledRecord};
    use crate::rng::substream;
    use rand_distr::StandardNormal;

    fn frames(pairs: &[(f64, f64)], u_yhats: &[f64]) -> (LabeledSet, UnlabeledFrame) {
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
        let h = LabeledSet::new(vec![], vec![], records).unwrap();
        let records = u_yhats
            .iter()
            .enumerate()
            .map(|(i, &yhat)| UnlabeledRecord {
                respondent_id: format!("u{i}"),
                covariates: vec![],
                groups: vec![],
                yhat,
            })
            .collect();
        let u = UnlabeledFrame::new(vec![], vec![], records).unwrap();
        (h, u)
    }

    #[test]
    fn lambda_zero_reduces_to_human_variance() {
        let (h, u) = frames(&[(1.0, 9.0), (2.0, -3.0), (4.0, 0.0)], &[1.0, 2.0]);
        let v = analytic_variance(&h, &u, 0.0).unwrap();
        let ys = h.ys();
        assert_eq!(v, sample_var(&ys) / 3.0);
    }

    #[test]
    fn perfect_predictions_and_constant_u_give_zero_variance() {
        let (h, u) = frames(&[(1.0, 1.0), (2.0, 2.0)], &[7.0, 7.0, 7.0]);
        assert_eq!(analytic_variance(&h, &u, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn analytic_interval_width_at_unit_variance() {
        // variance 1 at level 0.95: width = 2 * 1.959964
        let (h, u) = frames(&[(0.0, 0.0), (2.0, 0.0)], &[1.0, 1.0]);
        // sample_var(y) = 2, n = 2 -> variance 1 at lambda = 0
        let est = rectified_mean(&h, &u, 0.0).unwrap();
        let spec = IntervalSpec::default();
        let (lo, hi) = confidence_interval(&est, &h, &u, &spec).unwrap();
        assert!(((hi - lo) - 2.0 * 1.959964).abs() < 1e-5);
    }

    #[test]
    fn zero_variance_gives_degenerate_interval() {
        let (h, u) = frames(&[(3.0, 3.0), (3.0, 3.0)], &[3.0, 3.0]);
        let est = rectified_mean(&h, &u, 1.0).unwrap();
        for method in [CiMethod::AnalyticNormal, CiMethod::BootstrapPercentile] {
            let spec = IntervalSpec {
                method,
                bootstrap_b: 200,
                ..Default::default()
            };
            let (lo, hi) = confidence_interval(&est, &h, &u, &spec).unwrap();
            assert_eq!((lo, hi), (est.theta_hat, est.theta_hat), "{method}");
        }
    }

    #[test]
    fn bootstrap_is_bit_reproducible() {
        let mut rng = substream(42, "boot-test", 0);
        let pairs: Vec<(f64, f64)> = (0..60)
            .map(|_| {
                let y: f64 = rng.sample(StandardNormal);
                (y, y + 0.5 * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let u_yhats: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (h, u) = frames(&pairs, &u_yhats);
        let est = rectified_mean(&h, &u, 0.6).unwrap();
        let spec = IntervalSpec {
            method: CiMethod::BootstrapPercentile,
            bootstrap_b: 500,
            seed: 9,
            ..Default::default()
        };
        let a = confidence_interval(&est, &h, &u, &spec).unwrap();
        let b = confidence_interval(&est, &h, &u, &spec).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn bootstrap_and_analytic_widths_agree_on_well_behaved_data() {
        let mut rng = substream(7, "boot-width", 0);
        let pairs: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let y: f64 = rng.sample(StandardNormal);
                (y, y + 0.4 * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let u_yhats: Vec<f64> = (0..2000)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.08)
            .collect();
        let (h, u) = frames(&pairs, &u_yhats);
        let est = rectified_mean(&h, &u, 0.8).unwrap();

        let analytic = confidence_interval(&est, &h, &u, &IntervalSpec::default()).unwrap();
        let boot = confidence_interval(
            &est,
            &h,
            &u,
            &IntervalSpec {
                method: CiMethod::BootstrapPercentile,
                bootstrap_b: 2000,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let wa = analytic.1 - analytic.0;
        let wb = boot.1 - boot.0;
        assert!(
            (wa - wb).abs() / wa < 0.15,
            "analytic width {wa}, bootstrap width {wb}"
        );
    }

    #[test]
    fn effectiveness_boundary_at_lambda_zero() {
        let (h, u) = frames(&[(1.0, 3.0), (2.0, 1.0), (3.0, 2.0)], &[1.0, 2.0]);
        let check = effectiveness_check(&h, &u, 0.0).unwrap();
        assert_eq!(check.lhs, check.rhs);
        assert!(!check.effective);
    }

    #[test]
    fn accurate_predictions_are_effective() {
        let pairs: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, i as f64)).collect();
        let u_yhats: Vec<f64> = (0..5000).map(|i| (i % 50) as f64).collect();
        let (h, u) = frames(&pairs, &u_yhats);
        let check = effectiveness_check(&h, &u, 1.0).unwrap();
        assert!(check.effective);
        assert!(check.lhs < check.rhs);
    }

    #[test]
    fn uncorrelated_predictor_at_lambda_one_is_ineffective() {
        let mut rng = substream(13, "ineffective", 0);
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|_| {
                (
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                )
            })
            .collect();
        let u_yhats: Vec<f64> = (0..1000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (h, u) = frames(&pairs, &u_yhats);
        let check = effectiveness_check(&h, &u, 1.0).unwrap();
        assert!(!check.effective, "lhs {} rhs {}", check.lhs, check.rhs);
    }

    #[test]
    fn coverage_counts_closed_endpoints() {
        let theta = 2.0;
        let all = vec![(1.0, 3.0), (1.5, 2.5), (2.0, 2.0)];
        assert_eq!(record_coverage(&all, theta).unwrap(), 1.0);
        let none = vec![(3.0, 4.0), (-1.0, 0.0)];
        assert_eq!(record_coverage(&none, theta).unwrap(), 0.0);
        assert!(record_coverage(&[], theta).is_err());
    }
}
