//! Fixed-budget allocation between fine-tuning and rectification.
//!
//! A budget of human responses is split: a share goes to training the
//! synthesis model (emulated by the learning-curve predictor), the rest is
//! held out for rectification. Holding out is mandatory: records consumed by
//! fine-tuning never enter the labeled correction set, and the harness
//! asserts that.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{classical_mean, rectified_mean};
use crate::frame::{split_frame, LabeledRecord, LabeledSet};
use crate::metrics::{bias_pct, ess_gain_pct};
use crate::rng::{substream, substream_seed};
use crate::simulation::{generate_population, learning_curve_predictor, LearningCurve, Population, PopulationConfig};
use crate::stats::{mean, sample_var};
use crate::tuning::lambda_opt_mean;
use crate::uncertainty::{confidence_interval, IntervalSpec};

/// One budget split, with Monte-Carlo means and normal-approximation CIs
/// over the replications.
#[derive(Debug, Clone, Serialize)]
pub struct AllocationPoint {
    pub ft_share: f64,
    pub m_train: usize,
    pub n_rect: usize,
    pub mean_bias_pct: f64,
    pub mean_ess_gain_pct: f64,
    pub bias_ci: (f64, f64),
    pub ess_ci: (f64, f64),
    pub coverage: f64,
    pub mean_lambda: f64,
}

/// Per-replication scatter, emitted for confidence-ellipse rendering by
/// external plotting tools.
#[derive(Debug, Clone, Serialize)]
pub struct AllocationSample {
    pub ft_share: f64,
    pub replication: usize,
    pub bias_pct: f64,
    pub ess_gain_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationSweep {
    pub budget: usize,
    pub points: Vec<AllocationPoint>,
    pub samples: Vec<AllocationSample>,
}

/// Run the sweep: for each share, `m_train = round(share * budget)` responses
/// feed the learning curve and the remaining `budget - m_train` are held out
/// as the labeled correction set. Replications redraw the training selection,
/// predictor noise, and the labeled split; the population stays fixed.
pub fn run_allocation_sweep(
    budget: usize,
    shares: &[f64],
    pop_cfg: &PopulationConfig,
    curve: &LearningCurve,
    interval: &IntervalSpec,
    replications: usize,
    master_seed: u64,
) -> Result<AllocationSweep> {
    if budget < 10 {
        return Err(Error::InvalidConfig(format!(
            "allocation budget must be at least 10, got {budget}"
        )));
    }
    if shares.is_empty() {
        return Err(Error::InvalidConfig("allocation needs at least one share".into()));
    }
    for &share in shares {
        if !(share > 0.0 && share < 1.0) {
            return Err(Error::ShareOutOfRange { share });
        }
    }
    if replications == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    curve.validate()?;
    interval.validate()?;
    pop_cfg.validate()?;
    if pop_cfg.size <= budget {
        return Err(Error::InvalidConfig(format!(
            "population size {} must exceed the budget {budget}",
            pop_cfg.size
        )));
    }

    let pop = generate_population(pop_cfg, &mut substream(master_seed, "population", 0))?;

    let mut points = Vec::with_capacity(shares.len());
    let mut samples = Vec::new();
    for (share_idx, &share) in shares.iter().enumerate() {
        let m_train = (share * budget as f64).round() as usize;
        let n_rect = budget - m_train;
        if n_rect < 2 {
            return Err(Error::InvalidConfig(format!(
                "share {share} leaves only {n_rect} responses for rectification"
            )));
        }

        let rows: Vec<(f64, f64, f64, bool)> = (0..replications)
            .into_par_iter()
            .map(|r| share_replication(&pop, curve, interval, share_idx, m_train, n_rect, master_seed, r))
            .collect::<Result<Vec<_>>>()?;

        let biases: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let esses: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let lambdas: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let coverage = rows.iter().filter(|r| r.3).count() as f64 / rows.len() as f64;
        let ci = |xs: &[f64]| -> (f64, f64) {
            let m = mean(xs);
            let half = 1.96 * (sample_var(xs) / xs.len() as f64).sqrt();
            (m - half, m + half)
        };

        for (r, row) in rows.iter().enumerate() {
            samples.push(AllocationSample {
                ft_share: share,
                replication: r,
                bias_pct: row.0,
                ess_gain_pct: row.1,
            });
        }
        points.push(AllocationPoint {
            ft_share: share,
            m_train,
            n_rect,
            mean_bias_pct: mean(&biases),
            mean_ess_gain_pct: mean(&esses),
            bias_ci: ci(&biases),
            ess_ci: ci(&esses),
            coverage,
            mean_lambda: mean(&lambdas),
        });
    }

    Ok(AllocationSweep {
        budget,
        points,
        samples,
    })
}

#[allow(clippy::too_many_arguments)]
fn share_replication(
    pop: &Population,
    curve: &LearningCurve,
    interval: &IntervalSpec,
    share_idx: usize,
    m_train: usize,
    n_rect: usize,
    master_seed: u64,
    r: usize,
) -> Result<(f64, f64, f64, bool)> {
    let label = |what: &str| format!("alloc{share_idx}/{what}");

    // Records consumed by fine-tuning leave the pool entirely.
    let size = pop.size();
    let mut indices: Vec<usize> = (0..size).collect();
    let train: HashSet<usize> = {
        use rand::seq::SliceRandom;
        let mut rng = substream(master_seed, &label("train-select"), r as u64);
        let (sampled, _) = indices.partial_shuffle(&mut rng, m_train);
        sampled.iter().copied().collect()
    };

    let yhat = learning_curve_predictor(
        pop,
        m_train,
        curve,
        &mut substream(master_seed, &label("predictor"), r as u64),
    )?;

    let pool_records: Vec<LabeledRecord> = pop
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| !train.contains(i))
        .map(|(i, rec)| LabeledRecord {
            respondent_id: rec.respondent_id.clone(),
            covariates: vec![],
            groups: vec![],
            y: rec.y,
            yhat: yhat[i],
        })
        .collect();
    let pool = LabeledSet::new(vec![], vec![], pool_records)?;

    let (h, u) = split_frame(&pool, n_rect, &mut substream(master_seed, &label("split"), r as u64))?;

    // Held-out discipline: fine-tuning records must not appear in H.
    let train_ids: HashSet<&str> = train
        .iter()
        .map(|&i| pop.records[i].respondent_id.as_str())
        .collect();
    if let Some(id) = h.ids().find(|id| train_ids.contains(id)) {
        return Err(Error::InvalidInput(format!(
            "held-out violation: fine-tuning record {id:?} reached the labeled set"
        )));
    }

    let choice = lambda_opt_mean(&h, &u)?;
    let est = rectified_mean(&h, &u, choice.lambda)?;
    let mut spec = *interval;
    spec.seed = substream_seed(master_seed, &label("bootstrap"), r as u64);
    let ci = confidence_interval(&est, &h, &u, &spec)?;

    let classical = classical_mean(&h)?;
    let theta_star = pop.theta_star;
    Ok((
        bias_pct(est.theta_hat, theta_star)?,
        ess_gain_pct(classical.variance, est.variance)?,
        est.lambda,
        ci.0 <= theta_star && theta_star <= ci.1,
    ))
}

/// Points not dominated under (minimize bias, maximize ESS gain), in stable
/// ft_share order. A point dominates another when it is no worse on both
/// axes and strictly better on at least one.
pub fn pareto_frontier(points: &[AllocationPoint]) -> Vec<AllocationPoint> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .mean_bias_pct
            .total_cmp(&points[b].mean_bias_pct)
            .then(points[b].mean_ess_gain_pct.total_cmp(&points[a].mean_ess_gain_pct))
    });

    let mut keep = vec![false; points.len()];
    let mut best_lower_bias = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // group of equal bias
        let mut j = i;
        let bias = points[order[i]].mean_bias_pct;
        let mut group_max = f64::NEG_INFINITY;
        while j < order.len() && points[order[j]].mean_bias_pct == bias {
            group_max = group_max.max(points[order[j]].mean_ess_gain_pct);
            j += 1;
        }
        for &idx in &order[i..j] {
            let ess = points[idx].mean_ess_gain_pct;
            keep[idx] = ess == group_max && ess > best_lower_bias;
        }
        best_lower_bias = best_lower_bias.max(group_max);
        i = j;
    }

    let mut frontier: Vec<AllocationPoint> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, p)| p.clone())
        .collect();
    frontier.sort_by(|a, b| a.ft_share.total_cmp(&b.ft_share));
    frontier
}

/// Allocation regimes, labeled by the fraction of the budget spent on
/// fine-tuning. Thresholds scale proportionally with the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Conservative,
    Balanced,
    Aggressive,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Conservative => write!(f, "conservative"),
            Regime::Balanced => write!(f, "balanced"),
            Regime::Aggressive => write!(f, "aggressive"),
        }
    }
}

pub fn regime_for(m_train: usize, budget: usize) -> Regime {
    let m = m_train as f64;
    let b = budget as f64;
    if m <= 0.2 * b {
        Regime::Conservative
    } else if m >= 0.6 * b {
        Regime::Aggressive
    } else {
        Regime::Balanced
    }
}

/// Partition points into regimes.
pub fn classify_regimes(
    points: &[AllocationPoint],
    budget: usize,
) -> BTreeMap<Regime, Vec<AllocationPoint>> {
    let mut groups: BTreeMap<Regime, Vec<AllocationPoint>> = BTreeMap::new();
    for p in points {
        groups
            .entry(regime_for(p.m_train, budget))
            .or_default()
            .push(p.clone());
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn point(share: f64, bias: f64, ess: f64) -> AllocationPoint {
        AllocationPoint {
            ft_share: share,
            m_train: (share * 1000.0).round() as usize,
            n_rect: 1000 - (share * 1000.0).round() as usize,
            mean_bias_pct: bias,
            mean_ess_gain_pct: ess,
            bias_ci: (bias, bias),
            ess_ci: (ess, ess),
            coverage: 0.95,
            mean_lambda: 0.5,
        }
    }

    /// O(k^2) dominance filter, the verification oracle for the sweep-based
    /// frontier.
    pub(crate) fn brute_force_frontier(points: &[AllocationPoint]) -> Vec<AllocationPoint> {
        let dominates = |q: &AllocationPoint, p: &AllocationPoint| -> bool {
            q.mean_bias_pct <= p.mean_bias_pct
                && q.mean_ess_gain_pct >= p.mean_ess_gain_pct
                && (q.mean_bias_pct < p.mean_bias_pct || q.mean_ess_gain_pct > p.mean_ess_gain_pct)
        };
        let mut frontier: Vec<AllocationPoint> = points
            .iter()
            .filter(|p| !points.iter().any(|q| dominates(q, p)))
            .cloned()
            .collect();
        frontier.sort_by(|a, b| a.ft_share.total_cmp(&b.ft_share));
        frontier
    }

    #[test]
    fn strict_dominance_gives_singleton() {
        let points = vec![point(0.2, 1.0, 10.0), point(0.4, 2.0, 5.0)];
        let frontier = pareto_frontier(&points);
        assert_eq!(frontier.len(), 1);
        assert_eq!(frontier[0].ft_share, 0.2);
    }

    #[test]
    fn identical_points_all_survive() {
        let points = vec![point(0.1, 1.0, 1.0), point(0.2, 1.0, 1.0), point(0.3, 1.0, 1.0)];
        let frontier = pareto_frontier(&points);
        assert_eq!(frontier.len(), 3);
    }

    #[test]
    fn frontier_matches_brute_force_on_random_inputs() {
        use rand::Rng;
        let mut rng = crate::rng::substream(17, "pareto", 0);
        for trial in 0..200 {
            let k = rng.random_range(1..12);
            let points: Vec<AllocationPoint> = (0..k)
                .map(|i| {
                    // quantized values produce plenty of ties
                    let bias = (rng.random_range(0..6) as f64) * 0.5;
                    let ess = (rng.random_range(0..6) as f64) * 2.0;
                    point(0.05 + i as f64 * 0.01, bias, ess)
                })
                .collect();
            let fast = pareto_frontier(&points);
            let brute = brute_force_frontier(&points);
            assert_eq!(
                fast.iter().map(|p| p.ft_share).collect::<Vec<_>>(),
                brute.iter().map(|p| p.ft_share).collect::<Vec<_>>(),
                "trial {trial}"
            );
        }
    }

    #[test]
    fn regime_thresholds() {
        assert_eq!(regime_for(200, 1000), Regime::Conservative);
        assert_eq!(regime_for(400, 1000), Regime::Balanced);
        assert_eq!(regime_for(600, 1000), Regime::Aggressive);
        assert_eq!(regime_for(100, 1000), Regime::Conservative);
        assert_eq!(regime_for(800, 1000), Regime::Aggressive);
        // thresholds scale with the budget
        assert_eq!(regime_for(40, 200), Regime::Conservative);
        assert_eq!(regime_for(100, 200), Regime::Balanced);
        assert_eq!(regime_for(120, 200), Regime::Aggressive);
    }

    #[test]
    fn share_validation() {
        let cfg = crate::simulation::tests::plain_config(2000, 5.0, 1.0);
        let curve = LearningCurve { b0: 0.3, tau: 450.0, s0: 1.0, kappa: 300.0 };
        let err = run_allocation_sweep(
            1000,
            &[1.2],
            &cfg,
            &curve,
            &IntervalSpec::default(),
            2,
            1,
        );
        assert!(matches!(err, Err(Error::ShareOutOfRange { .. })));
    }
}
