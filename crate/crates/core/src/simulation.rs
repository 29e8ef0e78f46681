//! Synthetic survey populations, biased predictor models, and seeded
//! Monte-Carlo replication studies.
//!
//! A study is a pure function of its configuration and a master seed: every
//! random component (population, predictor noise, labeled-set split,
//! bootstrap) draws from its own substream, so reports are identical at any
//! parallelism degree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimator::{classical_mean, rectified_mean, EstimandKind, RectifiedEstimate};
use crate::frame::{split_frame, LabeledRecord, LabeledSet};
use crate::metrics::{bias_pct, ess_gain_pct};
use crate::rng::{substream, substream_seed};
use crate::stats::{mean, normal_quantile, quantile_sorted, sample_var};
use crate::tuning::lambda_opt_mean;
use crate::uncertainty::{confidence_interval, CiMethod, IntervalSpec};

/// Reports suppress ESS when interval coverage falls below this threshold:
/// efficiency claims are meaningless without valid intervals. The value
/// leaves binomial slack below the nominal 0.95 at a few thousand
/// replications.
pub const COVERAGE_GATE: f64 = 0.93;

/// One categorical attribute with level probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub levels: Vec<LevelSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSpec {
    pub label: String,
    pub probability: f64,
}

/// Additive shift applied to the response mean of one attribute level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupEffect {
    pub attribute: String,
    pub level: String,
    pub shift: f64,
}

/// `y = base_mean + sum of matching shifts + noise_scale * N(0,1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseModel {
    pub base_mean: f64,
    pub noise_scale: f64,
    #[serde(default)]
    pub effects: Vec<GroupEffect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaStarMode {
    /// Mixture mean computed from the configuration.
    Analytic,
    /// Finite-population mean of the generated responses.
    Empirical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub size: usize,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    pub response: ResponseModel,
    #[serde(default = "default_theta_mode")]
    pub theta_star_mode: ThetaStarMode,
}

fn default_theta_mode() -> ThetaStarMode {
    ThetaStarMode::Empirical
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidConfig("population size must be positive".into()));
        }
        if self.response.noise_scale < 0.0 {
            return Err(Error::InvalidConfig("noise scale must be nonnegative".into()));
        }
        for attr in &self.attributes {
            if attr.levels.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "attribute {:?} has no levels",
                    attr.name
                )));
            }
            let total: f64 = attr.levels.iter().map(|l| l.probability).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "attribute {:?} probabilities sum to {total}, expected 1",
                    attr.name
                )));
            }
            if attr.levels.iter().any(|l| l.probability < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "attribute {:?} has a negative probability",
                    attr.name
                )));
            }
        }
        for effect in &self.response.effects {
            let attr = self
                .attributes
                .iter()
                .find(|a| a.name == effect.attribute)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "effect references unknown attribute {:?}",
                        effect.attribute
                    ))
                })?;
            if !attr.levels.iter().any(|l| l.label == effect.level) {
                return Err(Error::InvalidConfig(format!(
                    "effect references unknown level {:?} of {:?}",
                    effect.level, effect.attribute
                )));
            }
        }
        Ok(())
    }

    /// Superpopulation mean implied by the mixture of level shifts.
    pub fn analytic_mean(&self) -> f64 {
        let mut mu = self.response.base_mean;
        for effect in &self.response.effects {
            let p = self
                .attributes
                .iter()
                .find(|a| a.name == effect.attribute)
                .and_then(|a| a.levels.iter().find(|l| l.label == effect.level))
                .map(|l| l.probability)
                .unwrap_or(0.0);
            mu += p * effect.shift;
        }
        mu
    }

    /// Population standard deviation of y implied by the configuration
    /// (mixture spread plus response noise). Used to anchor predictor noise
    /// scales relative to the data.
    pub fn response_sd(&self) -> f64 {
        // variance of the sum of independent attribute effects
        let mut var = self.response.noise_scale * self.response.noise_scale;
        for attr in &self.attributes {
            let shift_for = |label: &str| -> f64 {
                self.response
                    .effects
                    .iter()
                    .filter(|e| e.attribute == attr.name && e.level == label)
                    .map(|e| e.shift)
                    .sum()
            };
            let m: f64 = attr
                .levels
                .iter()
                .map(|l| l.probability * shift_for(&l.label))
                .sum();
            let v: f64 = attr
                .levels
                .iter()
                .map(|l| {
                    let s = shift_for(&l.label);
                    l.probability * (s - m) * (s - m)
                })
                .sum();
            var += v;
        }
        var.sqrt()
    }
}

/// A generated population: ground-truth responses plus the attribute levels
/// that double as subgroup keys.
#[derive(Debug, Clone)]
pub struct Population {
    pub attribute_names: Vec<String>,
    pub records: Vec<PopRecord>,
    pub theta_star: f64,
}

#[derive(Debug, Clone)]
pub struct PopRecord {
    pub respondent_id: String,
    pub levels: Vec<String>,
    pub y: f64,
}

impl Population {
    pub fn size(&self) -> usize {
        self.records.len()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// Pair the population with aligned predictions, yielding a fully
    /// observed evaluation frame ready for splitting.
    pub fn attach_predictions(&self, yhat: &[f64]) -> Result<LabeledSet> {
        if yhat.len() != self.records.len() {
            return Err(Error::InvalidInput(format!(
                "predictions ({}) are not aligned to the population ({})",
                yhat.len(),
                self.records.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(yhat)
            .map(|(r, &p)| LabeledRecord {
                respondent_id: r.respondent_id.clone(),
                covariates: vec![],
                groups: r.levels.clone(),
                y: r.y,
                yhat: p,
            })
            .collect();
        LabeledSet::new(vec![], self.attribute_names.clone(), records)
    }
}

/// Generate a population; deterministic given the generator state.
pub fn generate_population<R: Rng>(cfg: &PopulationConfig, rng: &mut R) -> Result<Population> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.size);
    for i in 0..cfg.size {
        let mut levels = Vec::with_capacity(cfg.attributes.len());
        let mut mu = cfg.response.base_mean;
        for attr in &cfg.attributes {
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = attr.levels.len() - 1;
            for (k, level) in attr.levels.iter().enumerate() {
                acc += level.probability;
                if draw < acc {
                    chosen = k;
                    break;
                }
            }
            let label = &attr.levels[chosen].label;
            for effect in &cfg.response.effects {
                if effect.attribute == attr.name && effect.level == *label {
                    mu += effect.shift;
                }
            }
            levels.push(label.clone());
        }
        let noise: f64 = rng.sample(StandardNormal);
        records.push(PopRecord {
            respondent_id: format!("p{i:06}"),
            levels,
            y: mu + cfg.response.noise_scale * noise,
        });
    }
    let theta_star = match cfg.theta_star_mode {
        ThetaStarMode::Analytic => cfg.analytic_mean(),
        ThetaStarMode::Empirical => mean(&records.iter().map(|r| r.y).collect::<Vec<_>>()),
    };
    Ok(Population {
        attribute_names: cfg.attributes.iter().map(|a| a.name.clone()).collect(),
        records,
        theta_star,
    })
}

/// Parameters of a fine-tuning quality curve: bias decays exponentially with
/// the training budget, noise shrinks hyperbolically.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LearningCurve {
    pub b0: f64,
    pub tau: f64,
    pub s0: f64,
    pub kappa: f64,
}

impl LearningCurve {
    // negated comparisons reject NaN parameters as well
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.kappa > 0.0) {
            return Err(Error::InvalidCurve(format!(
                "tau and kappa must be positive, got tau={}, kappa={}",
                self.tau, self.kappa
            )));
        }
        if self.b0 < 0.0 || self.s0 < 0.0 {
            return Err(Error::InvalidCurve(format!(
                "b0 and s0 must be nonnegative, got b0={}, s0={}",
                self.b0, self.s0
            )));
        }
        Ok(())
    }

    pub fn bias_at(&self, m_train: usize) -> f64 {
        self.b0 * (-(m_train as f64) / self.tau).exp()
    }

    pub fn noise_at(&self, m_train: usize) -> f64 {
        self.s0 / (1.0 + m_train as f64 / self.kappa)
    }
}

/// A biased/noisy synthetic-response generator standing in for an LLM
/// synthesis method.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorModel {
    /// `yhat = y + offset + noise`
    AdditiveBias { offset: f64, noise: f64 },
    /// `yhat = factor * y + noise`
    MultiplicativeBias { factor: f64, noise: f64 },
    /// Level-specific additive offsets on one attribute.
    SubgroupBias {
        attribute: String,
        offsets: BTreeMap<String, f64>,
        noise: f64,
    },
    /// `yhat = y + noise`, noise calibrated so corr(y, yhat) hits the target
    /// within +/- 0.02.
    NoisyOracle { correlation_target: f64 },
    /// Fine-tuned predictor whose quality follows a learning curve in the
    /// training budget.
    LearningCurve { m_train: usize, curve: LearningCurve },
}

impl PredictorModel {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorModel::AdditiveBias { noise, .. } => {
                if *noise < 0.0 {
                    return Err(Error::InvalidConfig("predictor noise must be nonnegative".into()));
                }
            }
            PredictorModel::MultiplicativeBias { factor, noise } => {
                if !(*factor > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "multiplicative factor must be positive, got {factor}"
                    )));
                }
                if *noise < 0.0 {
                    return Err(Error::InvalidConfig("predictor noise must be nonnegative".into()));
                }
            }
            PredictorModel::SubgroupBias { noise, .. } => {
                if *noise < 0.0 {
                    return Err(Error::InvalidConfig("predictor noise must be nonnegative".into()));
                }
            }
            PredictorModel::NoisyOracle { correlation_target } => {
                if !(-1.0..=1.0).contains(correlation_target) {
                    return Err(Error::InvalidConfig(format!(
                        "correlation target must lie in [-1, 1], got {correlation_target}"
                    )));
                }
            }
            PredictorModel::LearningCurve { curve, .. } => curve.validate()?,
        }
        Ok(())
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            PredictorModel::AdditiveBias { .. } => "additive-bias",
            PredictorModel::MultiplicativeBias { .. } => "multiplicative-bias",
            PredictorModel::SubgroupBias { .. } => "subgroup-bias",
            PredictorModel::NoisyOracle { .. } => "noisy-oracle",
            PredictorModel::LearningCurve { .. } => "learning-curve",
        }
    }
}

/// Generate predictions aligned to the population.
pub fn simulate_predictor<R: Rng>(
    pop: &Population,
    model: &PredictorModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.validate()?;
    let n = pop.records.len();
    match model {
        PredictorModel::AdditiveBias { offset, noise } => Ok(pop
            .records
            .iter()
            .map(|r| r.y + offset + noise * rng.sample::<f64, _>(StandardNormal))
            .collect()),
        PredictorModel::MultiplicativeBias { factor, noise } => Ok(pop
            .records
            .iter()
            .map(|r| factor * r.y + noise * rng.sample::<f64, _>(StandardNormal))
            .collect()),
        PredictorModel::SubgroupBias {
            attribute,
            offsets,
            noise,
        } => {
            let idx = pop
                .attribute_names
                .iter()
                .position(|a| a == attribute)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("subgroup-bias references unknown attribute {attribute:?}"))
                })?;
            Ok(pop
                .records
                .iter()
                .map(|r| {
                    let offset = offsets.get(&r.levels[idx]).copied().unwrap_or(0.0);
                    r.y + offset + noise * rng.sample::<f64, _>(StandardNormal)
                })
                .collect())
        }
        PredictorModel::NoisyOracle { correlation_target } => {
            let target = *correlation_target;
            let ys = pop.ys();
            let s_y = sample_var(&ys).sqrt();
            if !(target > 0.0 && target <= 1.0) || s_y == 0.0 {
                return Err(Error::UnattainableCorrelation { target });
            }
            let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let measured = |scale: f64| -> f64 {
                let yhats: Vec<f64> = ys.iter().zip(&eps).map(|(y, e)| y + scale * e).collect();
                crate::stats::pearson_corr(&ys, &yhats)
            };
            // Analytic start, then bisection on the realized correlation.
            let mut scale = if target < 1.0 {
                s_y * (1.0 / (target * target) - 1.0).sqrt()
            } else {
                0.0
            };
            if (measured(scale) - target).abs() > 0.005 {
                let mut lo = 0.0;
                let mut hi = scale.max(s_y);
                let mut grow = 0;
                while measured(hi) > target {
                    hi *= 2.0;
                    grow += 1;
                    if grow > 60 {
                        return Err(Error::UnattainableCorrelation { target });
                    }
                }
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if measured(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                scale = 0.5 * (lo + hi);
            }
            if (measured(scale) - target).abs() > 0.02 {
                return Err(Error::UnattainableCorrelation { target });
            }
            Ok(ys.iter().zip(&eps).map(|(y, e)| y + scale * e).collect())
        }
        PredictorModel::LearningCurve { m_train, curve } => {
            learning_curve_predictor(pop, *m_train, curve, rng)
        }
    }
}

/// Predictions from a fine-tuned model emulated by the learning curve:
/// `yhat = y * (1 + bias(m)) + noise(m) * N(0,1)`.
pub fn learning_curve_predictor<R: Rng>(
    pop: &Population,
    m_train: usize,
    curve: &LearningCurve,
    rng: &mut R,
) -> Result<Vec<f64>> {
    curve.validate()?;
    let bias = curve.bias_at(m_train);
    let noise = curve.noise_at(m_train);
    Ok(pop
        .records
        .iter()
        .map(|r| r.y * (1.0 + bias) + noise * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// How lambda is chosen in a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "value")]
pub enum LambdaPolicy {
    /// Report the raw synthetic mean over U; no correction at all.
    Unrectified,
    /// Rectified estimator at a fixed lambda.
    Fixed(f64),
    /// Tune lambda per replication by the power-tuning rule.
    Opt,
}

impl LambdaPolicy {
    pub fn label(&self) -> String {
        match self {
            LambdaPolicy::Unrectified => "unrectified".into(),
            LambdaPolicy::Fixed(l) => format!("rect-lambda-{l}"),
            LambdaPolicy::Opt => "rect-lambda-opt".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Redraw the population every replication instead of fixing it once
    /// (superpopulation sampling instead of a finite-population target).
    pub superpopulation: bool,
    /// Keep per-replication records in the report.
    pub keep_per_replication: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub theta_star: f64,
    pub theta_hat: f64,
    pub lambda: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bias_pct: f64,
    pub ess_gain_pct: f64,
    pub covered: bool,
}

/// Monte-Carlo aggregate over replications.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationReport {
    pub replications: usize,
    pub n_human: usize,
    pub theta_star: f64,
    pub mean_theta_hat: f64,
    pub sd_theta_hat: f64,
    pub mean_bias_pct: f64,
    pub bias_pct_sd: f64,
    pub coverage: f64,
    pub mean_ess_gain_pct: f64,
    /// ESS is only reported when coverage clears the gate; efficiency gains
    /// from invalid intervals are not comparable.
    pub ess_reported: bool,
    pub mean_lambda: f64,
    pub mean_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_replication: Option<Vec<ReplicationRecord>>,
}

/// Run a seeded replication study: per replication, redraw predictor noise
/// (and the population, in superpopulation mode), split off a fresh labeled
/// set, estimate, build the interval, and score bias/coverage/ESS against
/// the classical human-only estimator on the same split.
#[allow(clippy::too_many_arguments)]
pub fn run_replications(
    pop_cfg: &PopulationConfig,
    model: &PredictorModel,
    n_human: usize,
    policy: LambdaPolicy,
    interval: &IntervalSpec,
    replications: usize,
    master_seed: u64,
    options: &StudyOptions,
) -> Result<ReplicationReport> {
    if replications == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    if n_human < 2 {
        return Err(Error::InvalidInput("n_human must be at least 2".into()));
    }
    pop_cfg.validate()?;
    model.validate()?;
    interval.validate()?;
    if let LambdaPolicy::Fixed(l) = policy {
        crate::estimator::check_lambda(l)?;
    }

    let fixed_pop = if options.superpopulation {
        None
    } else {
        Some(generate_population(pop_cfg, &mut substream(master_seed, "population", 0))?)
    };

    let records: Vec<ReplicationRecord> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<ReplicationRecord> {
            let local_pop;
            let pop = match &fixed_pop {
                Some(p) => p,
                None => {
                    local_pop =
                        generate_population(pop_cfg, &mut substream(master_seed, "population", r as u64))?;
                    &local_pop
                }
            };
            replicate_once(pop, model, n_human, policy, interval, master_seed, r)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(aggregate(records, n_human, options.keep_per_replication))
}

pub(crate) fn replicate_once(
    pop: &Population,
    model: &PredictorModel,
    n_human: usize,
    policy: LambdaPolicy,
    interval: &IntervalSpec,
    master_seed: u64,
    r: usize,
) -> Result<ReplicationRecord> {
    let yhat = simulate_predictor(pop, model, &mut substream(master_seed, "predictor", r as u64))?;
    let full = pop.attach_predictions(&yhat)?;
    let (h, u) = split_frame(&full, n_human, &mut substream(master_seed, "split", r as u64))?;

    let mut spec = *interval;
    spec.seed = substream_seed(master_seed, "bootstrap", r as u64);

    let (est, ci) = match policy {
        LambdaPolicy::Unrectified => unrectified_estimate(&u.yhats(), &spec),
        LambdaPolicy::Fixed(l) => {
            let est = rectified_mean(&h, &u, l)?;
            let ci = confidence_interval(&est, &h, &u, &spec)?;
            (est, ci)
        }
        LambdaPolicy::Opt => {
            let choice = lambda_opt_mean(&h, &u)?;
            let est = rectified_mean(&h, &u, choice.lambda)?;
            let ci = confidence_interval(&est, &h, &u, &spec)?;
            (est, ci)
        }
    };

    let classical = classical_mean(&h)?;
    let theta_star = pop.theta_star;
    Ok(ReplicationRecord {
        replication: r,
        theta_star,
        theta_hat: est.theta_hat,
        lambda: est.lambda,
        variance: est.variance,
        ci_low: ci.0,
        ci_high: ci.1,
        bias_pct: bias_pct(est.theta_hat, theta_star)?,
        ess_gain_pct: ess_gain_pct(classical.variance, est.variance)?,
        covered: ci.0 <= theta_star && theta_star <= ci.1,
    })
}

/// The uncorrected synthetic mean over U with its own interval; coverage of
/// these intervals is what the gate typically rejects.
fn unrectified_estimate(yhats_u: &[f64], spec: &IntervalSpec) -> (RectifiedEstimate, (f64, f64)) {
    let n_u = yhats_u.len();
    let theta = mean(yhats_u);
    let variance = sample_var(yhats_u) / n_u as f64;
    let ci = match spec.method {
        CiMethod::AnalyticNormal => {
            let z = normal_quantile(0.5 * (1.0 + spec.level));
            let half = z * variance.sqrt();
            (theta - half, theta + half)
        }
        CiMethod::BootstrapPercentile => {
            let mut thetas: Vec<f64> = (0..spec.bootstrap_b)
                .into_par_iter()
                .map(|b| {
                    let mut rng = substream(spec.seed, "bootstrap", b as u64);
                    let total: f64 = (0..n_u)
                        .map(|_| yhats_u[rng.random_range(0..n_u)])
                        .sum();
                    total / n_u as f64
                })
                .collect();
            thetas.sort_by(f64::total_cmp);
            let alpha = 0.5 * (1.0 - spec.level);
            (
                quantile_sorted(&thetas, alpha),
                quantile_sorted(&thetas, 1.0 - alpha),
            )
        }
    };
    let est = RectifiedEstimate {
        theta_hat: theta,
        lambda: 1.0,
        variance,
        ci: Some(ci),
        n_labeled: 0,
        n_unlabeled: n_u,
        estimand: EstimandKind::Mean,
    };
    (est, ci)
}

pub(crate) fn aggregate(
    records: Vec<ReplicationRecord>,
    n_human: usize,
    keep: bool,
) -> ReplicationReport {
    let thetas: Vec<f64> = records.iter().map(|r| r.theta_hat).collect();
    let biases: Vec<f64> = records.iter().map(|r| r.bias_pct).collect();
    let coverage = records.iter().filter(|r| r.covered).count() as f64 / records.len() as f64;
    let mean_ess = mean(&records.iter().map(|r| r.ess_gain_pct).collect::<Vec<_>>());
    ReplicationReport {
        replications: records.len(),
        n_human,
        theta_star: records[0].theta_star,
        mean_theta_hat: mean(&thetas),
        sd_theta_hat: sample_var(&thetas).sqrt(),
        mean_bias_pct: mean(&biases),
        bias_pct_sd: sample_var(&biases).sqrt(),
        coverage,
        mean_ess_gain_pct: mean_ess,
        ess_reported: coverage >= COVERAGE_GATE,
        mean_lambda: mean(&records.iter().map(|r| r.lambda).collect::<Vec<_>>()),
        mean_variance: mean(&records.iter().map(|r| r.variance).collect::<Vec<_>>()),
        per_replication: keep.then_some(records),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::stats::pearson_corr;

    pub(crate) fn plain_config(size: usize, base: f64, noise: f64) -> PopulationConfig {
        PopulationConfig {
            size,
            attributes: vec![],
            response: ResponseModel {
                base_mean: base,
                noise_scale: noise,
                effects: vec![],
            },
            theta_star_mode: ThetaStarMode::Empirical,
        }
    }

    pub(crate) fn two_group_config(size: usize) -> PopulationConfig {
        PopulationConfig {
            size,
            attributes: vec![AttributeSpec {
                name: "group".into(),
                levels: vec![
                    LevelSpec { label: "a".into(), probability: 0.5 },
                    LevelSpec { label: "b".into(), probability: 0.5 },
                ],
            }],
            response: ResponseModel {
                base_mean: 0.0,
                noise_scale: 0.0,
                effects: vec![GroupEffect {
                    attribute: "group".into(),
                    level: "b".into(),
                    shift: 10.0,
                }],
            },
            theta_star_mode: ThetaStarMode::Empirical,
        }
    }

    #[test]
    fn noiseless_single_group_population() {
        let cfg = plain_config(50, 5.0, 0.0);
        let pop = generate_population(&cfg, &mut substream(1, "population", 0)).unwrap();
        assert!(pop.records.iter().all(|r| r.y == 5.0));
        assert_eq!(pop.theta_star, 5.0);
    }

    #[test]
    fn two_group_mixture_mean() {
        let cfg = two_group_config(100_000);
        let pop = generate_population(&cfg, &mut substream(2, "population", 0)).unwrap();
        // analytic mixture mean is 5; the finite-population mean is within
        // Monte-Carlo error (se = 5 / sqrt(100k) ~ 0.016)
        assert!((pop.theta_star - cfg.analytic_mean()).abs() < 0.1);
        assert_eq!(cfg.analytic_mean(), 5.0);
    }

    #[test]
    fn populations_are_deterministic() {
        let cfg = two_group_config(500);
        let a = generate_population(&cfg, &mut substream(9, "population", 0)).unwrap();
        let b = generate_population(&cfg, &mut substream(9, "population", 0)).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.y.to_bits(), y.y.to_bits());
            assert_eq!(x.levels, y.levels);
        }
    }

    #[test]
    fn perfect_additive_predictor_is_the_oracle() {
        let cfg = plain_config(100, 3.0, 1.0);
        let pop = generate_population(&cfg, &mut substream(3, "population", 0)).unwrap();
        let model = PredictorModel::AdditiveBias { offset: 0.0, noise: 0.0 };
        let yhat = simulate_predictor(&pop, &model, &mut substream(3, "predictor", 0)).unwrap();
        for (r, p) in pop.records.iter().zip(&yhat) {
            assert_eq!(r.y.to_bits(), p.to_bits());
        }
    }

    #[test]
    fn multiplicative_bias_shifts_the_mean_by_the_factor() {
        let cfg = plain_config(20_000, 5.0, 1.0);
        let pop = generate_population(&cfg, &mut substream(4, "population", 0)).unwrap();
        let model = PredictorModel::MultiplicativeBias { factor: 1.3, noise: 0.0 };
        let yhat = simulate_predictor(&pop, &model, &mut substream(4, "predictor", 0)).unwrap();
        let rel = mean(&yhat) / pop.theta_star - 1.0;
        assert!((rel - 0.3).abs() < 1e-9, "relative bias {rel}");
    }

    #[test]
    fn noisy_oracle_hits_correlation_target() {
        let cfg = plain_config(5000, 5.0, 1.0);
        let pop = generate_population(&cfg, &mut substream(5, "population", 0)).unwrap();
        let model = PredictorModel::NoisyOracle { correlation_target: 0.9 };
        let yhat = simulate_predictor(&pop, &model, &mut substream(5, "predictor", 0)).unwrap();
        let corr = pearson_corr(&pop.ys(), &yhat);
        assert!((corr - 0.9).abs() <= 0.02, "measured corr {corr}");
    }

    #[test]
    fn unattainable_correlation_is_reported() {
        let cfg = plain_config(100, 5.0, 1.0);
        let pop = generate_population(&cfg, &mut substream(6, "population", 0)).unwrap();
        let model = PredictorModel::NoisyOracle { correlation_target: -0.4 };
        assert!(matches!(
            simulate_predictor(&pop, &model, &mut substream(6, "predictor", 0)),
            Err(Error::UnattainableCorrelation { .. })
        ));
    }

    #[test]
    fn learning_curve_boundaries() {
        let curve = LearningCurve { b0: 0.35, tau: 450.0, s0: 1.0, kappa: 300.0 };
        assert_eq!(curve.bias_at(0), 0.35);
        // bias(tau) = b0 / e
        assert!((curve.bias_at(450) - 0.35 / std::f64::consts::E).abs() < 1e-12);
        // asymptote: bias and noise vanish
        assert!(curve.bias_at(10_000_000) < 1e-9);
        assert!(curve.noise_at(10_000_000) < 1e-3);
        assert!(LearningCurve { b0: 0.1, tau: 0.0, s0: 1.0, kappa: 1.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn reports_are_bit_identical_across_runs() {
        let cfg = plain_config(400, 5.0, 1.0);
        let model = PredictorModel::MultiplicativeBias { factor: 1.2, noise: 0.5 };
        let interval = IntervalSpec::default();
        let opts = StudyOptions { keep_per_replication: true, ..Default::default() };
        let a = run_replications(&cfg, &model, 50, LambdaPolicy::Opt, &interval, 8, 77, &opts).unwrap();
        let b = run_replications(&cfg, &model, 50, LambdaPolicy::Opt, &interval, 8, 77, &opts).unwrap();
        assert_eq!(a.mean_bias_pct.to_bits(), b.mean_bias_pct.to_bits());
        assert_eq!(a.coverage, b.coverage);
        let ra = a.per_replication.unwrap();
        let rb = b.per_replication.unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!(x.theta_hat.to_bits(), y.theta_hat.to_bits());
            assert_eq!(x.ci_low.to_bits(), y.ci_low.to_bits());
        }
    }

    #[test]
    fn determinism_is_independent_of_worker_count() {
        let cfg = plain_config(300, 5.0, 1.0);
        let model = PredictorModel::MultiplicativeBias { factor: 1.3, noise: 0.4 };
        let interval = IntervalSpec::default();
        let opts = StudyOptions::default();

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| {
                run_replications(&cfg, &model, 40, LambdaPolicy::Opt, &interval, 12, 5, &opts)
            })
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| {
                run_replications(&cfg, &model, 40, LambdaPolicy::Opt, &interval, 12, 5, &opts)
            })
            .unwrap();
        assert_eq!(single.mean_theta_hat.to_bits(), many.mean_theta_hat.to_bits());
        assert_eq!(single.mean_ess_gain_pct.to_bits(), many.mean_ess_gain_pct.to_bits());
    }

    #[test]
    fn perfect_predictor_estimates_cleanly() {
        let cfg = plain_config(2000, 5.0, 1.0);
        let model = PredictorModel::AdditiveBias { offset: 0.0, noise: 0.0 };
        let interval = IntervalSpec::default();
        let report = run_replications(
            &cfg,
            &model,
            100,
            LambdaPolicy::Fixed(1.0),
            &interval,
            200,
            21,
            &StudyOptions::default(),
        )
        .unwrap();
        // with yhat = y the rectified estimator recovers the frame mean
        // almost exactly; only split noise on the tiny correction remains
        assert!(report.mean_bias_pct < 0.2, "bias {}", report.mean_bias_pct);
        assert!(report.coverage >= 0.93, "coverage {}", report.coverage);
    }
}
