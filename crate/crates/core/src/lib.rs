//! Prediction-powered survey estimation.
//!
//! Combines abundant, possibly biased model-generated survey responses with
//! a small human-labeled sample to produce unbiased population estimates
//! with valid confidence intervals. The crate covers:
//!
//! - frames and response-to-scalar mappings ([`frame`])
//! - the rectified mean and generic estimating-equation estimators
//!   ([`estimator`], [`regression`])
//! - power tuning of the interpolation weight ([`tuning`])
//! - analytic and bootstrap uncertainty, the effectiveness condition
//!   ([`uncertainty`])
//! - bias / ESS-gain / subgroup metrics ([`metrics`])
//! - seeded Monte-Carlo studies with simulated predictors ([`simulation`])
//! - fixed-budget fine-tune-versus-rectify sweeps ([`allocation`])

pub mod allocation;
pub mod config;
pub mod error;
pub mod estimator;
pub mod frame;
pub mod metrics;
pub mod regression;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod tuning;
pub mod uncertainty;

pub use allocation::{
    classify_regimes, pareto_frontier, regime_for, run_allocation_sweep, AllocationPoint,
    AllocationSample, AllocationSweep, Regime,
};
pub use error::{Error, Result};
pub use estimator::{
    check_disjoint, classical_mean, rectified_mean, rectified_quantile,
    solve_estimating_equation, EstimandKind, EstimandSpec, RectifiedEstimate, ScoreFn,
};
pub use frame::{
    load_frame, split_frame, AttrValue, Frame, FrameSchema, LabeledRecord, LabeledSet,
    ScalarMap, UnlabeledFrame, UnlabeledRecord,
};
pub use metrics::{
    bias_pct, ess_gain_pct, individual_mae, subgroup_bias_report, RecenterMode, SubgroupRow,
};
pub use regression::{
    rectified_linear_regression, rectified_logistic_regression, RegressionEstimate,
};
pub use simulation::{
    generate_population, learning_curve_predictor, run_replications, simulate_predictor,
    LambdaPolicy, LearningCurve, Population, PopulationConfig, PredictorModel,
    ReplicationRecord, ReplicationReport, StudyOptions, COVERAGE_GATE,
};
pub use tuning::{lambda_grid_search, lambda_opt_mean, LambdaChoice};
pub use uncertainty::{
    analytic_variance, confidence_interval, effectiveness_check, record_coverage, CiMethod,
    EffectivenessCheck, IntervalSpec,
};
