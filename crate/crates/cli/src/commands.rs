//! Command implementations. Each command validates inputs, computes its full
//! report set, and hands the files to [`output::OutputSet`] in one shot.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use rectify_core::config::{
    self, load_allocate_config, load_coverage_config, load_ess_curve_config,
    load_simulate_config, load_subgroup_config, profile_predictor,
};
use rectify_core::report::{
    allocation_csv, allocation_scatter_csv, coverage_csv, ess_curve_csv, simulate_csv,
    subgroup_csv, to_json, CoverageRow, EstimateReport, SimulateRow,
};
use rectify_core::rng::{substream, substream_seed};
use rectify_core::{
    classical_mean, confidence_interval, effectiveness_check, ess_gain_pct, lambda_opt_mean,
    load_frame, pareto_frontier, rectified_mean, rectified_quantile, run_allocation_sweep,
    run_replications, split_frame, subgroup_bias_report, CiMethod, Error, FrameSchema,
    IntervalSpec, LambdaPolicy, Result, ScalarMap, StudyOptions,
};

use crate::output::{OutputSet, Sidecar};

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConfigArgs {
    /// Study configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Shipped predictor preset standing in for a synthesis method;
    /// overrides the config's `[predictor]`.
    #[arg(long, value_parser = config::PROFILE_NAMES)]
    pub profile: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethodArg {
    AnalyticNormal,
    BootstrapPercentile,
}

impl From<CiMethodArg> for CiMethod {
    fn from(m: CiMethodArg) -> CiMethod {
        match m {
            CiMethodArg::AnalyticNormal => CiMethod::AnalyticNormal,
            CiMethodArg::BootstrapPercentile => CiMethod::BootstrapPercentile,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimandArg {
    Mean,
    Quantile,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    /// Labeled CSV: human responses paired with model predictions.
    #[arg(long)]
    pub labeled: PathBuf,

    /// Unlabeled CSV: model predictions over the demographic-only frame.
    #[arg(long)]
    pub unlabeled: PathBuf,

    /// Ordinal map TOML (token = value pairs); numeric passthrough if absent.
    #[arg(long)]
    pub map: Option<PathBuf>,

    /// Respondent-id column; row indices are used when absent.
    #[arg(long)]
    pub id_col: Option<String>,

    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariate_cols: Vec<String>,

    /// Comma-separated subgroup columns.
    #[arg(long, value_delimiter = ',')]
    pub group_cols: Vec<String>,

    #[arg(long, default_value = "response")]
    pub response_col: String,

    #[arg(long, default_value = "prediction")]
    pub prediction_col: String,

    /// "opt" for power tuning, or a fixed value in [0, 1].
    #[arg(long, default_value = "opt")]
    pub lambda: String,

    #[arg(long, value_enum, default_value_t = EstimandArg::Mean)]
    pub estimand: EstimandArg,

    /// Quantile level when --estimand quantile.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,

    #[arg(long, value_enum, default_value_t = CiMethodArg::BootstrapPercentile)]
    pub ci_method: CiMethodArg,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[arg(long, default_value_t = 2000)]
    pub bootstrap_b: usize,
}

pub fn estimate(ctx: &Context, args: EstimateArgs) -> Result<()> {
    let map = match &args.map {
        Some(path) => ScalarMap::from_toml_file(path)?,
        None => ScalarMap::NumericPassthrough,
    };
    let base_schema = FrameSchema {
        id_col: args.id_col.clone(),
        covariate_cols: args.covariate_cols.clone(),
        group_cols: args.group_cols.clone(),
        response_col: None,
        prediction_col: args.prediction_col.clone(),
    };
    let labeled_schema = FrameSchema {
        response_col: Some(args.response_col.clone()),
        ..base_schema.clone()
    };

    let h = load_frame(&args.labeled, &labeled_schema, &map)?.into_labeled()?;
    let u = load_frame(&args.unlabeled, &base_schema, &map)?.into_unlabeled()?;

    let (lambda, lambda_policy, lambda_choice) = match args.lambda.as_str() {
        "opt" => {
            let choice = lambda_opt_mean(&h, &u)?;
            (choice.lambda, "opt".to_string(), Some(choice))
        }
        raw => {
            let value: f64 = raw.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "--lambda must be \"opt\" or a number in [0, 1], got {raw:?}"
                ))
            })?;
            (value, format!("fixed({value})"), None)
        }
    };

    let mut est = match args.estimand {
        EstimandArg::Mean => rectified_mean(&h, &u, lambda)?,
        EstimandArg::Quantile => rectified_quantile(&h, &u, args.q, lambda)?,
    };
    let spec = IntervalSpec {
        level: args.level,
        method: args.ci_method.into(),
        bootstrap_b: args.bootstrap_b,
        seed: substream_seed(ctx.seed, "estimate-ci", 0),
        retune_lambda: false,
    };
    est.ci = Some(confidence_interval(&est, &h, &u, &spec)?);

    let effectiveness = effectiveness_check(&h, &u, est.lambda)?;
    let classical = classical_mean(&h)?;
    let report = EstimateReport {
        ess_gain_pct: ess_gain_pct(classical.variance, est.variance)?,
        estimate: est,
        lambda_policy,
        lambda_choice,
        effectiveness,
        ci_method: spec.method,
        level: spec.level,
    };

    let mut out = OutputSet::new();
    out.add("estimate.csv", report.to_csv());
    out.add("estimate.json", to_json(&report));
    out.add(
        "config.resolved.json",
        Sidecar::new("estimate", ctx.seed, &ctx.out_dir, ctx.workers, &args)
            .with_input("labeled", &args.labeled)
            .with_input("unlabeled", &args.unlabeled)
            .render(),
    );
    out.write_all(&ctx.out_dir)
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<()> {
    let cfg = load_simulate_config(&args.cfg.config)?;
    let (profile, predictor) = match &args.profile {
        Some(name) => (name.clone(), profile_predictor(name)?),
        None => {
            let predictor = cfg.predictor.clone().ok_or_else(|| {
                Error::InvalidConfig(
                    "config has no [predictor] and no --profile was given".into(),
                )
            })?;
            (predictor.kind_label().to_string(), predictor)
        }
    };

    let interval = cfg.interval.to_spec(0);
    let options = StudyOptions {
        superpopulation: cfg.study.superpopulation,
        keep_per_replication: false,
    };
    let mut rows = Vec::new();
    for policy_spec in &cfg.policies {
        let policy = policy_spec.to_policy()?;
        let report = run_replications(
            &cfg.population,
            &predictor,
            cfg.study.n_human,
            policy,
            &interval,
            cfg.study.replications,
            ctx.seed,
            &options,
        )?;
        rows.push(SimulateRow {
            profile: profile.clone(),
            policy: policy.label(),
            report,
        });
    }

    let mut out = OutputSet::new();
    out.add("simulate.csv", simulate_csv(&rows));
    out.add("summary.json", to_json(&rows));
    out.add(
        "config.resolved.json",
        Sidecar::new("simulate", ctx.seed, &ctx.out_dir, ctx.workers, (&cfg, &args.profile))
            .with_input("config", &args.cfg.config)
            .render(),
    );
    out.write_all(&ctx.out_dir)
}

pub fn coverage(ctx: &Context, args: ConfigArgs) -> Result<()> {
    let cfg = load_coverage_config(&args.config)?;
    let policy = match &cfg.policy {
        Some(spec) => spec.to_policy()?,
        None => LambdaPolicy::Opt,
    };
    let methods = cfg
        .methods
        .clone()
        .unwrap_or_else(|| vec![CiMethod::AnalyticNormal, CiMethod::BootstrapPercentile]);

    let options = StudyOptions {
        superpopulation: cfg.study.superpopulation,
        keep_per_replication: true,
    };
    let mut rows = Vec::new();
    for method in methods {
        let mut interval = cfg.interval.to_spec(0);
        interval.method = method;
        let mut report = run_replications(
            &cfg.population,
            &cfg.predictor,
            cfg.study.n_human,
            policy,
            &interval,
            cfg.study.replications,
            ctx.seed,
            &options,
        )?;
        let records = report.per_replication.take().unwrap_or_default();
        let mean_ci_width = records
            .iter()
            .map(|r| r.ci_high - r.ci_low)
            .sum::<f64>()
            / records.len().max(1) as f64;
        rows.push(CoverageRow {
            method,
            level: interval.level,
            report,
            mean_ci_width,
        });
    }

    let mut out = OutputSet::new();
    out.add("coverage.csv", coverage_csv(&rows));
    out.add("summary.json", to_json(&rows));
    out.add(
        "config.resolved.json",
        Sidecar::new("coverage", ctx.seed, &ctx.out_dir, ctx.workers, &cfg)
            .with_input("config", &args.config)
            .render(),
    );
    out.write_all(&ctx.out_dir)
}

pub fn ess_curve(ctx: &Context, args: ConfigArgs) -> Result<()> {
    let cfg = load_ess_curve_config(&args.config)?;
    let interval = cfg.interval.to_spec(0);
    let options = StudyOptions {
        superpopulation: cfg.superpopulation,
        keep_per_replication: false,
    };
    let mut rows = Vec::new();
    for &n_human in &cfg.n_human_grid {
        let report = run_replications(
            &cfg.population,
            &cfg.predictor,
            n_human,
            LambdaPolicy::Opt,
            &interval,
            cfg.replications,
            ctx.seed,
            &options,
        )?;
        rows.push((n_human, report));
    }

    let mut out = OutputSet::new();
    out.add("ess_curve.csv", ess_curve_csv(&rows));
    out.add("summary.json", to_json(&rows));
    out.add(
        "config.resolved.json",
        Sidecar::new("ess-curve", ctx.seed, &ctx.out_dir, ctx.workers, &cfg)
            .with_input("config", &args.config)
            .render(),
    );
    out.write_all(&ctx.out_dir)
}

#[derive(Serialize)]
struct AllocateSummary<'a> {
    budget: usize,
    points: &'a [rectify_core::AllocationPoint],
    frontier: &'a [rectify_core::AllocationPoint],
}

pub fn allocate(ctx: &Context, args: ConfigArgs) -> Result<()> {
    let cfg = load_allocate_config(&args.config)?;
    let curve = cfg.curve.to_curve(&cfg.population);
    let interval = cfg.interval.to_spec(0);
    let sweep = run_allocation_sweep(
        cfg.budget,
        &cfg.shares,
        &cfg.population,
        &curve,
        &interval,
        cfg.replications,
        ctx.seed,
    )?;
    let frontier = pareto_frontier(&sweep.points);
    let frontier_shares: Vec<f64> = frontier.iter().map(|p| p.ft_share).collect();

    let mut out = OutputSet::new();
    out.add("allocate.csv", allocation_csv(&sweep, &frontier_shares));
    out.add("allocate_scatter.csv", allocation_scatter_csv(&sweep));
    out.add(
        "summary.json",
        to_json(&AllocateSummary {
            budget: sweep.budget,
            points: &sweep.points,
            frontier: &frontier,
        }),
    );
    out.add(
        "config.resolved.json",
        Sidecar::new("allocate", ctx.seed, &ctx.out_dir, ctx.workers, (&cfg, &curve))
            .with_input("config", &args.config)
            .render(),
    );
    out.write_all(&ctx.out_dir)
}

#[derive(Serialize)]
struct SubgroupSummary {
    theta_rec: f64,
    lambda: f64,
    n_human: usize,
    group_key: String,
    rows: Vec<rectify_core::SubgroupRow>,
}

pub fn subgroup(ctx: &Context, args: ConfigArgs) -> Result<()> {
    let cfg = load_subgroup_config(&args.config)?;
    if cfg.schema.response_col.is_none() {
        return Err(Error::InvalidConfig(
            "subgroup analysis runs in evaluation mode; the schema must declare response_col".into(),
        ));
    }
    let frame_path = config::resolve_relative(&args.config, &cfg.frame);
    let map = match &cfg.map {
        Some(p) => ScalarMap::from_toml_file(&config::resolve_relative(&args.config, p))?,
        None => ScalarMap::NumericPassthrough,
    };
    let frame = load_frame(&frame_path, &cfg.schema.to_schema(), &map)?.into_labeled()?;

    let (h, u) = split_frame(&frame, cfg.n_human, &mut substream(ctx.seed, "split", 0))?;
    let choice = lambda_opt_mean(&h, &u)?;
    let est = rectified_mean(&h, &u, choice.lambda)?;

    let rows = subgroup_bias_report(&frame, est.theta_hat, &cfg.group_key, cfg.recenter.into())?;

    let mut out = OutputSet::new();
    out.add("subgroup.csv", subgroup_csv(&rows));
    out.add(
        "summary.json",
        to_json(&SubgroupSummary {
            theta_rec: est.theta_hat,
            lambda: est.lambda,
            n_human: cfg.n_human,
            group_key: cfg.group_key.clone(),
            rows,
        }),
    );
    out.add(
        "config.resolved.json",
        Sidecar::new("subgroup", ctx.seed, &ctx.out_dir, ctx.workers, &cfg)
            .with_input("config", &args.config)
            .with_input("frame", &frame_path)
            .render(),
    );
    out.write_all(&ctx.out_dir)
}
