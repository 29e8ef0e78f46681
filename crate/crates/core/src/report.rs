//! Report rendering. All report bodies are plain CSV built with `Display`
//! float formatting (shortest round-trip representation), so identical
//! studies serialize byte-identically and values reload without loss.

use std::fmt::Write as _;

use serde::Serialize;

use crate::allocation::{regime_for, AllocationSweep};
use crate::estimator::RectifiedEstimate;
use crate::metrics::SubgroupRow;
use crate::simulation::ReplicationReport;
use crate::tuning::LambdaChoice;
use crate::uncertainty::{CiMethod, EffectivenessCheck};

/// Everything the estimate command reports for one (H, U) pair.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimate: RectifiedEstimate,
    pub lambda_policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_choice: Option<LambdaChoice>,
    pub effectiveness: EffectivenessCheck,
    /// ESS gain of the reported estimator against the human-only mean on H.
    pub ess_gain_pct: f64,
    pub ci_method: CiMethod,
    pub level: f64,
}

impl EstimateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "estimand,theta_hat,lambda,lambda_policy,variance,ci_low,ci_high,ci_method,level,\
             n_labeled,n_unlabeled,effective,effectiveness_lhs,effectiveness_rhs,ess_gain_pct\n",
        );
        let (ci_low, ci_high) = self.estimate.ci.unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.estimate.estimand,
            self.estimate.theta_hat,
            self.estimate.lambda,
            self.lambda_policy,
            self.estimate.variance,
            ci_low,
            ci_high,
            self.ci_method,
            self.level,
            self.estimate.n_labeled,
            self.estimate.n_unlabeled,
            self.effectiveness.effective,
            self.effectiveness.lhs,
            self.effectiveness.rhs,
            self.ess_gain_pct,
        );
        out
    }
}

/// One (profile, policy) cell of a simulation study.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateRow {
    pub profile: String,
    pub policy: String,
    pub report: ReplicationReport,
}

/// Method-by-policy table: bias and (coverage-gated) ESS gain per row.
pub fn simulate_csv(rows: &[SimulateRow]) -> String {
    let mut out = String::from(
        "profile,policy,replications,n_human,theta_star,mean_bias_pct,bias_pct_sd,coverage,\
         mean_lambda,ess_gain_pct,ess_reported\n",
    );
    for row in rows {
        let r = &row.report;
        let ess = if r.ess_reported {
            format!("{}", r.mean_ess_gain_pct)
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.profile,
            row.policy,
            r.replications,
            r.n_human,
            r.theta_star,
            r.mean_bias_pct,
            r.bias_pct_sd,
            r.coverage,
            r.mean_lambda,
            ess,
            r.ess_reported,
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageRow {
    pub method: CiMethod,
    pub level: f64,
    pub report: ReplicationReport,
    pub mean_ci_width: f64,
}

pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    let mut out = String::from(
        "method,level,replications,n_human,theta_star,coverage,mean_ci_width,mean_bias_pct,mean_lambda\n",
    );
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.method,
            row.level,
            r.replications,
            r.n_human,
            r.theta_star,
            r.coverage,
            row.mean_ci_width,
            r.mean_bias_pct,
            r.mean_lambda,
        );
    }
    out
}

/// ESS gain per labeled-sample size.
pub fn ess_curve_csv(rows: &[(usize, ReplicationReport)]) -> String {
    let mut out = String::from(
        "n_human,replications,mean_ess_gain_pct,ess_reported,mean_lambda,coverage,mean_bias_pct\n",
    );
    for (n_human, r) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            n_human,
            r.replications,
            r.mean_ess_gain_pct,
            r.ess_reported,
            r.mean_lambda,
            r.coverage,
            r.mean_bias_pct,
        );
    }
    out
}

/// Allocation sweep table with frontier membership and regime labels.
pub fn allocation_csv(sweep: &AllocationSweep, frontier_shares: &[f64]) -> String {
    let mut out = String::from(
        "ft_share,m_train,n_rect,mean_bias_pct,bias_ci_low,bias_ci_high,mean_ess_gain_pct,\
         ess_ci_low,ess_ci_high,coverage,mean_lambda,regime,on_frontier\n",
    );
    for p in &sweep.points {
        let on_frontier = frontier_shares.contains(&p.ft_share);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.ft_share,
            p.m_train,
            p.n_rect,
            p.mean_bias_pct,
            p.bias_ci.0,
            p.bias_ci.1,
            p.mean_ess_gain_pct,
            p.ess_ci.0,
            p.ess_ci.1,
            p.coverage,
            p.mean_lambda,
            regime_for(p.m_train, sweep.budget),
            on_frontier,
        );
    }
    out
}

/// Companion per-replication scatter for ellipse rendering by external tools.
pub fn allocation_scatter_csv(sweep: &AllocationSweep) -> String {
    let mut out = String::from("ft_share,replication,bias_pct,ess_gain_pct\n");
    for s in &sweep.samples {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.ft_share, s.replication, s.bias_pct, s.ess_gain_pct
        );
    }
    out
}

/// Subgroup recentering table.
pub fn subgroup_csv(rows: &[SubgroupRow]) -> String {
    let mut out =
        String::from("group_label,n_group,bias_before_pct,bias_after_pct,abs_delta,rel_delta_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.group_label, r.n_group, r.bias_before_pct, r.bias_after_pct, r.abs_delta, r.rel_delta_pct
        );
    }
    out
}

/// Pretty JSON with a trailing newline, for the machine-readable summaries.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}
