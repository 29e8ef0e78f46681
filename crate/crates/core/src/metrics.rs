//! Evaluation metrics: relative bias, effective-sample-size gain,
//! individual-level MAE, and the subgroup recentering analysis.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::LabeledSet;
use crate::stats::mean;

/// Relative error of an estimate against the true value, in percent.
pub fn bias_pct(theta_hat: f64, theta_star: f64) -> Result<f64> {
    if theta_star == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok(100.0 * (theta_hat - theta_star).abs() / theta_star)
}

/// Effective-sample-size gain in percent: a gain of 50 means the method is as
/// precise as having 1.5x more human data. Negative gains mean the method is
/// noisier than the human-only estimator.
pub fn ess_gain_pct(var_human: f64, var_method: f64) -> Result<f64> {
    if var_method <= 0.0 {
        return Err(Error::ZeroMethodVariance(var_method));
    }
    Ok(100.0 * (var_human / var_method - 1.0))
}

/// Mean absolute error between paired truths and predictions, in response
/// units. Individual error stays large even when population bias is fully
/// corrected; this quantifies that gap.
pub fn individual_mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("individual_mae needs pairs".into()));
    }
    Ok(pairs.iter().map(|(y, yhat)| (y - yhat).abs()).sum::<f64>() / pairs.len() as f64)
}

/// How recentered predictions are shifted onto the rectified estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecenterMode {
    /// Add a constant so the frame-level prediction mean equals the estimate.
    Additive,
    /// Rescale predictions by a constant factor instead; sensitivity variant.
    Multiplicative,
}

/// One row of the subgroup bias table.
#[derive(Debug, Clone, Serialize)]
pub struct SubgroupRow {
    pub group_label: String,
    pub n_group: usize,
    pub bias_before_pct: f64,
    pub bias_after_pct: f64,
    /// `bias_before_pct - bias_after_pct`; positive means improvement.
    pub abs_delta: f64,
    /// `100 * abs_delta / bias_before_pct` when the denominator is positive.
    pub rel_delta_pct: f64,
}

/// Per-subgroup bias before and after recentering every prediction around the
/// rectified estimate. The frame must carry ground truth (evaluation mode),
/// predictions, and the group column; rows come back sorted by group label.
pub fn subgroup_bias_report(
    frame: &LabeledSet,
    theta_rec: f64,
    group_key: &str,
    mode: RecenterMode,
) -> Result<Vec<SubgroupRow>> {
    let key_idx = frame
        .group_names
        .iter()
        .position(|g| g == group_key)
        .ok_or_else(|| Error::UnknownGroupKey {
            key: group_key.to_string(),
            available: frame.group_names.clone(),
        })?;

    let yhats = frame.yhats();
    let frame_mean = mean(&yhats);
    let recenter: Box<dyn Fn(f64) -> f64> = match mode {
        RecenterMode::Additive => {
            let delta = theta_rec - frame_mean;
            Box::new(move |yhat| yhat + delta)
        }
        RecenterMode::Multiplicative => {
            if frame_mean == 0.0 {
                return Err(Error::InvalidInput(
                    "multiplicative recentering needs a nonzero prediction mean".into(),
                ));
            }
            let factor = theta_rec / frame_mean;
            Box::new(move |yhat| yhat * factor)
        }
    };

    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &frame.records {
        groups
            .entry(r.groups[key_idx].as_str())
            .or_default()
            .push((r.y, r.yhat));
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (label, members) in groups {
        let truth: Vec<f64> = members.iter().map(|(y, _)| *y).collect();
        let preds: Vec<f64> = members.iter().map(|(_, yhat)| *yhat).collect();
        let shifted: Vec<f64> = preds.iter().map(|&p| recenter(p)).collect();
        let truth_mean = mean(&truth);
        if truth_mean == 0.0 {
            return Err(Error::ZeroGroupTruthMean {
                group: label.to_string(),
            });
        }
        let bias_before_pct = 100.0 * (mean(&preds) - truth_mean).abs() / truth_mean;
        let bias_after_pct = 100.0 * (mean(&shifted) - truth_mean).abs() / truth_mean;
        let abs_delta = bias_before_pct - bias_after_pct;
        let rel_delta_pct = if bias_before_pct > 0.0 {
            100.0 * abs_delta / bias_before_pct
        } else {
            0.0
        };
        rows.push(SubgroupRow {
            group_label: label.to_string(),
            n_group: members.len(),
            bias_before_pct,
            bias_after_pct,
            abs_delta,
            rel_delta_pct,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::LabeledRecord;

    #[test]
    fn bias_pct_identities() {
        assert_eq!(bias_pct(3.16, 3.16).unwrap(), 0.0);
        let b = bias_pct(1900.0, 1766.0).unwrap();
        assert!((b - 100.0 * 134.0 / 1766.0).abs() < 1e-12);
        assert!((b - 7.5877).abs() < 1e-3);
        assert!(matches!(bias_pct(1.0, 0.0), Err(Error::ZeroTruth)));
    }

    #[test]
    fn bias_pct_is_scale_invariant() {
        let a = bias_pct(1.3, 1.0).unwrap();
        let b = bias_pct(13.0, 10.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ess_gain_examples() {
        assert_eq!(ess_gain_pct(2.0, 2.0).unwrap(), 0.0);
        assert!((ess_gain_pct(1.5, 1.0).unwrap() - 50.0).abs() < 1e-12);
        assert!((ess_gain_pct(1.0, 2.0).unwrap() + 50.0).abs() < 1e-12);
        assert!(matches!(
            ess_gain_pct(1.0, 0.0),
            Err(Error::ZeroMethodVariance(_))
        ));
    }

    #[test]
    fn mae_examples() {
        assert_eq!(individual_mae(&[(1.0, 1.0), (2.0, 2.0)]).unwrap(), 0.0);
        assert_eq!(individual_mae(&[(0.0, 1.0), (2.0, 0.0)]).unwrap(), 1.5);
        assert!(individual_mae(&[]).is_err());
    }

    fn grouped_frame(rows: &[(&str, f64, f64)]) -> LabeledSet {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(g, y, yhat))| LabeledRecord {
                respondent_id: format!("p{i}"),
                covariates: vec![],
                groups: vec![g.to_string()],
                y,
                yhat,
            })
            .collect();
        LabeledSet::new(vec![], vec!["sex".into()], records).unwrap()
    }

    #[test]
    fn uniform_shift_is_fully_corrected() {
        // +10% of the frame mean added to every prediction; exact theta_rec.
        // theta_star = mean(y) = 10; shift = 1.0 on all records.
        let frame = grouped_frame(&[
            ("a", 8.0, 9.0),
            ("a", 12.0, 13.0),
            ("b", 6.0, 7.0),
            ("b", 14.0, 15.0),
        ]);
        let rows = subgroup_bias_report(&frame, 10.0, "sex", RecenterMode::Additive).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.bias_before_pct > 0.0);
            assert!(row.bias_after_pct < 1e-10, "{row:?}");
        }
    }

    #[test]
    fn heterogeneous_bias_can_worsen_a_clean_group() {
        // Group a: +20% bias; group b: unbiased. Equal sizes, exact theta_rec.
        // Recentering helps a but pushes b away from truth.
        let frame = grouped_frame(&[
            ("a", 10.0, 12.0),
            ("a", 10.0, 12.0),
            ("b", 10.0, 10.0),
            ("b", 10.0, 10.0),
        ]);
        let rows = subgroup_bias_report(&frame, 10.0, "sex", RecenterMode::Additive).unwrap();
        let a = &rows[0];
        let b = &rows[1];
        assert_eq!(a.group_label, "a");
        assert!(a.bias_after_pct < a.bias_before_pct);
        assert_eq!(b.bias_before_pct, 0.0);
        assert!(b.bias_after_pct > 0.0, "clean group must deteriorate");
        assert!(b.abs_delta < 0.0);
    }

    #[test]
    fn single_group_absorbs_everything() {
        let frame = grouped_frame(&[("a", 9.0, 13.0), ("a", 11.0, 15.0)]);
        let theta_rec = 10.3;
        let rows = subgroup_bias_report(&frame, theta_rec, "sex", RecenterMode::Additive).unwrap();
        assert_eq!(rows.len(), 1);
        let expected = 100.0 * (theta_rec - 10.0).abs() / 10.0;
        assert!((rows[0].bias_after_pct - expected).abs() < 1e-10);
    }

    #[test]
    fn recentering_preserves_frame_mean() {
        // Both modes pin the frame-level mean of recentered predictions to
        // theta_rec, and the n-weighted group means agree with it.
        let frame = grouped_frame(&[
            ("a", 8.0, 9.5),
            ("a", 12.0, 17.0),
            ("b", 6.0, 5.5),
            ("b", 14.0, 21.0),
        ]);
        let theta_rec = 9.75;
        let yhats = frame.yhats();
        let m = mean(&yhats);
        for mode in [RecenterMode::Additive, RecenterMode::Multiplicative] {
            subgroup_bias_report(&frame, theta_rec, "sex", mode).unwrap();
            let recentered: Vec<f64> = match mode {
                RecenterMode::Additive => yhats.iter().map(|v| v + (theta_rec - m)).collect(),
                RecenterMode::Multiplicative => yhats.iter().map(|v| v * (theta_rec / m)).collect(),
            };
            assert!((mean(&recentered) - theta_rec).abs() < 1e-12);
            let group_means: Vec<(usize, f64)> = [(0usize, 2usize), (2, 4)]
                .iter()
                .map(|&(lo, hi)| (hi - lo, mean(&recentered[lo..hi])))
                .collect();
            let total: usize = group_means.iter().map(|(n, _)| n).sum();
            let weighted: f64 = group_means
                .iter()
                .map(|(n, gm)| *n as f64 * gm)
                .sum::<f64>()
                / total as f64;
            assert!((weighted - theta_rec).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_group_key_is_reported() {
        let frame = grouped_frame(&[("a", 1.0, 1.0), ("b", 2.0, 2.0)]);
        assert!(matches!(
            subgroup_bias_report(&frame, 1.5, "race", RecenterMode::Additive),
            Err(Error::UnknownGroupKey { .. })
        ));
    }
}
