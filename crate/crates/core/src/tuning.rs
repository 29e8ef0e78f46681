//! Power tuning: choose lambda to minimize the plug-in variance of the
//! rectified mean.
//!
//! The plug-in objective is
//!
//! `V(lambda) = lambda^2 v_U / N + (s_y^2 - 2 lambda c + lambda^2 s_yhat^2) / n`
//!
//! with all moments taken with the n-1 denominator: `c` the H covariance of
//! (y, yhat), `s_yhat^2` and `s_y^2` the H variances, `v_U` the U variance of
//! predictions. The closed-form minimizer is `c / (s_yhat^2 + (n/N) v_U)`,
//! clamped to [0, 1]. A grid search over the same objective serves as a
//! verification oracle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{LabeledSet, UnlabeledFrame};
use crate::stats::{sample_cov, sample_var};

/// Denominators below this make the objective flat; fall back to lambda = 0.
const DEGENERATE_DENOM: f64 = 1e-15;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaChoice {
    /// The selected lambda, always in [0, 1].
    pub lambda: f64,
    /// Whether the unclamped minimizer fell outside [0, 1].
    pub clamped: bool,
    /// Whether the objective was too flat to tune (lambda falls back to 0,
    /// the human-only estimator).
    pub degenerate: bool,
    /// Plug-in variance at the selected lambda.
    pub objective_value: f64,
    /// The unconstrained minimizer, recorded for diagnostics.
    pub unclamped_argmin: f64,
}

/// Moments of an (H, U) pair that the objective depends on.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TuningMoments {
    pub s_y2: f64,
    pub s_yhat2: f64,
    pub cov: f64,
    pub v_u: f64,
    pub n: usize,
    pub n_u: usize,
}

impl TuningMoments {
    pub fn from_frames(h: &LabeledSet, u: &UnlabeledFrame) -> Result<Self> {
        if u.N() < 2 {
            return Err(Error::EmptyFrame(
                "power tuning needs at least 2 unlabeled records".into(),
            ));
        }
        let ys = h.ys();
        let yhats = h.yhats();
        Ok(TuningMoments {
            s_y2: sample_var(&ys),
            s_yhat2: sample_var(&yhats),
            cov: sample_cov(&ys, &yhats),
            v_u: sample_var(&u.yhats()),
            n: h.n(),
            n_u: u.N(),
        })
    }

    pub fn from_parts(ys: &[f64], yhats_h: &[f64], yhats_u: &[f64]) -> Self {
        TuningMoments {
            s_y2: sample_var(ys),
            s_yhat2: sample_var(yhats_h),
            cov: sample_cov(ys, yhats_h),
            v_u: sample_var(yhats_u),
            n: ys.len(),
            n_u: yhats_u.len(),
        }
    }

    /// The plug-in variance objective V(lambda).
    pub fn objective(&self, lambda: f64) -> f64 {
        lambda * lambda * self.v_u / self.n_u as f64
            + (self.s_y2 - 2.0 * lambda * self.cov + lambda * lambda * self.s_yhat2)
                / self.n as f64
    }

    pub fn choose(&self) -> LambdaChoice {
        let denom = self.s_yhat2 + (self.n as f64 / self.n_u as f64) * self.v_u;
        if denom < DEGENERATE_DENOM {
            return LambdaChoice {
                lambda: 0.0,
                clamped: false,
                degenerate: true,
                objective_value: self.objective(0.0),
                unclamped_argmin: 0.0,
            };
        }
        let raw = self.cov / denom;
        let lambda = raw.clamp(0.0, 1.0);
        LambdaChoice {
            lambda,
            clamped: lambda != raw,
            degenerate: false,
            objective_value: self.objective(lambda),
            unclamped_argmin: raw,
        }
    }
}

/// Closed-form minimizer of the plug-in variance, clamped to [0, 1].
pub fn lambda_opt_mean(h: &LabeledSet, u: &UnlabeledFrame) -> Result<LambdaChoice> {
    Ok(TuningMoments::from_frames(h, u)?.choose())
}

/// Evaluate the plug-in objective on a grid and return the minimizing point
/// (smallest grid point on ties). Verification oracle for the closed form.
pub fn lambda_grid_search(h: &LabeledSet, u: &UnlabeledFrame, step: f64) -> Result<LambdaChoice> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "grid step must lie in (0, 1], got {step}"
        )));
    }
    let moments = TuningMoments::from_frames(h, u)?;

    let mut best_lambda = 0.0;
    let mut best_value = moments.objective(0.0);
    let mut k = 1u64;
    loop {
        let lambda = (k as f64 * step).min(1.0);
        let value = moments.objective(lambda);
        if value < best_value {
            best_value = value;
            best_lambda = lambda;
        }
        if lambda >= 1.0 {
            break;
        }
        k += 1;
    }

    Ok(LambdaChoice {
        lambda: best_lambda,
        clamped: false,
        degenerate: false,
        objective_value: best_value,
        unclamped_argmin: best_lambda,
    })
}
