use serde::{Deserialize, Serialize};

use super::SamplerError;

/// Exponential decay constants for the sampling radius and angular dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealParams {
    /// Initial sampling radius (m).
    pub r0: f64,
    pub r_min: f64,
    pub lambda_r: f64,
    /// Initial angular dispersion (degrees).
    pub theta0_deg: f64,
    pub theta_min_deg: f64,
    pub lambda_theta: f64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            r0: 0.25,
            r_min: 0.1,
            lambda_r: 0.693,
            theta0_deg: 90.0,
            theta_min_deg: 30.0,
            lambda_theta: 0.712,
        }
    }
}

impl AnnealParams {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let finite = [
            self.r0,
            self.r_min,
            self.lambda_r,
            self.theta0_deg,
            self.theta_min_deg,
            self.lambda_theta,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite
            || self.r_min <= 0.0
            || self.r_min > self.r0
            || self.theta_min_deg > self.theta0_deg
            || self.lambda_r <= 0.0
            || self.lambda_theta <= 0.0
        {
            return Err(SamplerError::InvalidArgument(format!(
                "invalid anneal parameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Subtask-local step counter plus the schedule constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealState {
    pub subtask_step: u32,
    pub params: AnnealParams,
}

impl AnnealState {
    pub fn new(params: AnnealParams) -> Result<Self, SamplerError> {
        params.validate()?;
        Ok(Self {
            subtask_step: 0,
            params,
        })
    }

    /// `(R, θ)` at the current subtask step: radius in meters, angle in degrees.
    pub fn schedule(&self) -> (f64, f64) {
        schedule_at(&self.params, self.subtask_step)
    }

    pub fn advance(&mut self) {
        self.subtask_step = self.subtask_step.saturating_add(1);
    }
}

/// `R = Rmin + (R0 − Rmin)·exp(−λ_R·t)`, `θ = θmin + (θ0 − θmin)·exp(−λ_θ·t)`.
pub fn schedule_at(p: &AnnealParams, step: u32) -> (f64, f64) {
    if step == 0 {
        return (p.r0, p.theta0_deg);
    }
    let t = f64::from(step);
    let radius = p.r_min + (p.r0 - p.r_min) * (-p.lambda_r * t).exp();
    let theta = p.theta_min_deg + (p.theta0_deg - p.theta_min_deg) * (-p.lambda_theta * t).exp();
    (radius, theta)
}

pub fn schedule(state: &AnnealState) -> (f64, f64) {
    state.schedule()
}
