//! Flows `e^{tf}(x)` of vector fields by classical fourth-order Runge-Kutta.
//!
//! Fields here are typically only Lipschitz, so instead of an embedded error
//! estimator the adaptive mode compares a run with `N` steps against one
//! with `2N` steps and keeps doubling until they agree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMethod {
    /// `ceil(|t| / base_step)` equal steps.
    Rk4Fixed,
    /// Step counts doubled until successive runs differ by `< error_target`.
    Rk4Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub method: FlowMethod,
    pub base_step: f64,
    pub error_target: f64,
    /// Bound on the total number of RK4 steps spent on one flow.
    pub max_steps: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { method: FlowMethod::Rk4Adaptive, base_step: 1e-3, error_target: 1e-10, max_steps: 10_000_000 }
    }
}

impl FlowConfig {
    pub fn fixed(base_step: f64) -> Self {
        FlowConfig { method: FlowMethod::Rk4Fixed, base_step, ..FlowConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_step > 0.0 && self.base_step.is_finite()) {
            return Err(Error::InvalidInput(format!("flow step must be positive, got {}", self.base_step)));
        }
        if !(self.error_target > 0.0) {
            return Err(Error::InvalidInput(format!("flow tolerance must be positive, got {}", self.error_target)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("flow step limit must be positive".into()));
        }
        Ok(())
    }
}

/// `steps` RK4 steps of `sign * f` over total time `|t|`.
fn rk4(f: &VectorField, sign: f64, duration: f64, steps: u64, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let h = duration / steps as f64;
    let mut y = x.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut carry = vec![0.0; n];
    for _ in 0..steps {
        f.eval_into(&y, &mut k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * sign * k1[i];
        }
        f.eval_into(&tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * sign * k2[i];
        }
        f.eval_into(&tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * sign * k3[i];
        }
        f.eval_into(&tmp, &mut k4)?;
        // weights summed first so a constant field advances by exactly h;
        // compensated summation keeps the rounding of many small increments
        // out of the state
        for i in 0..n {
            let incr = sign * (h * ((k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0)) - carry[i];
            let next = y[i] + incr;
            carry[i] = (next - y[i]) - incr;
            y[i] = next;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
    }
    Ok(y)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Solution of `y' = f(y)`, `y(0) = x`, at time `t`. Negative `t`
/// integrates `-f` over `|t|`.
pub fn flow(f: &VectorField, t: f64, x: &[f64], cfg: &FlowConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() });
    }
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("flow time must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(x.to_vec());
    }
    let sign = t.signum();
    let duration = t.abs();
    let mut steps = ((duration / cfg.base_step).ceil() as u64).max(1);
    let mut spent = steps;
    if spent > cfg.max_steps {
        return Err(Error::StepLimitExceeded(cfg.max_steps));
    }
    let mut coarse = rk4(f, sign, duration, steps, x)?;
    if cfg.method == FlowMethod::Rk4Fixed {
        return Ok(coarse);
    }
    loop {
        steps *= 2;
        spent += steps;
        if spent > cfg.max_steps {
            return Err(Error::StepLimitExceeded(cfg.max_steps));
        }
        let fine = rk4(f, sign, duration, steps, x)?;
        if max_diff(&fine, &coarse) < cfg.error_target {
            return Ok(fine);
        }
        coarse = fine;
    }
}

/// `(e^{tf})^{-1}(x) = e^{-tf}(x)`.
pub fn flow_inverse(f: &VectorField, t: f64, x: &[f64], cfg: &FlowConfig) -> Result<Vec<f64>> {
    flow(f, -t, x, cfg)
}
