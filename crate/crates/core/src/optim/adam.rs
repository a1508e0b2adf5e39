use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::{GaussianGrads, GaussianSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::config("Adam eps must be positive"));
        }
        Ok(())
    }
}

/// Moment estimates for one flat parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub params: AdamParams,
}

impl AdamState {
    pub fn new(len: usize, params: AdamParams) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Keeps entries of parameters `i` with `keep[i]`, `stride` values each.
    pub fn retain(&mut self, keep: &[bool], stride: usize) {
        let filter = |v: &Vec<f64>| -> Vec<f64> {
            v.chunks_exact(stride)
                .zip(keep)
                .filter(|(_, k)| **k)
                .flat_map(|(c, _)| c.iter().copied())
                .collect()
        };
        self.m = filter(&self.m);
        self.v = filter(&self.v);
    }
}

fn check_grads(group: &'static str, params: &[f64], grads: &[f64], state: &AdamState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            what: group,
            expected: params.len(),
            got: grads.len(),
        });
    }
    if state.len() != params.len() {
        return Err(Error::ShapeMismatch {
            what: group,
            expected: params.len(),
            got: state.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { group, index });
    }
    Ok(())
}

fn apply(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    state.step += 1;
    let AdamParams { beta1, beta2, eps } = state.params;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One bias-corrected Adam update of a flat array. Nothing is modified when
/// the gradient has a non-finite entry.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    check_grads("parameters", params, grads, state)?;
    apply(params, grads, state, lr);
    Ok(())
}

/// Per-group learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Multiplied by the scene extent.
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity_logit: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 2e-4,
            log_scale: 5e-3,
            rotation: 1e-3,
            opacity_logit: 5e-2,
            color: 1e-2,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("position", self.position),
            ("log_scale", self.log_scale),
            ("rotation", self.rotation),
            ("opacity_logit", self.opacity_logit),
            ("color", self.color),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("learning rate for {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Adam over all Gaussian parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianAdam {
    pub positions: AdamState,
    pub log_scales: AdamState,
    pub rotations: AdamState,
    pub opacity_logits: AdamState,
    pub colors: AdamState,
}

impl GaussianAdam {
    pub fn new(n: usize, params: AdamParams) -> Self {
        Self {
            positions: AdamState::new(3 * n, params),
            log_scales: AdamState::new(3 * n, params),
            rotations: AdamState::new(4 * n, params),
            opacity_logits: AdamState::new(n, params),
            colors: AdamState::new(3 * n, params),
        }
    }

    /// Updates every group, then renormalizes quaternions and clamps colors
    /// to `[0, 1]`. `position_lr` is the already extent-scaled rate.
    pub fn step(&mut self, gs: &mut GaussianSet, grads: &GaussianGrads, lr: &LearningRates, position_lr: f64) -> Result<()> {
        check_grads("position", &gs.positions, &grads.positions, &self.positions)?;
        check_grads("log_scale", &gs.log_scales, &grads.log_scales, &self.log_scales)?;
        check_grads("rotation", &gs.rotations, &grads.rotations, &self.rotations)?;
        check_grads("opacity_logit", &gs.opacity_logits, &grads.opacity_logits, &self.opacity_logits)?;
        check_grads("color", &gs.colors, &grads.colors, &self.colors)?;
        apply(&mut gs.positions, &grads.positions, &mut self.positions, position_lr);
        apply(&mut gs.log_scales, &grads.log_scales, &mut self.log_scales, lr.log_scale);
        apply(&mut gs.rotations, &grads.rotations, &mut self.rotations, lr.rotation);
        apply(&mut gs.opacity_logits, &grads.opacity_logits, &mut self.opacity_logits, lr.opacity_logit);
        apply(&mut gs.colors, &grads.colors, &mut self.colors, lr.color);
        gs.normalize_rotations();
        gs.colors.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
        Ok(())
    }

    pub fn retain(&mut self, keep: &[bool]) {
        self.positions.retain(keep, 3);
        self.log_scales.retain(keep, 3);
        self.rotations.retain(keep, 4);
        self.opacity_logits.retain(keep, 1);
        self.colors.retain(keep, 3);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = vec![0.3, -1.2, 4.0];
        let mut s = AdamState::new(3, AdamParams::default());
        adam_step(&mut p, &[0.0; 3], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![0.3, -1.2, 4.0]);
    }

    #[test]
    fn quadratic_converges() {
        let mut x = [1.0];
        let mut s = AdamState::new(1, AdamParams::default());
        for _ in 0..200 {
            let g = [2.0 * x[0]];
            adam_step(&mut x, &g, &mut s, 0.1).unwrap();
        }
        assert!(x[0].abs() < 1e-3, "{}", x[0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.7, -0.02] {
            let mut p = [0.0];
            let mut s = AdamState::new(1, AdamParams::default());
            adam_step(&mut p, &[g], &mut s, 0.05).unwrap();
            assert!((p[0] + 0.05 * f64::signum(g)).abs() < 1e-9);
        }
    }

    #[test]
    fn errors_leave_state_untouched() {
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2, AdamParams::default());
        let err = adam_step(&mut p, &[0.1, f64::NAN], &mut s, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 1, .. }));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step, 0);
        assert!(matches!(adam_step(&mut p, &[0.1], &mut s, 0.1), Err(Error::ShapeMismatch { .. })));
    }
}
