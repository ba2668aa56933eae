//! First-order optimizers with box projection.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Global learning rate. When absent each parameter uses the default of
    /// its kind (see `ParamSelector::default_lr`).
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub iterations: usize,
    /// Stop once the loss drops below this value.
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    /// Multiplicative learning-rate decay applied after every iteration.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    /// Reject steps that raise the loss and halve the learning rate
    /// instead, so the loss trace never increases. Helps on smooth losses;
    /// on contact-dominated ones it can stall at a kink that plain Adam
    /// steps across.
    #[serde(default = "default_monotone")]
    pub monotone: bool,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_tol() -> f64 {
    1e-14
}
fn default_decay() -> f64 {
    1.0
}
fn default_monotone() -> bool {
    false
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Adam,
            lr: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            iterations: 100,
            tolerance: default_tol(),
            lr_decay: default_decay(),
            monotone: default_monotone(),
        }
    }
}

impl OptimizerConfig {
    pub fn adam(iterations: usize) -> Self {
        OptimizerConfig { iterations, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(SimError::config("learning rate must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SimError::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(SimError::config("Adam epsilon must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(SimError::config("lr_decay must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Optimizer state for a fixed-size parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(cfg: &OptimizerConfig, n: usize) -> Self {
        Optimizer { cfg: cfg.clone(), m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Forgets the moment estimates. The next Adam direction is then the
    /// elementwise sign of the gradient, which always points downhill.
    pub fn reset(&mut self) {
        self.m.iter_mut().chain(self.v.iter_mut()).for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// Update direction for gradient `g` (before scaling by the learning
    /// rate). Advances the moment estimates.
    pub fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        match self.cfg.method {
            Method::Sgd => g.to_vec(),
            Method::Adam => {
                self.t += 1;
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                g.iter()
                    .enumerate()
                    .map(|(i, gi)| {
                        self.m[i] = b1 * self.m[i] + (1.0 - b1) * gi;
                        self.v[i] = b2 * self.v[i] + (1.0 - b2) * gi * gi;
                        let mh = self.m[i] / c1;
                        let vh = self.v[i] / c2;
                        mh / (vh.sqrt() + self.cfg.eps)
                    })
                    .collect()
            }
        }
    }
}

/// `x − lr·d`, clamped to `[lo, hi]` per entry.
pub fn projected_step(x: &[f64], d: &[f64], lr: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(d)
        .zip(lr)
        .zip(bounds)
        .map(|(((x, d), lr), (lo, hi))| (x - lr * d).clamp(*lo, *hi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_three_steps_match_recurrence() {
        let cfg = OptimizerConfig { lr: Some(0.1), ..OptimizerConfig::adam(3) };
        let mut opt = Optimizer::new(&cfg, 1);
        let mut x = vec![0.0];
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut xr = 0.0f64;
        for t in 1..=3 {
            let d = opt.direction(&[1.0]);
            x = projected_step(&x, &d, &[0.1], &[(f64::NEG_INFINITY, f64::INFINITY)]);
            m = 0.9 * m + (1.0 - 0.9) * 1.0;
            v = 0.999 * v + (1.0 - 0.999) * 1.0;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            xr -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert_eq!(x[0].to_bits(), xr.to_bits());
        }
        assert!((x[0] + 0.3).abs() < 1e-6);
    }

    #[test]
    fn box_projection_clamps() {
        let x = projected_step(&[0.5], &[10.0], &[1.0], &[(0.0, 1.0)]);
        assert_eq!(x, vec![0.0]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut opt = Optimizer::new(&OptimizerConfig::adam(1), 2);
        assert_eq!(opt.direction(&[0.0, 0.0]), vec![0.0, 0.0]);
    }
}
