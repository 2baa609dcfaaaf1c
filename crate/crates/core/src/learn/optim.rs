//! Adam with decoupled weight decay. Decay multiplies the parameter
//! directly (before the moment update is applied) and is skipped for
//! tensors whose visit flag says so: normalization parameters and the
//! token embedding table.

use super::model::ModelParams;
use super::scalar::{lit, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 || !(self.eps > 0.0) {
            return Err(Error::Config("bad decay or eps".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<S> {
    pub cfg: OptimConfig,
    pub step_count: u64,
    /// First/second moment per tensor, in `visit_params` order.
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(params: &ModelParams<S>, cfg: OptimConfig) -> Result<Self> {
        cfg.validate()?;
        let m: Vec<Vec<S>> =
            params.visit_params().iter().map(|(_, _, s)| vec![S::zero(); s.len()]).collect();
        let v = m.clone();
        Ok(AdamW { cfg, step_count: 0, m, v })
    }

    pub fn step(&mut self, params: &mut ModelParams<S>, grads: &ModelParams<S>) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let lr = lit::<S>(self.cfg.learning_rate);
        let wd_scale = lit::<S>(1.0 - self.cfg.learning_rate * self.cfg.weight_decay);
        let b1 = lit::<S>(self.cfg.beta1);
        let b2 = lit::<S>(self.cfg.beta2);
        let eps = lit::<S>(self.cfg.eps);
        let bc1 = S::one() - b1.powi(t);
        let bc2 = S::one() - b2.powi(t);
        let one = S::one();

        let gs = grads.visit_params();
        let mut ps = params.visit_params_mut();
        assert_eq!(gs.len(), ps.len(), "optimizer/model tensor count mismatch");
        for (ti, (g, p)) in gs.iter().zip(ps.iter_mut()).enumerate() {
            debug_assert_eq!(g.0, p.0, "tensor order changed");
            let decay = p.1;
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for (j, gj) in g.2.iter().enumerate() {
                m[j] = b1 * m[j] + (one - b1) * *gj;
                v[j] = b2 * v[j] + (one - b2) * *gj * *gj;
                let pj = &mut p.2[j];
                if decay {
                    *pj *= wd_scale;
                }
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *pj -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::model::ModelConfig;

    fn tiny_params() -> ModelParams<f64> {
        ModelParams::init(ModelConfig::tiny(12, 3), false, 77).unwrap()
    }

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut params = tiny_params();
        let before = params.clone();
        let grads = params.zeros_like();
        let cfg = OptimConfig { weight_decay: 0.0, ..OptimConfig::default() };
        let mut opt = AdamW::new(&params, cfg).unwrap();
        for _ in 0..3 {
            opt.step(&mut params, &grads);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn zero_gradient_with_decay_shrinks_only_decayed_tensors() {
        let mut params = tiny_params();
        let before = params.clone();
        let grads = params.zeros_like();
        let mut opt = AdamW::new(&params, OptimConfig::default()).unwrap();
        opt.step(&mut params, &grads);
        let factor = 1.0 - 1e-3 * 0.01;
        for ((name, decay, after), (_, _, orig)) in
            params.visit_params().iter().zip(before.visit_params())
        {
            for (a, o) in after.iter().zip(orig) {
                let expect = if *decay { o * factor } else { *o };
                assert!((a - expect).abs() < 1e-15, "{name}: {a} vs {expect}");
            }
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = tiny_params();
        let before = params.clone();
        let mut grads = params.zeros_like();
        for (_, _, s) in grads.visit_params_mut() {
            for g in s {
                *g = 1.0;
            }
        }
        let cfg = OptimConfig { weight_decay: 0.0, ..OptimConfig::default() };
        let mut opt = AdamW::new(&params, cfg).unwrap();
        opt.step(&mut params, &grads);
        // t=1: mhat = g, vhat = g^2 -> delta = -lr * g/(|g| + eps) ~ -lr.
        for ((name, _, after), (_, _, orig)) in
            params.visit_params().iter().zip(before.visit_params())
        {
            for (a, o) in after.iter().zip(orig) {
                assert!(((a - o) + 1e-3).abs() < 1e-10, "{name}: moved {}", a - o);
            }
        }
    }

    #[test]
    fn moments_track_gradient_sign() {
        let mut params = tiny_params();
        let mut grads = params.zeros_like();
        for (_, _, s) in grads.visit_params_mut() {
            for g in s {
                *g = -2.0;
            }
        }
        let cfg = OptimConfig { weight_decay: 0.0, ..OptimConfig::default() };
        let mut opt = AdamW::new(&params, cfg).unwrap();
        let before = params.clone();
        for _ in 0..5 {
            opt.step(&mut params, &grads);
        }
        assert_eq!(opt.step_count, 5);
        // Constant negative gradient: every parameter moves up.
        for ((name, _, after), (_, _, orig)) in
            params.visit_params().iter().zip(before.visit_params())
        {
            for (a, o) in after.iter().zip(orig) {
                assert!(a > o, "{name} did not increase");
            }
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let params = tiny_params();
        let bad = OptimConfig { beta1: 1.0, ..OptimConfig::default() };
        assert!(AdamW::new(&params, bad).is_err());
        let bad = OptimConfig { learning_rate: 0.0, ..OptimConfig::default() };
        assert!(AdamW::new(&params, bad).is_err());
    }
}
