use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bundle of named parameter tensors that an optimizer can walk in a
/// fixed order. Gradients use the same type, so shapes line up by
/// construction.
pub trait ParamSet {
    fn tensors(&self) -> Vec<(&'static str, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// First/second moment accumulators with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn for_params<P: ParamSet>(config: AdamConfig, params: &P) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self::new(config, &sizes)
    }

    /// One update over `params` given `grads` of the same layout.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((name, p), (_, g))) in params.iter().zip(&grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "{name}: param {} / grad {} / state {}",
                    p.len(),
                    g.len(),
                    self.m[i].len()
                )));
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.t as f64);
        let bc2 = 1.0 - beta2.powf(self.t as f64);
        for (i, ((_, p), (_, g))) in params.iter_mut().zip(&grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Flat(Vec<f64>);

    impl ParamSet for Flat {
        fn tensors(&self) -> Vec<(&'static str, &[f64])> {
            vec![("flat", &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            vec![("flat", &mut self.0)]
        }
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let mut theta = Flat(vec![0.0]);
        let mut state = AdamState::for_params(AdamConfig::default(), &theta);
        state.step(&mut theta, &Flat(vec![1.0])).unwrap();
        assert_eq!(state.t, 1);
        // m̂ = v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        let expected = -0.0003 / (1.0 + 1e-8);
        assert!((theta.0[0] - expected).abs() < 1e-18, "{}", theta.0[0]);
        assert!((theta.0[0] + 0.000299999997).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut theta = Flat(vec![0.5, -2.0]);
        let mut state = AdamState::for_params(AdamConfig::default(), &theta);
        state.step(&mut theta, &Flat(vec![0.0, 0.0])).unwrap();
        assert_eq!(theta.0, vec![0.5, -2.0]);
    }

    #[test]
    fn identical_calls_are_deterministic() {
        let init = Flat(vec![0.1, 0.2, 0.3]);
        let g = Flat(vec![0.7, -1.1, 3.0]);
        let run = || {
            let mut p = init.clone();
            let mut s = AdamState::for_params(AdamConfig::default(), &p);
            s.step(&mut p, &g).unwrap();
            s.step(&mut p, &g).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let init = Flat(vec![0.1, -0.2, 1e-30]);
        let mut p = init.clone();
        let mut s = AdamState::for_params(AdamConfig::with_lr(0.0), &p);
        for _ in 0..10 {
            s.step(&mut p, &Flat(vec![1.0, -5.0, 0.3])).unwrap();
        }
        assert_eq!(
            p.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            init.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(s.t, 10);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Flat(vec![0.0; 3]);
        let mut s = AdamState::for_params(AdamConfig::default(), &p);
        assert!(s.step(&mut p, &Flat(vec![0.0; 2])).is_err());
        assert_eq!(s.t, 0);
    }
}
