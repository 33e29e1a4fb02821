//! Adam with bias correction.

use std::collections::BTreeMap;

use ndarray::{ArrayD, Zip};

use crate::{ParamStore, Real, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<F: Real> {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (ArrayD<F>, ArrayD<F>)>,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moment estimates of one parameter.
    pub fn moments(&self, name: &str) -> Option<(&ArrayD<F>, &ArrayD<F>)> {
        self.moments.get(name).map(|(m, v)| (m, v))
    }

    /// One update of every parameter in `params`. Parameters missing from
    /// `grads` are treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<F>, grads: &BTreeMap<String, ArrayD<F>>) -> Result<()> {
        for (name, g) in grads {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(TensorError::shape(
                    "adam",
                    format!("gradient {:?} for parameter `{name}` {:?}", g.shape(), p.shape()),
                ));
            }
        }
        self.step += 1;
        let c = self.config;
        let b1 = F::of(c.beta1);
        let b2 = F::of(c.beta2);
        let lr = F::of(c.lr);
        let eps = F::of(c.eps);
        let bc1 = F::of(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = F::of(1.0 - c.beta2.powi(self.step as i32));
        let one = F::one();
        for (name, p) in params.iter_mut() {
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (ArrayD::zeros(p.raw_dim()), ArrayD::zeros(p.raw_dim())));
            let zero;
            let g = match grads.get(name) {
                Some(g) => g,
                None => {
                    zero = ArrayD::zeros(p.raw_dim());
                    &zero
                }
            };
            Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
        Ok(())
    }
}
