use serde::Serialize;

use super::network::{GradientSet, HashNetwork};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// SGD with heavy-ball momentum and L2 weight decay on weight matrices.
///
/// Per step: `v ← μ·v + g + wd·w` (no decay term for biases), then
/// `w ← w − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub config: SgdConfig,
    velocity: GradientSet<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(net: &HashNetwork<T>, config: SgdConfig) -> Self {
        Self {
            config,
            velocity: GradientSet::zeros_like(net),
        }
    }

    pub fn with_velocity(config: SgdConfig, velocity: GradientSet<T>) -> Self {
        Self { config, velocity }
    }

    pub fn velocity(&self) -> &GradientSet<T> {
        &self.velocity
    }

    pub fn step(&mut self, net: &mut HashNetwork<T>, grads: &GradientSet<T>, lr: f64) -> Result<()> {
        if !grads.congruent_with(net) || !self.velocity.congruent_with(net) {
            return Err(Error::invalid("gradient or velocity shapes do not match the network"));
        }
        let mu = T::from_f64_lossy(self.config.momentum);
        let wd = T::from_f64_lossy(self.config.weight_decay);
        let lr = T::from_f64_lossy(lr);
        for ((layer, g), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.velocity.layers)
        {
            for ((w, &gw), vw) in layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(g.weights.as_slice())
                .zip(v.weights.as_mut_slice())
            {
                *vw = mu * *vw + gw + wd * *w;
                *w -= lr * *vw;
            }
            for ((b, &gb), vb) in layer.bias.iter_mut().zip(&g.bias).zip(&mut v.bias) {
                *vb = mu * *vb + gb;
                *b -= lr * *vb;
            }
        }
        Ok(())
    }
}
