//! SGD with momentum and L2 weight decay, plus a piecewise-constant
//! learning-rate table.

use crate::error::{Error, Result};
use crate::model::{Mlp, ParamGrads};

/// `v <- momentum * v + (grad + weight_decay * param)`, then
/// `param <- param - lr * v`.
pub fn sgd_step(
    model: &mut Mlp,
    grads: &ParamGrads,
    velocity: &mut ParamGrads,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let layers = model.layers_mut();
    if grads.0.len() != layers.len() || velocity.0.len() != layers.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} gradient layers for {} model layers", grads.0.len(), layers.len()),
        ));
    }
    for ((layer, g), v) in layers.iter_mut().zip(&grads.0).zip(velocity.0.iter_mut()) {
        let pairs = [
            (&mut layer.weight, &g.weight, &mut v.weight),
            (&mut layer.bias, &g.bias, &mut v.bias),
        ];
        for (p, g, v) in pairs {
            if p.shape() != g.shape() || p.shape() != v.shape() {
                return Err(Error::shape(
                    "sgd_step",
                    format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
            for ((pi, gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = momentum * *vi + (gi + weight_decay * *pi);
                *pi -= lr * *vi;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(fraction, factor)`: from the first epoch strictly after
    /// `fraction * total_epochs`, the learning rate is `lr * factor`. The
    /// latest entry that applies wins.
    pub lr_decay: Vec<(f64, f64)>,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        for &(f, k) in &self.lr_decay {
            if !(0.0..=1.0).contains(&f) || !(k > 0.0) {
                return Err(Error::invalid(format!("bad learning-rate decay entry {f}:{k}")));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize, total_epochs: usize) -> f64 {
        let mut factor = 1.0;
        let mut best = f64::NEG_INFINITY;
        for &(frac, k) in &self.lr_decay {
            if epoch as f64 > frac * total_epochs as f64 && frac >= best {
                best = frac;
                factor = k;
            }
        }
        self.lr * factor
    }
}

/// Stateful wrapper carrying the momentum buffers between steps.
pub struct Sgd {
    pub config: SgdConfig,
    velocity: ParamGrads,
}

impl Sgd {
    pub fn new(config: SgdConfig, model: &Mlp) -> Self {
        Self {
            config,
            velocity: ParamGrads::zeros_like(model),
        }
    }

    pub fn step(&mut self, model: &mut Mlp, grads: &ParamGrads, lr: f64) -> Result<()> {
        sgd_step(
            model,
            grads,
            &mut self.velocity,
            lr,
            self.config.momentum,
            self.config.weight_decay,
        )
    }
}
