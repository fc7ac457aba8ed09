//! The MLP classifier and its checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, GradientMap, Tensor, Var};

pub use loss::{
    argmax, cross_entropy, entropy, kl_divergence, score, SoftLabel, PROB_FLOOR,
};

/// One affine layer: `weight` is `[in, out]`, `bias` is `[1, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    fn zeros_like(&self) -> Dense {
        Dense {
            weight: Tensor::zeros(self.weight.shape().to_vec()).expect("valid shape"),
            bias: Tensor::zeros(self.bias.shape().to_vec()).expect("valid shape"),
        }
    }
}

/// Feed-forward classifier: relu on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
}

/// Per-layer gradients laid out exactly like [`Mlp::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads(pub Vec<Dense>);

impl ParamGrads {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self(model.layers.iter().map(Dense::zeros_like).collect())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(l.bias.data()).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .all(|l| l.weight.data().iter().chain(l.bias.data()).all(|v| v.is_finite()))
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::invalid(format!(
            "an MLP needs at least 2 layer sizes, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid(format!("layer sizes must be positive: {sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    /// He-uniform weights, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, drawn
    /// layer by layer in row-major order from a ChaCha8 stream seeded with
    /// `seed`. Biases start at zero.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                let weight: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
                Dense {
                    weight: Tensor::matrix(fan_in, fan_out, weight).expect("sized"),
                    bias: Tensor::zeros(vec![1, fan_out]).expect("sized"),
                }
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::invalid("an MLP needs at least one layer"));
        };
        let mut sizes = vec![first.in_dim()];
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.shape() != [1, l.out_dim()] {
                return Err(Error::shape(
                    "mlp",
                    format!(
                        "layer {i}: weight {:?} with bias {:?}",
                        l.weight.shape(),
                        l.bias.shape()
                    ),
                ));
            }
            if l.in_dim() != *sizes.last().unwrap() {
                return Err(Error::shape(
                    "mlp",
                    format!(
                        "layer {i} expects {} inputs but previous layer yields {}",
                        l.in_dim(),
                        sizes.last().unwrap()
                    ),
                ));
            }
            sizes.push(l.out_dim());
        }
        Ok(Self { sizes, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Insert the parameters into `g`, as differentiable leaves when
    /// `trainable` and as constants otherwise.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (g.param(l.weight.clone()), g.param(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                }
            })
            .collect();
        BoundMlp {
            layers,
            input_dim: self.input_dim(),
        }
    }

    /// Logits for a `[B, d]` batch without recording gradients.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = params.forward(&mut g, xv)?;
        Ok(g.value(out).clone())
    }

    /// Arg-max class per row; ties go to the lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let z = self.logits(x)?;
        Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
    }

    /// `softmax(f(x) / tau)` per row.
    pub fn probabilities(&self, x: &Tensor, tau: f64) -> Result<Vec<SoftLabel>> {
        score(&self.logits(x)?, tau)
    }
}

/// Parameters of an [`Mlp`] inserted into a particular graph.
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    input_dim: usize,
}

impl BoundMlp {
    /// `[B, d]` inputs to `[B, C]` logits.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::shape(
                "forward",
                format!("input {shape:?} does not match input width {}", self.input_dim),
            ));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w)?;
            let out_shape = g.value(z).shape().to_vec();
            let bb = g.broadcast(b, &out_shape)?;
            let z = g.add(z, bb)?;
            h = if i < last { g.relu(z)? } else { z };
        }
        Ok(h)
    }

    pub fn gradients(&self, grads: &GradientMap, model: &Mlp) -> ParamGrads {
        ParamGrads(
            self.layers
                .iter()
                .zip(&model.layers)
                .map(|(&(w, b), l)| Dense {
                    weight: grads.get_or_zeros(w, &l.weight),
                    bias: grads.get_or_zeros(b, &l.bias),
                })
                .collect(),
        )
    }
}
