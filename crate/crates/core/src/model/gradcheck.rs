//! Reverse-mode gradients against central finite differences on random
//! small MLPs and loss compositions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{cross_entropy_rows, kl_rows, kl_rows_const, log_softmax, softmax};
use super::{Mlp, SoftLabel};
use crate::error::Result;
use crate::tensor::{finite_difference_grad, max_relative_error, Graph, Tensor, Var};

/// Scalar losses built on top of the MLP output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    CrossEntropy,
    SmoothedCrossEntropy,
    KlClean,
    KlConstant,
    TemperedSquares,
}

impl Composition {
    pub const ALL: [Composition; 5] = [
        Composition::CrossEntropy,
        Composition::SmoothedCrossEntropy,
        Composition::KlClean,
        Composition::KlConstant,
        Composition::TemperedSquares,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Composition::CrossEntropy => "cross_entropy",
            Composition::SmoothedCrossEntropy => "smoothed_cross_entropy",
            Composition::KlClean => "kl_clean_vs_shifted",
            Composition::KlConstant => "kl_constant_vs_model",
            Composition::TemperedSquares => "tempered_softmax_squares",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckCase {
    pub sizes: Vec<usize>,
    pub composition: Composition,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub cases: Vec<GradcheckCase>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.max_rel_error < self.tolerance)
    }
}

struct Problem {
    x: Tensor,
    x_shift: Tensor,
    targets: Vec<SoftLabel>,
    reference: Vec<SoftLabel>,
}

fn loss(g: &mut Graph, model: &Mlp, p: &Problem, comp: Composition, trainable: bool) -> Result<(Var, super::BoundMlp)> {
    let params = model.bind(g, trainable);
    let x = g.constant(p.x.clone());
    let z = params.forward(g, x)?;
    let rows = match comp {
        Composition::CrossEntropy => cross_entropy_rows(g, z, &p.targets, 0.0)?,
        Composition::SmoothedCrossEntropy => cross_entropy_rows(g, z, &p.targets, 0.2)?,
        Composition::KlClean => {
            let xs = g.constant(p.x_shift.clone());
            let zs = params.forward(g, xs)?;
            let lp = log_softmax(g, z, 1.0)?;
            let lq = log_softmax(g, zs, 1.0)?;
            kl_rows(g, lp, lq)?
        }
        Composition::KlConstant => {
            let lq = log_softmax(g, z, 2.0)?;
            kl_rows_const(g, &p.reference, lq)?
        }
        Composition::TemperedSquares => {
            let s = softmax(g, z, 0.5)?;
            let sq = g.mul(s, s)?;
            g.sum_axis(sq, 1)?
        }
    };
    Ok((g.mean(rows)?, params))
}

fn random_label(rng: &mut ChaCha8Rng, classes: usize) -> Result<SoftLabel> {
    let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let head: f64 = p[1..].iter().sum();
    p[0] = 1.0 - head;
    SoftLabel::new(p)
}

/// Run `cases` random checks. Case `i` uses composition `i mod 5`.
pub fn run_gradcheck(cases: usize, seed: u64, tolerance: f64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cases);
    for i in 0..cases {
        let comp = Composition::ALL[i % Composition::ALL.len()];
        let d = rng.gen_range(1..=4);
        let depth = rng.gen_range(1..=2);
        let mut sizes = vec![d];
        for _ in 0..depth {
            sizes.push(rng.gen_range(2..=6));
        }
        let classes = rng.gen_range(2..=4);
        sizes.push(classes);
        let mut model = Mlp::init(&sizes, rng.gen())?;
        // zero biases behind a dead layer would sit exactly on a ReLU kink
        for layer in model.layers_mut() {
            let n = layer.bias.len();
            layer.bias = Tensor::new(layer.bias.shape().to_vec(), (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())?;
        }
        let b = rng.gen_range(1..=4);
        let mut rand_t = |s: f64| Tensor::matrix(b, d, (0..b * d).map(|_| rng.gen_range(-s..s)).collect());
        let x = rand_t(1.0)?;
        let noise = rand_t(0.3)?;
        let x_shift = Tensor::matrix(b, d, x.data().iter().zip(noise.data()).map(|(a, n)| a + n).collect())?;
        let mut targets = Vec::with_capacity(b);
        let mut reference = Vec::with_capacity(b);
        for _ in 0..b {
            targets.push(random_label(&mut rng, classes)?);
            reference.push(random_label(&mut rng, classes)?);
        }
        let problem = Problem {
            x,
            x_shift,
            targets,
            reference,
        };

        let mut g = Graph::new();
        let (root, params) = loss(&mut g, &model, &problem, comp, true)?;
        let analytic = params.gradients(&g.backward(root)?, &model);
        let mut worst: f64 = 0.0;
        for li in 0..model.layers().len() {
            for which in 0..2 {
                let base = if which == 0 { &model.layers()[li].weight } else { &model.layers()[li].bias };
                let fd = finite_difference_grad(
                    |w| {
                        let mut m = model.clone();
                        let layer = &mut m.layers_mut()[li];
                        if which == 0 {
                            layer.weight = w.clone();
                        } else {
                            layer.bias = w.clone();
                        }
                        let mut g = Graph::new();
                        let (root, _) = loss(&mut g, &m, &problem, comp, false)?;
                        Ok(g.value(root).data()[0])
                    },
                    base,
                    1e-6,
                )?;
                let a = if which == 0 { &analytic.0[li].weight } else { &analytic.0[li].bias };
                worst = worst.max(max_relative_error(a, &fd));
            }
        }
        out.push(GradcheckCase {
            sizes,
            composition: comp,
            max_rel_error: worst,
        });
    }
    Ok(GradcheckReport {
        cases: out,
        tolerance,
    })
}
