//! ℓ∞ PGD with sign-gradient ascent steps and random starts.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::loss::{cross_entropy_rows, kl_rows_const, log_softmax};
use crate::model::{Mlp, SoftLabel};
use crate::tensor::{Graph, Tensor, Var};

/// Quantity the attack ascends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerObjective {
    /// Cross-entropy against the arg-max of the target.
    CeHard,
    /// Cross-entropy against the full soft target.
    CeSoft,
    /// `KL(p(x) || p(x'))` with `p(x)` frozen at the clean input.
    Kl,
}

impl InnerObjective {
    pub fn as_str(self) -> &'static str {
        match self {
            InnerObjective::CeHard => "ce_hard",
            InnerObjective::CeSoft => "ce_soft",
            InnerObjective::Kl => "kl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ce_hard" => Some(InnerObjective::CeHard),
            "ce_soft" | "ce" => Some(InnerObjective::CeSoft),
            "kl" => Some(InnerObjective::Kl),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    /// Defaults to `epsilon / 4` when unset.
    pub step_size: Option<f64>,
    pub objective: InnerObjective,
    /// Per-coordinate clamp `[lo, hi]` applied to every iterate.
    pub domain_bounds: Option<(f64, f64)>,
    pub restarts: usize,
}

impl AttackConfig {
    pub fn new(epsilon: f64, steps: usize) -> Self {
        Self {
            epsilon,
            steps,
            step_size: None,
            objective: InnerObjective::CeSoft,
            domain_bounds: None,
            restarts: 1,
        }
    }

    pub fn with_objective(mut self, objective: InnerObjective) -> Self {
        self.objective = objective;
        self
    }

    pub fn step_size(&self) -> f64 {
        self.step_size.unwrap_or(self.epsilon / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0) {
                return Err(Error::invalid(format!("step size must be > 0, got {s}")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if let Some((lo, hi)) = self.domain_bounds {
            if !(lo <= hi) {
                return Err(Error::invalid(format!("empty domain [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Coordinatewise clamp of `delta` to `[-epsilon, epsilon]`.
pub fn project_linf(delta: &Tensor, epsilon: f64) -> Tensor {
    let mut out = delta.clone();
    for v in out.data_mut() {
        *v = v.clamp(-epsilon, epsilon);
    }
    out
}

/// `sign` with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamp_domain(v: f64, bounds: Option<(f64, f64)>) -> f64 {
    match bounds {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    }
}

/// Per-row objective nodes for a batch of attacked inputs.
fn objective_rows(
    g: &mut Graph,
    logits: Var,
    objective: InnerObjective,
    targets: &[SoftLabel],
    clean: Option<&[SoftLabel]>,
) -> Result<Var> {
    match objective {
        InnerObjective::CeSoft => cross_entropy_rows(g, logits, targets, 0.0),
        InnerObjective::CeHard => {
            let hard = targets
                .iter()
                .map(|t| SoftLabel::one_hot(t.argmax(), t.classes()))
                .collect::<Result<Vec<_>>>()?;
            cross_entropy_rows(g, logits, &hard, 0.0)
        }
        InnerObjective::Kl => {
            let q = log_softmax(g, logits, 1.0)?;
            kl_rows_const(g, clean.expect("clean reference computed"), q)
        }
    }
}

/// Objective value per row at `x_adv`, with the model frozen.
pub fn objective_values(
    model: &Mlp,
    x_clean: &Tensor,
    x_adv: &Tensor,
    targets: &[SoftLabel],
    objective: InnerObjective,
) -> Result<Vec<f64>> {
    let clean = match objective {
        InnerObjective::Kl => Some(model.probabilities(x_clean, 1.0)?),
        _ => None,
    };
    let mut g = Graph::new();
    let params = model.bind(&mut g, false);
    let xv = g.constant(x_adv.clone());
    let z = params.forward(&mut g, xv)?;
    let rows = objective_rows(&mut g, z, objective, targets, clean.as_deref())?;
    Ok(g.value(rows).data().to_vec())
}

#[derive(Clone, Debug)]
pub struct PgdOutcome {
    pub x_adv: Tensor,
    /// Objective value of the returned point, per row.
    pub objective: Vec<f64>,
}

/// Attack every row of a `[B, d]` batch. Rows do not interact: the summed
/// objective has a block-diagonal input gradient.
///
/// Random starts are drawn from `rng` in row-major order, one restart after
/// another; for each row the restart with the highest final objective is
/// kept (the earliest one on ties).
pub fn pgd_batch<R: Rng + ?Sized>(
    model: &Mlp,
    x: &Tensor,
    targets: &[SoftLabel],
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<PgdOutcome> {
    cfg.validate()?;
    if x.shape().len() != 2 || x.cols() != model.input_dim() {
        return Err(Error::shape(
            "pgd",
            format!("input {:?} for model width {}", x.shape(), model.input_dim()),
        ));
    }
    let rows = x.rows();
    if targets.len() != rows {
        return Err(Error::shape("pgd", format!("{} targets for {rows} rows", targets.len())));
    }
    if cfg.epsilon == 0.0 {
        let objective = objective_values(model, x, x, targets, cfg.objective)?;
        return Ok(PgdOutcome {
            x_adv: x.clone(),
            objective,
        });
    }

    let clean = match cfg.objective {
        InnerObjective::Kl => Some(model.probabilities(x, 1.0)?),
        _ => None,
    };
    let eps = cfg.epsilon;
    let eta = cfg.step_size();
    let bounds = cfg.domain_bounds;
    let xs = x.data();
    let cols = x.cols();

    let mut best: Option<PgdOutcome> = None;
    for _ in 0..cfg.restarts {
        let mut delta: Vec<f64> = (0..xs.len()).map(|_| rng.gen_range(-eps..=eps)).collect();
        let mut cur: Vec<f64> = xs
            .iter()
            .zip(&delta)
            .map(|(&xi, &di)| clamp_domain(xi + di, bounds))
            .collect();
        for (d, (&c, &xi)) in delta.iter_mut().zip(cur.iter().zip(xs)) {
            *d = c - xi;
        }

        let mut final_obj = Vec::new();
        for step in 0..=cfg.steps {
            let mut g = Graph::new();
            let params = model.bind(&mut g, false);
            let xv = g.param(Tensor::matrix(rows, cols, cur.clone())?);
            let z = params.forward(&mut g, xv)?;
            let obj = objective_rows(&mut g, z, cfg.objective, targets, clean.as_deref())?;
            if step == cfg.steps {
                final_obj = g.value(obj).data().to_vec();
                break;
            }
            let total = g.sum(obj)?;
            let grads = g.backward(total)?;
            let grad = grads.get_or_zeros(xv, g.value(xv));
            if let Some(i) = grad.data().iter().position(|v| v.is_nan()) {
                return Err(Error::NonFinite {
                    stage: format!(
                        "pgd step {step}: NaN input gradient at row {}, column {}",
                        i / cols,
                        i % cols
                    ),
                });
            }
            for i in 0..cur.len() {
                let d = (delta[i] + eta * sign(grad.data()[i])).clamp(-eps, eps);
                cur[i] = clamp_domain(xs[i] + d, bounds);
                delta[i] = cur[i] - xs[i];
            }
        }

        let x_adv = Tensor::matrix(rows, cols, cur)?;
        best = Some(match best {
            None => PgdOutcome {
                x_adv,
                objective: final_obj,
            },
            Some(mut b) => {
                let mut data = b.x_adv.into_data();
                for r in 0..rows {
                    if final_obj[r] > b.objective[r] {
                        b.objective[r] = final_obj[r];
                        data[r * cols..(r + 1) * cols].copy_from_slice(x_adv.row(r));
                    }
                }
                b.x_adv = Tensor::matrix(rows, cols, data)?;
                b
            }
        });
    }
    let out = best.expect("restarts >= 1");
    debug_assert!(contained(x, &out.x_adv, eps, bounds));
    Ok(out)
}

fn contained(x: &Tensor, x_adv: &Tensor, eps: f64, bounds: Option<(f64, f64)>) -> bool {
    x.data().iter().zip(x_adv.data()).all(|(&a, &b)| {
        (a - b).abs() <= eps + 1e-12 && bounds.is_none_or(|(lo, hi)| (lo..=hi).contains(&b))
    })
}

/// Attack a single input (`[d]` or `[1, d]`). The result has the input's
/// shape.
pub fn pgd<R: Rng + ?Sized>(
    model: &Mlp,
    x: &Tensor,
    target: &SoftLabel,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Tensor> {
    let row = Tensor::matrix(1, x.len(), x.data().to_vec())?;
    let out = pgd_batch(model, &row, std::slice::from_ref(target), cfg, rng)?;
    out.x_adv.reshape(x.shape().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: &[f64], classes: usize) -> Mlp {
        let d = w.len() / classes;
        Mlp::from_layers(vec![Dense {
            weight: Tensor::matrix(d, classes, w.to_vec()).unwrap(),
            bias: Tensor::zeros(vec![1, classes]).unwrap(),
        }])
        .unwrap()
    }

    #[test]
    fn projection_examples() {
        let d = Tensor::vector(vec![0.5, -0.5]);
        assert_eq!(project_linf(&d, 0.2).data(), &[0.2, -0.2]);
        let inside = Tensor::vector(vec![0.1, -0.05]);
        assert_eq!(project_linf(&inside, 0.2), inside);
        let once = project_linf(&d, 0.3);
        assert_eq!(project_linf(&once, 0.3), once);
    }

    #[test]
    fn zero_budget_returns_input() {
        let m = Mlp::init(&[3, 4, 2], 1).unwrap();
        let x = Tensor::vector(vec![0.3, 0.1, 0.7]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AttackConfig::new(0.0, 10);
        let out = pgd(&m, &x, &SoftLabel::one_hot(0, 2).unwrap(), &cfg, &mut rng).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn kl_objective_moves_away_from_clean() {
        let m = Mlp::init(&[2, 16, 2], 4).unwrap();
        let x = Tensor::matrix(1, 2, vec![0.4, 0.6]).unwrap();
        let t = vec![SoftLabel::uniform(2)];
        let cfg = AttackConfig::new(0.2, 10).with_objective(InnerObjective::Kl);
        let out = pgd_batch(&m, &x, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(out.objective[0] >= 0.0);
        assert!(out.x_adv.max_abs_diff(&x) <= 0.2 + 1e-12);
    }

    #[test]
    fn domain_bounds_hold() {
        let m = Mlp::init(&[2, 8, 2], 9).unwrap();
        let x = Tensor::matrix(2, 2, vec![0.0, 1.0, 0.02, 0.99]).unwrap();
        let t = vec![SoftLabel::one_hot(0, 2).unwrap(), SoftLabel::one_hot(1, 2).unwrap()];
        let mut cfg = AttackConfig::new(0.1, 5);
        cfg.domain_bounds = Some((0.0, 1.0));
        cfg.restarts = 3;
        let out = pgd_batch(&m, &x, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(out.x_adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn nan_gradient_aborts() {
        let m = linear(&[f64::NAN, 1.0, 1.0, 1.0], 2);
        let x = Tensor::matrix(1, 2, vec![0.1, 0.2]).unwrap();
        let err = pgd_batch(
            &m,
            &x,
            &[SoftLabel::one_hot(0, 2).unwrap()],
            &AttackConfig::new(0.1, 2),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn deterministic_under_seed() {
        let m = Mlp::init(&[2, 8, 3], 11).unwrap();
        let x = Tensor::matrix(2, 2, vec![0.1, 0.5, 0.9, 0.3]).unwrap();
        let t = vec![SoftLabel::one_hot(2, 3).unwrap(), SoftLabel::uniform(3)];
        let mut cfg = AttackConfig::new(0.1, 7);
        cfg.restarts = 2;
        let a = pgd_batch(&m, &x, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = pgd_batch(&m, &x, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.x_adv, b.x_adv);
    }
}
