//! Outer-minimization objectives.
//!
//! | variant        | per batch                                                                 |
//! |----------------|---------------------------------------------------------------------------|
//! | `rst`          | `mean[CE(f(x), ỹ) + λ KL(p(x) ‖ p(x_pgd))]`                                |
//! | `uatpp`        | `mean[CE(f(x_pgd), ỹ) + λ KL(p̂(x) ‖ p(x_pgd))]`, `p̂` detached             |
//! | `ssat_mbi`     | `mean[CE(f(x), ỹ) + λ(β KL(p(x) ‖ p(x_adv)) + (1-β) KL(p(x) ‖ p(x_pgd)))]` |
//! | `srst_awr`     | labeled LS-CE + γ' teacher KL + λ' w-weighted KL at `x_pgd`                |
//! | `ssat_mbi_awr` | as `srst_awr`, the λ' term split by β between `x_adv` and `x_pgd`          |
//!
//! In the AWR variants the label-smoothed CE averages over the labeled rows
//! of the batch and the two KL terms over the unlabeled rows. A term whose
//! coefficient is exactly zero is left out of the graph.

use crate::error::{Error, Result};
use crate::model::loss::{cross_entropy_rows, kl_rows, kl_rows_const, log_softmax};
use crate::model::{Mlp, ParamGrads, SoftLabel};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossVariant {
    Rst,
    UatPlusPlus,
    SsatMbi,
    SrstAwr,
    SsatMbiAwr,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::Rst,
        LossVariant::UatPlusPlus,
        LossVariant::SsatMbi,
        LossVariant::SrstAwr,
        LossVariant::SsatMbiAwr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossVariant::Rst => "rst",
            LossVariant::UatPlusPlus => "uatpp",
            LossVariant::SsatMbi => "ssat_mbi",
            LossVariant::SrstAwr => "srst_awr",
            LossVariant::SsatMbiAwr => "ssat_mbi_awr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    pub fn is_awr(self) -> bool {
        matches!(self, LossVariant::SrstAwr | LossVariant::SsatMbiAwr)
    }

    /// Whether the variant consumes margin-interpolated examples.
    pub fn interpolates(self) -> bool {
        matches!(self, LossVariant::SsatMbi | LossVariant::SsatMbiAwr)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AwrParams {
    /// Weight of the teacher-distillation KL.
    pub gamma_prime: f64,
    /// Weight of the robust KL.
    pub lambda_prime: f64,
    /// Distillation temperature.
    pub tau_prime: f64,
    /// Label smoothing of the supervised CE.
    pub alpha_prime: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Consistency weight of the non-AWR variants.
    pub lambda: f64,
    pub beta: f64,
    pub awr: Option<AwrParams>,
}

impl LossConfig {
    pub fn new(variant: LossVariant, lambda: f64, beta: f64) -> Self {
        Self {
            variant,
            lambda,
            beta,
            awr: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        match (&self.awr, self.variant.is_awr()) {
            (None, true) => Err(Error::invalid(format!(
                "variant {} needs AWR parameters",
                self.variant.as_str()
            ))),
            (Some(_), false) => Err(Error::invalid(format!(
                "variant {} takes no AWR parameters",
                self.variant.as_str()
            ))),
            (Some(a), true) => {
                if !(a.gamma_prime >= 0.0) || !(a.lambda_prime >= 0.0) {
                    return Err(Error::invalid("AWR weights must be >= 0"));
                }
                if !(a.tau_prime > 0.0) {
                    return Err(Error::invalid(format!("tau' must be > 0, got {}", a.tau_prime)));
                }
                if !(0.0..1.0).contains(&a.alpha_prime) {
                    return Err(Error::invalid(format!(
                        "label smoothing must lie in [0, 1), got {}",
                        a.alpha_prime
                    )));
                }
                Ok(())
            }
            (None, false) => Ok(()),
        }
    }
}

/// `½ Σ ỹ_c p_clean(c) + ½ Σ ỹ_c (1 - p_attacked(c))`.
pub fn awr_weight(p_clean: &SoftLabel, p_attacked: &SoftLabel, label: &SoftLabel) -> Result<f64> {
    let c = label.classes();
    if p_clean.classes() != c || p_attacked.classes() != c {
        return Err(Error::InvalidLabel(format!(
            "class counts differ: clean {}, attacked {}, label {c}",
            p_clean.classes(),
            p_attacked.classes()
        )));
    }
    let y = label.probs();
    let a: f64 = y.iter().zip(p_clean.probs()).map(|(y, p)| y * p).sum();
    let b: f64 = y.iter().zip(p_attacked.probs()).map(|(y, p)| y * (1.0 - p)).sum();
    Ok((0.5 * a + 0.5 * b).clamp(0.0, 1.0))
}

/// One batch of loss inputs. `x_adv` is required by the interpolating
/// variants, `x_pgd` whenever its coefficient is non-zero.
#[derive(Clone, Copy, Debug)]
pub struct LossInputs<'a> {
    pub x: &'a Tensor,
    pub x_adv: Option<&'a Tensor>,
    pub x_pgd: Option<&'a Tensor>,
    /// One-hot ground truth on labeled rows, soft pseudo-labels elsewhere.
    pub targets: &'a [SoftLabel],
    pub labeled: &'a [bool],
    /// Required by the AWR variants.
    pub teacher: Option<&'a Mlp>,
    /// Parameters behind the detached quantities (the UAT++ anchor
    /// distribution and the AWR weights); the model itself when absent.
    pub snapshot: Option<&'a Mlp>,
}

/// Weighted contributions; they sum to the total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub natural: f64,
    pub robust_adv: f64,
    pub robust_pgd: f64,
    pub distill: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.natural + self.robust_adv + self.robust_pgd + self.distill
    }
}

#[derive(Clone, Debug)]
pub struct LossEval {
    pub value: f64,
    pub grads: ParamGrads,
    pub components: LossComponents,
}

struct Built {
    total: Var,
    components: LossComponents,
}

/// Loss value and parameter gradients.
pub fn outer_loss(cfg: &LossConfig, model: &Mlp, inputs: LossInputs<'_>) -> Result<LossEval> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, true);
    let built = build(&mut g, cfg, inputs, |g, x| {
        let xv = g.constant(x.clone());
        params.forward(g, xv)
    })?;
    let value = g.value(built.total).data()[0];
    let grads = g.backward(built.total)?;
    Ok(LossEval {
        value,
        grads: params.gradients(&grads, model),
        components: built.components,
    })
}

/// Loss value only.
pub fn outer_loss_value(cfg: &LossConfig, model: &Mlp, inputs: LossInputs<'_>) -> Result<f64> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, false);
    let built = build(&mut g, cfg, inputs, |g, x| {
        let xv = g.constant(x.clone());
        params.forward(g, xv)
    })?;
    Ok(g.value(built.total).data()[0])
}

fn need<'a>(t: Option<&'a Tensor>, what: &str, cfg: &LossConfig) -> Result<&'a Tensor> {
    t.ok_or_else(|| Error::invalid(format!("variant {} needs {what}", cfg.variant.as_str())))
}

/// `Σ_i coeff_i * rows_i` as a scalar node.
fn weighted_sum(g: &mut Graph, rows: Var, coeff: Vec<f64>) -> Result<Var> {
    let n = coeff.len();
    let c = g.constant(Tensor::matrix(n, 1, coeff)?);
    let prod = g.mul(rows, c)?;
    g.sum(prod)
}

fn build(
    g: &mut Graph,
    cfg: &LossConfig,
    inputs: LossInputs<'_>,
    mut forward: impl FnMut(&mut Graph, &Tensor) -> Result<Var>,
) -> Result<Built> {
    cfg.validate()?;
    let b = inputs.x.rows();
    if inputs.targets.len() != b || inputs.labeled.len() != b {
        return Err(Error::shape(
            "outer_loss",
            format!(
                "{} targets and {} labeled flags for {b} rows",
                inputs.targets.len(),
                inputs.labeled.len()
            ),
        ));
    }
    for (name, t) in [("x_adv", inputs.x_adv), ("x_pgd", inputs.x_pgd)] {
        if let Some(t) = t {
            if t.shape() != inputs.x.shape() {
                return Err(Error::shape(
                    "outer_loss",
                    format!("{name} {:?} vs x {:?}", t.shape(), inputs.x.shape()),
                ));
            }
        }
    }
    if inputs.x_adv.is_some() && !cfg.variant.interpolates() {
        return Err(Error::invalid(format!(
            "variant {} does not take interpolated examples",
            cfg.variant.as_str()
        )));
    }

    let beta = cfg.beta;
    let (adv_w, pgd_w) = if cfg.variant.interpolates() { (beta, 1.0 - beta) } else { (0.0, 1.0) };
    let x_adv = if adv_w != 0.0 { Some(need(inputs.x_adv, "x_adv", cfg)?) } else { None };
    let x_pgd = if pgd_w != 0.0 { Some(need(inputs.x_pgd, "x_pgd", cfg)?) } else { None };

    let mut comp = LossComponents::default();
    let mut terms: Vec<Var> = Vec::new();

    if let Some(awr) = &cfg.awr {
        let labeled: Vec<usize> = (0..b).filter(|&i| inputs.labeled[i]).collect();
        let n_b = labeled.len();
        let m_b = b - n_b;
        let z = forward(g, inputs.x)?;
        if n_b > 0 {
            let ce = cross_entropy_rows(g, z, inputs.targets, awr.alpha_prime)?;
            let coeff = (0..b).map(|i| if inputs.labeled[i] { 1.0 / n_b as f64 } else { 0.0 }).collect();
            let t = weighted_sum(g, ce, coeff)?;
            comp.natural = g.value(t).data()[0];
            terms.push(t);
        }
        if m_b > 0 {
            let unl = |i: usize| !inputs.labeled[i];
            if awr.gamma_prime != 0.0 {
                let teacher = inputs
                    .teacher
                    .ok_or_else(|| Error::invalid(format!("variant {} needs a teacher", cfg.variant.as_str())))?;
                let pt = teacher.probabilities(inputs.x, awr.tau_prime)?;
                let lq = log_softmax(g, z, awr.tau_prime)?;
                let kl = kl_rows_const(g, &pt, lq)?;
                let c = awr.gamma_prime / m_b as f64;
                let coeff = (0..b).map(|i| if unl(i) { c } else { 0.0 }).collect();
                let t = weighted_sum(g, kl, coeff)?;
                comp.distill = g.value(t).data()[0];
                terms.push(t);
            }
            let lp = log_softmax(g, z, 1.0)?;
            let p_clean = match inputs.snapshot {
                Some(s) => s.probabilities(inputs.x, 1.0)?,
                None => crate::model::score(g.value(z), 1.0)?,
            };
            for (x_att, w_mix, slot) in [
                (x_adv, adv_w, &mut comp.robust_adv),
                (x_pgd, pgd_w, &mut comp.robust_pgd),
            ] {
                let Some(x_att) = x_att else { continue };
                if awr.lambda_prime == 0.0 {
                    continue;
                }
                let za = forward(g, x_att)?;
                let p_att = match inputs.snapshot {
                    Some(s) => s.probabilities(x_att, 1.0)?,
                    None => crate::model::score(g.value(za), 1.0)?,
                };
                let lq = log_softmax(g, za, 1.0)?;
                let kl = kl_rows(g, lp, lq)?;
                let c = awr.lambda_prime * w_mix / m_b as f64;
                let mut coeff = vec![0.0; b];
                for i in (0..b).filter(|&i| unl(i)) {
                    coeff[i] = c * awr_weight(&p_clean[i], &p_att[i], &inputs.targets[i])?;
                }
                let t = weighted_sum(g, kl, coeff)?;
                *slot = g.value(t).data()[0];
                terms.push(t);
            }
        }
    } else {
        let inv_b = 1.0 / b as f64;
        let z = forward(g, inputs.x)?;
        match cfg.variant {
            LossVariant::UatPlusPlus => {
                let x_pgd = x_pgd.expect("pgd weight is 1");
                let zp = forward(g, x_pgd)?;
                let ce = cross_entropy_rows(g, zp, inputs.targets, 0.0)?;
                let t = weighted_sum(g, ce, vec![inv_b; b])?;
                comp.natural = g.value(t).data()[0];
                terms.push(t);
                let p_hat = match inputs.snapshot {
                    Some(s) => s.probabilities(inputs.x, 1.0)?,
                    None => crate::model::score(g.value(z), 1.0)?,
                };
                let lq = log_softmax(g, zp, 1.0)?;
                let kl = kl_rows_const(g, &p_hat, lq)?;
                let t = weighted_sum(g, kl, vec![cfg.lambda * inv_b; b])?;
                comp.robust_pgd = g.value(t).data()[0];
                terms.push(t);
            }
            _ => {
                let ce = cross_entropy_rows(g, z, inputs.targets, 0.0)?;
                let t = weighted_sum(g, ce, vec![inv_b; b])?;
                comp.natural = g.value(t).data()[0];
                terms.push(t);
                let lp = log_softmax(g, z, 1.0)?;
                for (x_att, w_mix, slot) in [
                    (x_adv, adv_w, &mut comp.robust_adv),
                    (x_pgd, pgd_w, &mut comp.robust_pgd),
                ] {
                    let Some(x_att) = x_att else { continue };
                    let za = forward(g, x_att)?;
                    let lq = log_softmax(g, za, 1.0)?;
                    let kl = kl_rows(g, lp, lq)?;
                    let t = weighted_sum(g, kl, vec![cfg.lambda * w_mix * inv_b; b])?;
                    *slot = g.value(t).data()[0];
                    terms.push(t);
                }
            }
        }
    }

    let mut total = match terms.first() {
        Some(&t) => t,
        None => g.constant(Tensor::scalar(0.0)),
    };
    for &t in terms.iter().skip(1) {
        total = g.add(total, t)?;
    }
    Ok(Built {
        total,
        components: comp,
    })
}
