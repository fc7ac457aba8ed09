//! Probability vectors, the temperature score, and the loss primitives
//! (cross-entropy with label smoothing, KL divergence), in both plain-value
//! and graph form.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over `C` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidLabel("empty probability vector".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidLabel(format!("entry {i} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidLabel(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub(crate) fn from_probs_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(Self::new(probs.clone()).is_ok(), "{probs:?}");
        Self(probs)
    }

    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::InvalidLabel(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut v = vec![0.0; classes];
        v[class] = 1.0;
        Ok(Self(v))
    }

    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0);
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Stack labels into a `[B, C]` matrix.
pub fn labels_to_tensor(labels: &[SoftLabel]) -> Result<Tensor> {
    Tensor::from_rows(&labels.iter().map(SoftLabel::probs).collect::<Vec<_>>())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// `log softmax(logits / tau)` for one row.
pub fn log_softmax_row(logits: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = scaled.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    scaled.iter().map(|z| z - max - lse).collect()
}

pub fn softmax_row(logits: &[f64], tau: f64) -> Vec<f64> {
    log_softmax_row(logits, tau).into_iter().map(f64::exp).collect()
}

/// `softmax(logits / tau)` per row of a `[B, C]` logit matrix.
pub fn score(logits: &Tensor, tau: f64) -> Result<Vec<SoftLabel>> {
    check_tau(tau)?;
    Ok((0..logits.rows())
        .map(|i| SoftLabel::from_probs_unchecked(softmax_row(logits.row(i), tau)))
        .collect())
}

/// `(1 - smoothing) * target + smoothing / C`.
pub fn smooth_target(target: &SoftLabel, smoothing: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::invalid(format!(
            "label smoothing must lie in [0, 1), got {smoothing}"
        )));
    }
    let c = target.classes() as f64;
    Ok(target
        .probs()
        .iter()
        .map(|t| (1.0 - smoothing) * t + smoothing / c)
        .collect())
}

/// Soft-target cross-entropy `-sum_c t'_c log softmax(logits)_c`.
pub fn cross_entropy(logits: &[f64], target: &SoftLabel, smoothing: f64) -> Result<f64> {
    if logits.len() != target.classes() {
        return Err(Error::InvalidLabel(format!(
            "target has {} classes, logits have {}",
            target.classes(),
            logits.len()
        )));
    }
    let t = smooth_target(target, smoothing)?;
    let lp = log_softmax_row(logits, 1.0);
    Ok(-t.iter().zip(&lp).map(|(t, l)| if *t == 0.0 { 0.0 } else { t * l }).sum::<f64>())
}

/// `KL(p || q)` with `q` floored at [`PROB_FLOOR`] and `0 log 0 = 0`.
pub fn kl_divergence(p: &SoftLabel, q: &SoftLabel) -> Result<f64> {
    if p.classes() != q.classes() {
        return Err(Error::InvalidLabel(format!(
            "KL between {} and {} classes",
            p.classes(),
            q.classes()
        )));
    }
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .filter(|(pc, _)| **pc > 0.0)
        .map(|(pc, qc)| pc * (pc.ln() - qc.max(PROB_FLOOR).ln()))
        .sum())
}

pub fn entropy(p: &SoftLabel) -> f64 {
    -p.probs()
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

// Graph forms. All take `[B, C]` logits and return per-row `[B, 1]` values.

/// `log softmax(z / tau)` along the class axis. The row max is subtracted as
/// a constant; the shift cancels analytically in the gradient.
pub fn log_softmax(g: &mut Graph, logits: Var, tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let z = if tau == 1.0 { logits } else { g.scale(logits, 1.0 / tau)? };
    let shape = g.value(z).shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::shape("log_softmax", format!("expected [B, C], got {shape:?}")));
    }
    let zv = g.value(z);
    let maxes: Vec<f64> = (0..shape[0])
        .map(|i| zv.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let m = g.constant(Tensor::matrix(shape[0], 1, maxes)?);
    let mb = g.broadcast(m, &shape)?;
    let shifted = g.sub(z, mb)?;
    let e = g.exp(shifted)?;
    let se = g.sum_axis(e, 1)?;
    let lse = g.log(se)?;
    let lse_b = g.broadcast(lse, &shape)?;
    g.sub(shifted, lse_b)
}

pub fn softmax(g: &mut Graph, logits: Var, tau: f64) -> Result<Var> {
    let lp = log_softmax(g, logits, tau)?;
    g.exp(lp)
}

/// Per-row cross-entropy against constant soft targets `[B, C]`.
pub fn cross_entropy_rows(g: &mut Graph, logits: Var, targets: &[SoftLabel], smoothing: f64) -> Result<Var> {
    let shape = g.value(logits).shape().to_vec();
    if targets.len() != shape[0] || targets.iter().any(|t| t.classes() != shape[1]) {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} targets for logits {shape:?}", targets.len()),
        ));
    }
    let mut rows = Vec::with_capacity(targets.len());
    for t in targets {
        rows.push(smooth_target(t, smoothing)?);
    }
    let t = g.constant(Tensor::from_rows(&rows)?);
    let lp = log_softmax(g, logits, 1.0)?;
    let prod = g.mul(t, lp)?;
    let s = g.sum_axis(prod, 1)?;
    g.scale(s, -1.0)
}

/// Per-row `KL(p || q)` where both sides are given as log-probabilities in
/// the graph.
pub fn kl_rows(g: &mut Graph, p_log: Var, q_log: Var) -> Result<Var> {
    let q_floor = g.clamp_min(q_log, PROB_FLOOR.ln())?;
    let p = g.exp(p_log)?;
    let diff = g.sub(p_log, q_floor)?;
    let prod = g.mul(p, diff)?;
    g.sum_axis(prod, 1)
}

/// Per-row `KL(p || q)` with a constant left-hand distribution.
pub fn kl_rows_const(g: &mut Graph, p: &[SoftLabel], q_log: Var) -> Result<Var> {
    let shape = g.value(q_log).shape().to_vec();
    if p.len() != shape[0] {
        return Err(Error::shape("kl", format!("{} rows vs {shape:?}", p.len())));
    }
    let neg_entropy: Vec<f64> = p.iter().map(|r| -entropy(r)).collect();
    let pt = g.constant(labels_to_tensor(p)?);
    let q_floor = g.clamp_min(q_log, PROB_FLOOR.ln())?;
    let cross = g.mul(pt, q_floor)?;
    let cross = g.sum_axis(cross, 1)?;
    let ne = g.constant(Tensor::matrix(shape[0], 1, neg_entropy)?);
    g.sub(ne, cross)
}
