//! Margin-controlled interpolation between a clean point and its PGD
//! counterpart.
//!
//! The margin of a point under label `y` is `max_k s_k - sum_j y_j s_j` where
//! `s = softmax(f(x) / tau)`. Walking from `x` (α = 0) to `x_pgd` (α = 1), a
//! K-step bisection looks for the smallest α at which the margin reaches the
//! threshold ρ; the right end of the final bracket is returned.

use crate::error::{Error, Result};
use crate::model::{score, Mlp, SoftLabel};
use crate::tensor::Tensor;

pub const MAX_SEARCH_STEPS: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationConfig {
    /// Margin threshold ρ.
    pub rho: f64,
    /// Score temperature τ.
    pub tau: f64,
    /// Bisection steps K.
    pub steps: usize,
}

impl InterpolationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::invalid(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::invalid(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.steps == 0 || self.steps > MAX_SEARCH_STEPS {
            return Err(Error::invalid(format!(
                "search steps must be in 1..={MAX_SEARCH_STEPS}, got {}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Soft margin `max_k s_k - <label, s>`; equals the hard margin for one-hot
/// labels.
pub fn margin(scores: &SoftLabel, label: &SoftLabel) -> Result<f64> {
    if scores.classes() != label.classes() {
        return Err(Error::InvalidLabel(format!(
            "scores over {} classes, label over {}",
            scores.classes(),
            label.classes()
        )));
    }
    let s = scores.probs();
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let expected: f64 = label.probs().iter().zip(s).map(|(y, s)| y * s).sum();
    Ok(top - expected)
}

/// `alpha * x_pgd + (1 - alpha) * x`.
pub fn interpolate(x: &Tensor, x_pgd: &Tensor, alpha: f64) -> Result<Tensor> {
    if x.shape() != x_pgd.shape() {
        return Err(Error::shape(
            "interpolate",
            format!("{:?} vs {:?}", x.shape(), x_pgd.shape()),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let data = x
        .data()
        .iter()
        .zip(x_pgd.data())
        .map(|(&a, &b)| alpha * b + (1.0 - alpha) * a)
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Row-wise interpolation with one coefficient per row.
pub fn interpolate_rows(x: &Tensor, x_pgd: &Tensor, alphas: &[f64]) -> Result<Tensor> {
    if x.shape() != x_pgd.shape() || alphas.len() != x.rows() {
        return Err(Error::shape(
            "interpolate",
            format!("{:?} vs {:?} with {} coefficients", x.shape(), x_pgd.shape(), alphas.len()),
        ));
    }
    let mut data = Vec::with_capacity(x.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        data.extend(
            x.row(i)
                .iter()
                .zip(x_pgd.row(i))
                .map(|(&a, &b)| alpha * b + (1.0 - alpha) * a),
        );
    }
    Tensor::new(x.shape().to_vec(), data)
}

/// ℓ∞ distance between a clean point and its interpolated counterpart.
pub fn effective_epsilon(x: &Tensor, x_adv: &Tensor) -> Result<f64> {
    if x.shape() != x_adv.shape() {
        return Err(Error::shape(
            "effective_epsilon",
            format!("{:?} vs {:?}", x.shape(), x_adv.shape()),
        ));
    }
    Ok(x.max_abs_diff(x_adv))
}

/// Bisection state `[lo, hi]`, starting at `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl Bracket {
    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    /// `d < rho` moves the left end, anything else (including `d == rho`
    /// and NaN) moves the right end.
    pub fn update(&mut self, alpha: f64, d: f64, rho: f64) {
        if d < rho {
            self.lo = alpha;
        } else {
            self.hi = alpha;
        }
    }
}

/// Run the bisection against an arbitrary margin curve. Returns `α̂`.
pub fn search_alpha(mut d: impl FnMut(f64) -> f64, rho: f64, steps: usize) -> f64 {
    let mut b = Bracket::default();
    for _ in 0..steps {
        let alpha = b.midpoint();
        b.update(alpha, d(alpha), rho);
    }
    b.hi
}

#[derive(Clone, Debug)]
pub struct InterpolationOutcome {
    pub alpha: Vec<f64>,
    pub x_adv: Tensor,
    /// Batched forward passes spent probing; always `cfg.steps`.
    pub probes: usize,
}

/// Bisection for every row of a batch at once: one forward pass of the
/// whole batch per step.
pub fn binary_search_alpha_batch(
    model: &Mlp,
    x: &Tensor,
    x_pgd: &Tensor,
    labels: &[SoftLabel],
    cfg: &InterpolationConfig,
) -> Result<InterpolationOutcome> {
    cfg.validate()?;
    if labels.len() != x.rows() {
        return Err(Error::shape(
            "binary_search_alpha",
            format!("{} labels for {} rows", labels.len(), x.rows()),
        ));
    }
    let mut brackets = vec![Bracket::default(); x.rows()];
    for _ in 0..cfg.steps {
        let alphas: Vec<f64> = brackets.iter().map(Bracket::midpoint).collect();
        let probe = interpolate_rows(x, x_pgd, &alphas)?;
        let scores = score(&model.logits(&probe)?, cfg.tau)?;
        for ((b, alpha), (s, y)) in brackets.iter_mut().zip(alphas).zip(scores.iter().zip(labels)) {
            b.update(alpha, margin(s, y)?, cfg.rho);
        }
    }
    let alpha: Vec<f64> = brackets.iter().map(|b| b.hi).collect();
    let x_adv = interpolate_rows(x, x_pgd, &alpha)?;
    Ok(InterpolationOutcome {
        alpha,
        x_adv,
        probes: cfg.steps,
    })
}

/// Single-point form of [`binary_search_alpha_batch`].
pub fn binary_search_alpha(
    model: &Mlp,
    x: &Tensor,
    x_pgd: &Tensor,
    label: &SoftLabel,
    cfg: &InterpolationConfig,
) -> Result<(f64, Tensor)> {
    let row = |t: &Tensor| Tensor::matrix(1, t.len(), t.data().to_vec());
    let out = binary_search_alpha_batch(model, &row(x)?, &row(x_pgd)?, std::slice::from_ref(label), cfg)?;
    Ok((out.alpha[0], out.x_adv.reshape(x.shape().to_vec())?))
}

/// Margin of `softmax(f(x)/tau)` against each label, per row.
pub fn margins(model: &Mlp, x: &Tensor, labels: &[SoftLabel], tau: f64) -> Result<Vec<f64>> {
    let scores = score(&model.logits(x)?, tau)?;
    scores.iter().zip(labels).map(|(s, y)| margin(s, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sl(v: &[f64]) -> SoftLabel {
        SoftLabel::new(v.to_vec()).unwrap()
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin(&SoftLabel::uniform(4), &SoftLabel::one_hot(2, 4).unwrap()).unwrap(), 0.0);
        let m = margin(&sl(&[0.7, 0.2, 0.1]), &SoftLabel::one_hot(0, 3).unwrap()).unwrap();
        assert_eq!(m, 0.0);
        let m = margin(&sl(&[0.6, 0.3, 0.1]), &sl(&[0.5, 0.5, 0.0])).unwrap();
        assert!((m - 0.15).abs() < 1e-15);
        assert!(margin(&sl(&[0.5, 0.5]), &SoftLabel::uniform(3)).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let x = Tensor::vector(vec![0.0, 0.0]);
        let p = Tensor::vector(vec![0.2, -0.2]);
        assert_eq!(interpolate(&x, &p, 0.0).unwrap(), x);
        assert_eq!(interpolate(&x, &p, 1.0).unwrap(), p);
        assert_eq!(interpolate(&x, &p, 0.5).unwrap().data(), &[0.1, -0.1]);
        assert!(interpolate(&x, &p, 1.5).is_err());
        assert!(interpolate(&x, &p, -0.1).is_err());
    }

    #[test]
    fn effective_epsilon_examples() {
        let x = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(effective_epsilon(&x, &x).unwrap(), 0.0);
        let a = Tensor::vector(vec![0.05, -0.08]);
        assert_eq!(effective_epsilon(&x, &a).unwrap(), 0.08);
        let p = Tensor::vector(vec![0.3, -0.1]);
        let xa = interpolate(&x, &p, 0.37).unwrap();
        assert!((effective_epsilon(&x, &xa).unwrap() - 0.37 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn search_traces() {
        assert_eq!(search_alpha(|a| a, 0.3, 3), 0.375);
        assert_eq!(search_alpha(|_| 0.0, 0.3, 5), 1.0);
        assert_eq!(search_alpha(|_| 0.9, 0.3, 5), 1.0 / 32.0);
        // ties go right
        assert_eq!(search_alpha(|_| 0.3, 0.3, 2), 0.25);
    }

    #[test]
    fn config_validation() {
        let ok = InterpolationConfig { rho: 0.05, tau: 2.0, steps: 3 };
        assert!(ok.validate().is_ok());
        assert!(InterpolationConfig { steps: 0, ..ok.clone() }.validate().is_err());
        assert!(InterpolationConfig { steps: 33, ..ok.clone() }.validate().is_err());
        assert!(InterpolationConfig { rho: 0.0, ..ok.clone() }.validate().is_err());
        assert!(InterpolationConfig { tau: 0.0, ..ok }.validate().is_err());
    }
}
