//! Accuracy metrics, multi-restart PGD evaluation and margin/loss-ratio
//! diagnostics.
//!
//! Seed policy for [`robust_accuracy`]: restart `r` draws its random start
//! from a ChaCha8 stream `(seed, r)`, so the first `k` restarts of a run with
//! more restarts are exactly the restarts of a run with `k`. A point counts
//! as robust only if every restart leaves it correctly classified.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attack::{pgd, pgd_batch, AttackConfig, InnerObjective};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interpolate::{binary_search_alpha_batch, interpolate_rows, margins, InterpolationConfig};
use crate::model::{cross_entropy, Mlp, SoftLabel};
use crate::tensor::Tensor;

/// Rows attacked per PGD call.
const EVAL_CHUNK: usize = 512;

/// Decrease of `d` between neighbouring grid points still counted as
/// monotone.
pub const MONOTONE_TOLERANCE: f64 = 1e-3;

/// `k` distinct row indices out of `n`, in increasing order. Diagnostics
/// sample with stream 5 of `seed`.
pub fn sample_rows(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5);
    let mut rows = rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec();
    rows.sort_unstable();
    rows
}

/// Visible labels, or the sealed ground truth of an unlabeled split.
pub fn evaluation_labels(ds: &Dataset) -> Result<&[usize]> {
    if let Some(l) = &ds.labels {
        return Ok(l);
    }
    ds.sealed
        .as_ref()
        .map(|s| s.reveal_for_evaluation())
        .ok_or_else(|| Error::invalid("evaluation needs labels"))
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

pub fn natural_accuracy(model: &Mlp, ds: &Dataset) -> Result<f64> {
    let labels = evaluation_labels(ds)?;
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    Ok(accuracy(&model.predict(&ds.inputs)?, labels))
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(EVAL_CHUNK).map(move |lo| (lo..(lo + EVAL_CHUNK).min(n)).collect())
}

/// Per-row robustness flags under `cfg.restarts` independent restarts.
pub fn robust_flags(model: &Mlp, ds: &Dataset, cfg: &AttackConfig, seed: u64) -> Result<Vec<bool>> {
    cfg.validate()?;
    let labels = evaluation_labels(ds)?;
    let classes = model.class_count();
    let targets: Vec<SoftLabel> = labels
        .iter()
        .map(|&c| SoftLabel::one_hot(c, classes))
        .collect::<Result<_>>()?;
    let mut robust: Vec<bool> = model
        .predict(&ds.inputs)?
        .iter()
        .zip(labels)
        .map(|(p, y)| p == y)
        .collect();
    let single = AttackConfig {
        restarts: 1,
        domain_bounds: cfg.domain_bounds.or(ds.domain_bounds),
        ..cfg.clone()
    };
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        for idx in chunks(ds.len()) {
            let x = ds.inputs.select_rows(&idx)?;
            let t: Vec<SoftLabel> = idx.iter().map(|&i| targets[i].clone()).collect();
            let out = pgd_batch(model, &x, &t, &single, &mut rng)?;
            for (k, p) in model.predict(&out.x_adv)?.into_iter().enumerate() {
                if p != labels[idx[k]] {
                    robust[idx[k]] = false;
                }
            }
        }
    }
    Ok(robust)
}

pub fn robust_accuracy(model: &Mlp, ds: &Dataset, cfg: &AttackConfig, seed: u64) -> Result<f64> {
    let flags = robust_flags(model, ds, cfg, seed)?;
    if flags.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginCurve {
    pub row: usize,
    pub alphas: Vec<f64>,
    pub margins: Vec<f64>,
}

impl MarginCurve {
    pub fn is_monotone(&self, tolerance: f64) -> bool {
        self.margins.windows(2).all(|w| w[1] >= w[0] - tolerance)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioStats {
    pub mean: f64,
    pub median: f64,
    /// Share of ratios inside `[0.8, 1.25]`.
    pub within_band: f64,
}

impl RatioStats {
    pub fn from_ratios(ratios: &[f64]) -> Option<Self> {
        if ratios.is_empty() {
            return None;
        }
        let mut s = ratios.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        Some(Self {
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            within_band: s.iter().filter(|r| (0.8..=1.25).contains(*r)).count() as f64 / n as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub sampled: usize,
    /// Points with `x` classified correctly and `x_pgd` misclassified.
    pub eligible: usize,
    /// `None` when nothing is eligible.
    pub monotone_fraction: Option<f64>,
    /// `CE(x_adv) / CE(x̂_pgd)` per eligible point.
    pub loss_ratios: Vec<f64>,
    pub ratio_stats: Option<RatioStats>,
    pub curves: Vec<MarginCurve>,
}

/// Margin curves on a uniform α grid and the interpolated-vs-fresh-PGD loss
/// ratio, over the eligible subset of `x`. The model is only read.
pub fn assumption_diagnostics(
    model: &Mlp,
    x: &Tensor,
    labels: &[usize],
    grid_size: usize,
    interp: &InterpolationConfig,
    attack: &AttackConfig,
    seed: u64,
) -> Result<Diagnostics> {
    interp.validate()?;
    if grid_size < 2 {
        return Err(Error::invalid(format!("grid needs at least 2 points, got {grid_size}")));
    }
    if labels.len() != x.rows() {
        return Err(Error::shape("diagnostics", format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    let classes = model.class_count();
    let targets: Vec<SoftLabel> = labels
        .iter()
        .map(|&c| SoftLabel::one_hot(c, classes))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_pgd = pgd_batch(model, x, &targets, attack, &mut rng)?.x_adv;
    let clean_pred = model.predict(x)?;
    let pgd_pred = model.predict(&x_pgd)?;
    let rows: Vec<usize> = (0..x.rows())
        .filter(|&i| clean_pred[i] == labels[i] && pgd_pred[i] != labels[i])
        .collect();
    let mut out = Diagnostics {
        sampled: x.rows(),
        eligible: rows.len(),
        monotone_fraction: None,
        loss_ratios: Vec::new(),
        ratio_stats: None,
        curves: Vec::new(),
    };
    if rows.is_empty() {
        return Ok(out);
    }

    let xe = x.select_rows(&rows)?;
    let pe = x_pgd.select_rows(&rows)?;
    let te: Vec<SoftLabel> = rows.iter().map(|&i| targets[i].clone()).collect();
    let alphas: Vec<f64> = (0..grid_size).map(|k| k as f64 / (grid_size - 1) as f64).collect();
    let mut curves: Vec<MarginCurve> = rows
        .iter()
        .map(|&row| MarginCurve {
            row,
            alphas: alphas.clone(),
            margins: Vec::with_capacity(grid_size),
        })
        .collect();
    for &a in &alphas {
        let probe = interpolate_rows(&xe, &pe, &vec![a; rows.len()])?;
        for (c, d) in curves.iter_mut().zip(margins(model, &probe, &te, interp.tau)?) {
            c.margins.push(d);
        }
    }
    let monotone = curves.iter().filter(|c| c.is_monotone(MONOTONE_TOLERANCE)).count();
    out.monotone_fraction = Some(monotone as f64 / rows.len() as f64);

    let search = binary_search_alpha_batch(model, &xe, &pe, &te, interp)?;
    let z_adv = model.logits(&search.x_adv)?;
    for (k, &row) in rows.iter().enumerate() {
        let eps_hat = xe.row(k).iter().zip(search.x_adv.row(k)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let fresh_cfg = AttackConfig {
            epsilon: eps_hat,
            step_size: None,
            restarts: 1,
            objective: if attack.objective == InnerObjective::Kl { InnerObjective::Kl } else { InnerObjective::CeHard },
            ..attack.clone()
        };
        let xi = Tensor::matrix(1, x.cols(), x.row(row).to_vec())?;
        let fresh = pgd(model, &xi, &targets[row], &fresh_cfg, &mut rng)?;
        let l_adv = cross_entropy(z_adv.row(k), &targets[row], 0.0)?;
        let l_fresh = cross_entropy(model.logits(&fresh)?.row(0), &targets[row], 0.0)?;
        let floor = f64::MIN_POSITIVE;
        out.loss_ratios.push(l_adv.max(floor) / l_fresh.max(floor));
    }
    out.ratio_stats = RatioStats::from_ratios(&out.loss_ratios);
    out.curves = curves;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustEntry {
    pub steps: usize,
    pub epsilon: f64,
    pub restarts: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsSpec {
    pub points: usize,
    pub grid_size: usize,
    pub interp: InterpolationConfig,
    pub attack: AttackConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSpec {
    /// `(steps, epsilon, restarts)`.
    pub attacks: Vec<(usize, f64, usize)>,
    pub diagnostics: Option<DiagnosticsSpec>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub natural_acc: f64,
    pub robust: Vec<RobustEntry>,
    pub diagnostics: Option<Diagnostics>,
}

pub fn evaluate(model: &Mlp, ds: &Dataset, spec: &EvalSpec) -> Result<EvalReport> {
    let natural_acc = natural_accuracy(model, ds)?;
    let mut robust = Vec::with_capacity(spec.attacks.len());
    for &(steps, epsilon, restarts) in &spec.attacks {
        let cfg = AttackConfig {
            restarts,
            ..AttackConfig::new(epsilon, steps).with_objective(InnerObjective::CeHard)
        };
        robust.push(RobustEntry {
            steps,
            epsilon,
            restarts,
            accuracy: robust_accuracy(model, ds, &cfg, spec.seed)?,
        });
    }
    let diagnostics = match &spec.diagnostics {
        Some(d) => {
            let rows = sample_rows(ds.len(), d.points, spec.seed);
            let labels = evaluation_labels(ds)?;
            let picked: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            Some(assumption_diagnostics(
                model,
                &ds.inputs.select_rows(&rows)?,
                &picked,
                d.grid_size,
                &d.interp,
                &AttackConfig {
                    domain_bounds: d.attack.domain_bounds.or(ds.domain_bounds),
                    ..d.attack.clone()
                },
                spec.seed,
            )?)
        }
        None => None,
    };
    Ok(EvalReport {
        natural_acc,
        robust,
        diagnostics,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl EvalReport {
    /// `metric,steps,epsilon,restarts,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,steps,epsilon,restarts,value\n");
        s.push_str(&format!("natural_acc,0,0,0,{}\n", self.natural_acc));
        for r in &self.robust {
            s.push_str(&format!("robust_acc,{},{},{},{}\n", r.steps, r.epsilon, r.restarts, r.accuracy));
        }
        if let Some(d) = &self.diagnostics {
            s.push_str(&format!("eligible,,,,{}\n", d.eligible));
            s.push_str(&format!("monotone_fraction,,,,{}\n", fmt_opt(d.monotone_fraction)));
            let st = d.ratio_stats;
            s.push_str(&format!("loss_ratio_mean,,,,{}\n", fmt_opt(st.map(|s| s.mean))));
            s.push_str(&format!("loss_ratio_median,,,,{}\n", fmt_opt(st.map(|s| s.median))));
            s.push_str(&format!("loss_ratio_within_band,,,,{}\n", fmt_opt(st.map(|s| s.within_band))));
        }
        s
    }

    /// One JSON object per line, tagged by `kind`.
    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![serde_json::json!({"kind": "natural", "accuracy": self.natural_acc})];
        for r in &self.robust {
            lines.push(serde_json::json!({"kind": "robust", "steps": r.steps, "epsilon": r.epsilon,
                "restarts": r.restarts, "accuracy": r.accuracy}));
        }
        if let Some(d) = &self.diagnostics {
            lines.push(serde_json::json!({"kind": "diagnostics", "sampled": d.sampled, "eligible": d.eligible,
                "monotone_fraction": d.monotone_fraction, "ratio_stats": d.ratio_stats}));
            lines.push(serde_json::json!({"kind": "loss_ratios", "values": d.loss_ratios}));
            for c in &d.curves {
                lines.push(serde_json::json!({"kind": "curve", "row": c.row, "alphas": c.alphas, "margins": c.margins}));
            }
        }
        lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};
    use crate::model::Dense;

    fn linear(w: [f64; 4], b: [f64; 2]) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: Tensor::matrix(2, 2, w.to_vec()).unwrap(),
            bias: Tensor::matrix(1, 2, b.to_vec()).unwrap(),
        }])
        .unwrap()
    }

    #[test]
    fn constant_predictor() {
        let m = linear([0.0; 4], [0.0, 1.0]);
        let mut ds = gen_synthetic(SyntheticKind::GaussianBlobs, 10, 0.01, 0).unwrap();
        ds.labels = Some(vec![1; 10]);
        assert_eq!(natural_accuracy(&m, &ds).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_model_is_at_chance() {
        // All-zero logits predict class 0 everywhere.
        let m = linear([0.0; 4], [0.0, 0.0]);
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 1000, 0.1, 4).unwrap();
        let a = natural_accuracy(&m, &ds).unwrap();
        assert!((a - 0.5).abs() <= 0.05);
    }

    #[test]
    fn zero_budget_matches_natural() {
        let m = Mlp::init(&[2, 16, 2], 3).unwrap();
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 300, 0.1, 4).unwrap();
        let cfg = AttackConfig::new(0.0, 20);
        assert_eq!(robust_accuracy(&m, &ds, &cfg, 1).unwrap(), natural_accuracy(&m, &ds).unwrap());
    }

    #[test]
    fn more_restarts_never_help() {
        let m = Mlp::init(&[2, 16, 2], 3).unwrap();
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 300, 0.1, 4).unwrap();
        let one = AttackConfig::new(0.05, 5);
        let five = AttackConfig { restarts: 5, ..one.clone() };
        assert!(robust_accuracy(&m, &ds, &five, 2).unwrap() <= robust_accuracy(&m, &ds, &one, 2).unwrap());
    }

    #[test]
    fn linear_binary_margin_is_monotone() {
        let m = linear([3.0, -1.0, -2.0, 2.0], [0.1, -0.1]);
        let ds = gen_synthetic(SyntheticKind::GaussianBlobs, 200, 0.2, 1).unwrap();
        let interp = InterpolationConfig { rho: 0.05, tau: 2.0, steps: 3 };
        let attack = AttackConfig::new(0.3, 10);
        let d = assumption_diagnostics(&m, &ds.inputs, ds.labels.as_ref().unwrap(), 11, &interp, &attack, 0).unwrap();
        assert!(d.eligible > 0);
        assert_eq!(d.monotone_fraction, Some(1.0));
        for c in &d.curves {
            assert!(c.margins.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        }
        assert!(d.loss_ratios.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn curve_endpoints_are_clean_and_pgd_margins() {
        let m = Mlp::init(&[2, 16, 2], 8).unwrap();
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 100, 0.1, 2).unwrap();
        let labels = ds.labels.as_ref().unwrap();
        let interp = InterpolationConfig { rho: 0.05, tau: 2.0, steps: 3 };
        let attack = AttackConfig::new(0.2, 10);
        let d = assumption_diagnostics(&m, &ds.inputs, labels, 5, &interp, &attack, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let targets: Vec<SoftLabel> = labels.iter().map(|&c| SoftLabel::one_hot(c, 2).unwrap()).collect();
        let x_pgd = pgd_batch(&m, &ds.inputs, &targets, &attack, &mut rng).unwrap().x_adv;
        for c in &d.curves {
            let x = Tensor::matrix(1, 2, ds.inputs.row(c.row).to_vec()).unwrap();
            let p = Tensor::matrix(1, 2, x_pgd.row(c.row).to_vec()).unwrap();
            let t = std::slice::from_ref(&targets[c.row]);
            assert!((c.margins[0] - margins(&m, &x, t, 2.0).unwrap()[0]).abs() < 1e-12);
            assert!((c.margins[4] - margins(&m, &p, t, 2.0).unwrap()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn nothing_eligible_is_reported() {
        let m = linear([0.0; 4], [1.0, 0.0]);
        let x = Tensor::matrix(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let interp = InterpolationConfig { rho: 0.05, tau: 2.0, steps: 3 };
        let d = assumption_diagnostics(&m, &x, &[0, 0], 5, &interp, &AttackConfig::new(0.1, 3), 0).unwrap();
        assert_eq!(d.eligible, 0);
        assert_eq!(d.monotone_fraction, None);
        assert!(d.ratio_stats.is_none());
    }

    #[test]
    fn ratio_stats_median() {
        let s = RatioStats::from_ratios(&[1.0, 3.0, 0.9, 1.1]).unwrap();
        assert_eq!(s.median, 1.05);
        assert_eq!(s.within_band, 0.75);
        assert!(RatioStats::from_ratios(&[]).is_none());
    }

    #[test]
    fn report_serializations() {
        let r = EvalReport {
            natural_acc: 0.9,
            robust: vec![RobustEntry { steps: 20, epsilon: 0.1, restarts: 1, accuracy: 0.7 }],
            diagnostics: None,
        };
        assert_eq!(r.to_csv(), "metric,steps,epsilon,restarts,value\nnatural_acc,0,0,0,0.9\nrobust_acc,20,0.1,1,0.7\n");
        for line in r.to_jsonl().lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }
}
