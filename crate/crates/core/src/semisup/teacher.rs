//! Confidence-thresholded pseudo-label teacher.
//!
//! Each step minimizes `l_s + λ_u l_u`. `l_s` is the CE on a weakly jittered
//! labeled batch. For `l_u`, the model labels a weakly jittered unlabeled
//! batch with its argmax, keeps the rows whose top probability reaches the
//! threshold, and scores a strongly jittered view against those hard labels;
//! the masked sum is divided by the full unlabeled batch size.
//!
//! Jitter is additive Gaussian noise. For square single-channel images
//! (`image_side` set) the strong view also shifts the image by up to
//! `max_shift` pixels in each direction, filling with zeros.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::optim::{Sgd, SgdConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::loss::cross_entropy_rows;
use crate::model::{argmax, Mlp, SoftLabel};
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherConfig {
    pub confidence_threshold: f64,
    pub unsup_weight: f64,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub image_side: Option<usize>,
    pub max_shift: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.95,
            unsup_weight: 1.0,
            epochs: 30,
            hidden: vec![64, 64],
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            labeled_batch: 32,
            unlabeled_batch: 64,
            weak_sigma: 0.01,
            strong_sigma: 0.05,
            image_side: None,
            max_shift: 2,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.confidence_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::invalid(format!("confidence threshold must lie in (0, 1), got {t}")));
        }
        if !(self.unsup_weight >= 0.0) {
            return Err(Error::invalid(format!("unsupervised weight must be >= 0, got {}", self.unsup_weight)));
        }
        if self.epochs == 0 || self.labeled_batch == 0 || self.unlabeled_batch == 0 {
            return Err(Error::invalid("teacher epochs and batch sizes must be positive"));
        }
        if !(self.weak_sigma >= 0.0) || !(self.strong_sigma >= 0.0) {
            return Err(Error::invalid("jitter scales must be >= 0"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        self.sgd().validate()
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lr_decay: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TeacherStepStats {
    pub supervised: f64,
    pub unsupervised: f64,
    /// Unlabeled rows that passed the confidence mask.
    pub masked_in: usize,
}

#[derive(Clone, Debug)]
pub struct TeacherModel {
    pub model: Mlp,
    /// Mean step statistics per epoch.
    pub history: Vec<TeacherStepStats>,
}

struct Jitter {
    sigma: f64,
    image: Option<(usize, usize)>,
}

impl Jitter {
    fn apply(&self, x: &Tensor, bounds: Option<(f64, f64)>, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let mut out = match self.image {
            Some((side, shift)) if shift > 0 => translate(x, side, shift, rng)?,
            _ => x.clone(),
        };
        if self.sigma > 0.0 {
            let n = Normal::new(0.0, self.sigma).map_err(|e| Error::invalid(e.to_string()))?;
            for v in out.data_mut() {
                *v += n.sample(rng);
            }
        }
        if let Some((lo, hi)) = bounds {
            for v in out.data_mut() {
                *v = v.clamp(lo, hi);
            }
        }
        Ok(out)
    }
}

fn translate(x: &Tensor, side: usize, max_shift: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if x.cols() != side * side {
        return Err(Error::shape(
            "teacher augmentation",
            format!("rows of width {} are not {side}x{side} images", x.cols()),
        ));
    }
    let s = max_shift as isize;
    let mut out = Tensor::zeros(x.shape().to_vec())?;
    for r in 0..x.rows() {
        let dx = rng.gen_range(-s..=s);
        let dy = rng.gen_range(-s..=s);
        let src = x.row(r);
        let dst = &mut out.data_mut()[r * side * side..(r + 1) * side * side];
        for y in 0..side as isize {
            for xx in 0..side as isize {
                let (sy, sx) = (y - dy, xx - dx);
                if (0..side as isize).contains(&sy) && (0..side as isize).contains(&sx) {
                    dst[(y as usize) * side + xx as usize] = src[(sy as usize) * side + sx as usize];
                }
            }
        }
    }
    Ok(out)
}

/// Loss, gradients and statistics of a single teacher step on given batches.
pub fn teacher_step_loss(
    model: &Mlp,
    labeled_x: &Tensor,
    labeled_y: &[SoftLabel],
    unlabeled_weak: Option<&Tensor>,
    unlabeled_strong: Option<&Tensor>,
    cfg: &TeacherConfig,
) -> Result<(f64, crate::model::ParamGrads, TeacherStepStats)> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, true);
    let xl = g.constant(labeled_x.clone());
    let zl = params.forward(&mut g, xl)?;
    let ce = cross_entropy_rows(&mut g, zl, labeled_y, 0.0)?;
    let ls = g.mean(ce)?;
    let mut stats = TeacherStepStats {
        supervised: g.value(ls).data()[0],
        ..Default::default()
    };
    let mut total = ls;
    if let (Some(weak), Some(strong)) = (unlabeled_weak, unlabeled_strong) {
        let probs = model.probabilities(weak, 1.0)?;
        let m = probs.len();
        let classes = model.class_count();
        let mut hard = Vec::with_capacity(m);
        let mut mask = Vec::with_capacity(m);
        for p in &probs {
            let top = argmax(p.probs());
            let keep = p.probs()[top] >= cfg.confidence_threshold;
            stats.masked_in += usize::from(keep);
            mask.push(if keep { 1.0 / m as f64 } else { 0.0 });
            hard.push(SoftLabel::one_hot(top, classes)?);
        }
        if stats.masked_in > 0 && cfg.unsup_weight > 0.0 {
            let xs = g.constant(strong.clone());
            let zs = params.forward(&mut g, xs)?;
            let ce_u = cross_entropy_rows(&mut g, zs, &hard, 0.0)?;
            let mv = g.constant(Tensor::matrix(m, 1, mask)?);
            let masked = g.mul(ce_u, mv)?;
            let lu = g.sum(masked)?;
            stats.unsupervised = g.value(lu).data()[0];
            let scaled = g.scale(lu, cfg.unsup_weight)?;
            total = g.add(total, scaled)?;
        }
    }
    let value = g.value(total).data()[0];
    let grads = g.backward(total)?;
    Ok((value, params.gradients(&grads, model), stats))
}

/// Train a teacher on `labeled` (with visible labels) and, if present, the
/// unlabeled rows of `unlabeled`.
pub fn train_teacher(
    labeled: &Dataset,
    unlabeled: Option<&Dataset>,
    cfg: &TeacherConfig,
    seed: u64,
) -> Result<TeacherModel> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::invalid("teacher needs a non-empty labeled set"));
    }
    let targets = labeled.one_hot_labels()?;
    let mut sizes = vec![labeled.dim()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(labeled.class_count);
    let mut model = Mlp::init(&sizes, seed)?;
    let mut opt = Sgd::new(cfg.sgd(), &model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let weak = Jitter {
        sigma: cfg.weak_sigma,
        image: None,
    };
    let strong = Jitter {
        sigma: cfg.strong_sigma,
        image: cfg.image_side.map(|s| (s, cfg.max_shift)),
    };
    let unlabeled = unlabeled.filter(|u| !u.is_empty());
    let n = labeled.len();
    let steps = match unlabeled {
        Some(u) => u.len().div_ceil(cfg.unlabeled_batch),
        None => n.div_ceil(cfg.labeled_batch),
    };

    let mut l_order: Vec<usize> = (0..n).collect();
    let mut l_pos = n;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut u_order: Vec<usize> = (0..unlabeled.map_or(0, Dataset::len)).collect();
        u_order.shuffle(&mut rng);
        let mut acc = TeacherStepStats::default();
        for step in 0..steps {
            let mut rows = Vec::with_capacity(cfg.labeled_batch);
            while rows.len() < cfg.labeled_batch.min(n) {
                if l_pos == n {
                    l_order.shuffle(&mut rng);
                    l_pos = 0;
                }
                rows.push(l_order[l_pos]);
                l_pos += 1;
            }
            let xl = weak.apply(&labeled.inputs.select_rows(&rows)?, labeled.domain_bounds, &mut rng)?;
            let yl: Vec<SoftLabel> = rows.iter().map(|&i| targets[i].clone()).collect();

            let (uw, us) = match unlabeled {
                Some(u) => {
                    let lo = step * cfg.unlabeled_batch;
                    let idx = &u_order[lo..(lo + cfg.unlabeled_batch).min(u_order.len())];
                    let xu = u.inputs.select_rows(idx)?;
                    (
                        Some(weak.apply(&xu, u.domain_bounds, &mut rng)?),
                        Some(strong.apply(&xu, u.domain_bounds, &mut rng)?),
                    )
                }
                None => (None, None),
            };
            let (value, grads, stats) = teacher_step_loss(&model, &xl, &yl, uw.as_ref(), us.as_ref(), cfg)?;
            if !value.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("teacher epoch {epoch} step {}", step + 1),
                });
            }
            opt.step(&mut model, &grads, cfg.lr)?;
            acc.supervised += stats.supervised / steps as f64;
            acc.unsupervised += stats.unsupervised / steps as f64;
            acc.masked_in += stats.masked_in;
        }
        history.push(acc);
    }
    Ok(TeacherModel { model, history })
}

/// Full softmax of the teacher (temperature 1) for every row.
pub fn assign_pseudo_labels(teacher: &Mlp, unlabeled: &Dataset) -> Result<Vec<SoftLabel>> {
    teacher.probabilities(&unlabeled.inputs, 1.0)
}
