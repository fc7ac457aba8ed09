//! The adversarial training loop.
//!
//! Pseudo-labels are assigned once, before the first epoch, and frozen in a
//! [`TrainingSet`]. Each epoch sets the PGD budget and margin threshold from
//! their schedules; each batch runs one PGD call, `K` bisection probes for
//! the interpolating variants, and one SGD step on the outer loss.
//!
//! Random streams (all ChaCha8 keyed by `seed`): model init uses `seed`
//! directly, batch order stream 2, attack starts stream 3, and the per-epoch
//! robust evaluation `seed + epoch`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{outer_loss, LossComponents, LossConfig, LossInputs};
use super::optim::{Sgd, SgdConfig};
use super::teacher::{assign_pseudo_labels, train_teacher, TeacherConfig};
use crate::attack::{pgd_batch, AttackConfig, InnerObjective};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evalx::{natural_accuracy, robust_accuracy};
use crate::interpolate::{binary_search_alpha_batch, margins, InterpolationConfig};
use crate::model::{Mlp, SoftLabel};
use crate::schedule::{RhoSchedule, ScheduleSpec};
use crate::tensor::Tensor;

/// Attack used for the per-epoch robust accuracy column.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochEval {
    pub epsilon: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub optimizer: SgdConfig,
    /// Template; the budget is replaced every epoch by the schedule.
    pub attack: AttackConfig,
    pub schedule: ScheduleSpec,
    pub rho_schedule: RhoSchedule,
    /// Template; `rho` is replaced every epoch by the schedule.
    pub interp: InterpolationConfig,
    pub loss: LossConfig,
    pub eval: EpochEval,
    /// Measure wall time per epoch. Off, the column holds 0 and the metrics
    /// are a pure function of config and seed.
    pub record_wall_time: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if self.schedule.total_epochs != self.epochs {
            return Err(Error::invalid(format!(
                "schedule spans {} epochs, training runs {}",
                self.schedule.total_epochs, self.epochs
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        self.optimizer.validate()?;
        self.attack.validate()?;
        self.schedule.validate()?;
        self.rho_schedule.validate(self.epochs)?;
        self.interp.validate()?;
        self.loss.validate()?;
        AttackConfig::new(self.eval.epsilon, self.eval.steps).validate()
    }
}

/// `D̃`: inputs with their frozen targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub inputs: Tensor,
    /// One-hot on labeled rows, teacher softmax on the rest.
    pub targets: Vec<SoftLabel>,
    pub labeled: Vec<bool>,
    pub class_count: usize,
    pub domain_bounds: Option<(f64, f64)>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Join the labeled rows with the pseudo-labeled unlabeled rows.
pub fn build_training_set(labeled: &Dataset, unlabeled: Option<&Dataset>, teacher: Option<&Mlp>) -> Result<TrainingSet> {
    let mut rows: Vec<Vec<f64>> = (0..labeled.len()).map(|i| labeled.inputs.row(i).to_vec()).collect();
    let mut targets = labeled.one_hot_labels()?;
    let mut flags = vec![true; labeled.len()];
    if let Some(u) = unlabeled {
        if u.dim() != labeled.dim() || u.class_count != labeled.class_count {
            return Err(Error::shape("training set", "labeled and unlabeled parts disagree in shape"));
        }
        let teacher = teacher.ok_or_else(|| Error::invalid("unlabeled data needs a teacher"))?;
        rows.extend((0..u.len()).map(|i| u.inputs.row(i).to_vec()));
        targets.extend(assign_pseudo_labels(teacher, u)?);
        flags.extend(std::iter::repeat_n(false, u.len()));
    }
    Ok(TrainingSet {
        inputs: Tensor::from_rows(&rows)?,
        targets,
        labeled: flags,
        class_count: labeled.class_count,
        domain_bounds: labeled.domain_bounds,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub eps_max: f64,
    pub rho: f64,
    pub lr: f64,
    pub mean_alpha_hat: f64,
    pub mean_eff_eps: f64,
    /// Mean margin `d(α̂)` at the training examples actually used.
    pub mean_margin: f64,
    pub train_loss: f64,
    pub components: LossComponents,
    pub nat_acc: f64,
    pub robust_acc_pgd20: f64,
    pub wall_seconds: f64,
    pub batches: usize,
    pub pgd_calls: usize,
    pub probe_passes: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsLog {
    pub const CSV_HEADER: &'static str =
        "epoch,eps_max,rho,mean_alpha_hat,mean_eff_eps,train_loss,nat_acc,robust_acc_pgd20,wall_seconds";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for m in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                m.epoch,
                m.eps_max,
                m.rho,
                m.mean_alpha_hat,
                m.mean_eff_eps,
                m.train_loss,
                m.nat_acc,
                m.robust_acc_pgd20,
                m.wall_seconds
            ));
        }
        s
    }

    /// Everything else recorded per epoch.
    pub fn to_extended_csv(&self) -> String {
        let mut s = String::from(
            "epoch,lr,mean_margin,loss_natural,loss_robust_adv,loss_robust_pgd,loss_distill,batches,pgd_calls,probe_passes\n",
        );
        for m in &self.epochs {
            let c = m.components;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                m.epoch, m.lr, m.mean_margin, c.natural, c.robust_adv, c.robust_pgd, c.distill, m.batches, m.pgd_calls, m.probe_passes
            ));
        }
        s
    }
}

pub enum TeacherSource {
    /// Purely supervised run; no unlabeled data allowed.
    None,
    Pretrained(Mlp),
    Train(TeacherConfig),
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub metrics: MetricsLog,
    pub teacher: Option<Mlp>,
    pub training_set: TrainingSet,
}

/// Teacher, pseudo-labels, then [`train_on`].
pub fn train(
    cfg: &TrainConfig,
    labeled: &Dataset,
    unlabeled: Option<&Dataset>,
    test: &Dataset,
    teacher: TeacherSource,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let teacher = match teacher {
        TeacherSource::None => None,
        TeacherSource::Pretrained(m) => Some(m),
        TeacherSource::Train(tc) => Some(train_teacher(labeled, unlabeled, &tc, cfg.seed)?.model),
    };
    let training_set = build_training_set(labeled, unlabeled, teacher.as_ref())?;
    let (model, metrics) = train_on(cfg, &training_set, teacher.as_ref(), test)?;
    Ok(TrainOutcome {
        model,
        metrics,
        teacher,
        training_set,
    })
}

fn linf_rows(a: &Tensor, b: &Tensor) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(b.row(i)).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
        .collect()
}

/// Epoch loop over a fixed training set.
pub fn train_on(cfg: &TrainConfig, set: &TrainingSet, teacher: Option<&Mlp>, test: &Dataset) -> Result<(Mlp, MetricsLog)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut sizes = vec![set.inputs.cols()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(set.class_count);
    let mut model = Mlp::init(&sizes, cfg.seed)?;
    let mut opt = Sgd::new(cfg.optimizer.clone(), &model);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(2);
    let mut attack_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    attack_rng.set_stream(3);
    let variant = cfg.loss.variant;
    let eval_attack = AttackConfig {
        domain_bounds: test.domain_bounds,
        ..AttackConfig::new(cfg.eval.epsilon, cfg.eval.steps).with_objective(InnerObjective::CeHard)
    };

    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = MetricsLog::default();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let eps = cfg.schedule.eps_at(epoch)?;
        let rho = cfg.rho_schedule.rho_at(epoch);
        let lr = cfg.optimizer.lr_at(epoch, cfg.epochs);
        let attack = AttackConfig {
            epsilon: eps,
            domain_bounds: cfg.attack.domain_bounds.or(set.domain_bounds),
            ..cfg.attack.clone()
        };
        let interp = InterpolationConfig { rho, ..cfg.interp.clone() };
        order.shuffle(&mut order_rng);

        let mut m = EpochMetrics {
            epoch,
            eps_max: eps,
            rho,
            lr,
            ..Default::default()
        };
        let (mut alpha_sum, mut eps_sum, mut margin_sum, mut loss_sum) = (0.0, 0.0, 0.0, 0.0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = set.inputs.select_rows(idx)?;
            let targets: Vec<SoftLabel> = idx.iter().map(|&i| set.targets[i].clone()).collect();
            let labeled: Vec<bool> = idx.iter().map(|&i| set.labeled[i]).collect();

            let x_pgd = pgd_batch(&model, &x, &targets, &attack, &mut attack_rng)?.x_adv;
            m.pgd_calls += 1;
            let (alphas, x_adv) = if variant.interpolates() {
                let s = binary_search_alpha_batch(&model, &x, &x_pgd, &targets, &interp)?;
                m.probe_passes += s.probes;
                (s.alpha, Some(s.x_adv))
            } else {
                (vec![1.0; idx.len()], None)
            };
            let used = x_adv.as_ref().unwrap_or(&x_pgd);
            alpha_sum += alphas.iter().sum::<f64>();
            eps_sum += linf_rows(&x, used).iter().sum::<f64>();
            margin_sum += margins(&model, used, &targets, interp.tau)?.iter().sum::<f64>();

            let eval = outer_loss(
                &cfg.loss,
                &model,
                LossInputs {
                    x: &x,
                    x_adv: x_adv.as_ref(),
                    x_pgd: Some(&x_pgd),
                    targets: &targets,
                    labeled: &labeled,
                    teacher,
                    snapshot: None,
                },
            )?;
            if !eval.value.is_finite() || !eval.grads.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("training epoch {epoch} batch {}: loss {}", b + 1, eval.value),
                });
            }
            opt.step(&mut model, &eval.grads, lr)?;
            let w = idx.len() as f64;
            loss_sum += eval.value * w;
            let c = &mut m.components;
            c.natural += eval.components.natural * w;
            c.robust_adv += eval.components.robust_adv * w;
            c.robust_pgd += eval.components.robust_pgd * w;
            c.distill += eval.components.distill * w;
            m.batches += 1;
        }
        let nf = n as f64;
        m.mean_alpha_hat = alpha_sum / nf;
        m.mean_eff_eps = eps_sum / nf;
        m.mean_margin = margin_sum / nf;
        m.train_loss = loss_sum / nf;
        let c = &mut m.components;
        c.natural /= nf;
        c.robust_adv /= nf;
        c.robust_pgd /= nf;
        c.distill /= nf;
        m.nat_acc = natural_accuracy(&model, test)?;
        m.robust_acc_pgd20 = robust_accuracy(&model, test, &eval_attack, cfg.seed.wrapping_add(epoch as u64))?;
        if cfg.record_wall_time {
            m.wall_seconds = start.elapsed().as_secs_f64();
        }
        log.epochs.push(m);
    }
    Ok((model, log))
}
