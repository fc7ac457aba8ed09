//! Experiment configuration files.
//!
//! One `section.key = value` assignment per line. `#` starts a comment that
//! runs to the end of the line; blank lines are ignored. Strings are
//! unquoted, numbers decimal, booleans `true`/`false`, lists
//! comma-separated, pairs and triples colon-separated inside a list item.
//! `none` clears an optional value. Keys that are not listed in a section's
//! table below are rejected, as are repeated keys; missing keys take their
//! defaults.
//!
//! ```text
//! experiment.seed = 0
//! experiment.out_dir = runs/ssat_mbi
//! data.source = two_moons            # gaussian_blobs, concentric_circles, idx
//! data.points = 1000
//! data.noise = 0.05
//! data.test_points = 500
//! data.labeled_fraction = 0.05
//! data.domain_bounds = none          # e.g. 0:1
//! data.train_images = none           # idx paths
//! data.train_labels = none
//! data.test_images = none
//! data.test_labels = none
//! data.limit = none                  # cap rows read from idx files
//! model.hidden = 64,64
//! train.epochs = 60
//! train.batch_size = 64
//! train.lr = 0.05
//! train.momentum = 0.9
//! train.weight_decay = 0.0002
//! train.lr_decay = 0.6:0.1,0.7:0.01,0.9:0.005
//! train.record_wall_time = false
//! attack.epsilon = 0.1               # eps_base of the schedule
//! attack.steps = 10
//! attack.step_size = none            # none: a quarter of the current budget
//! attack.objective = ce              # ce_hard, ce (soft), kl
//! attack.restarts = 1
//! schedule.kind = curious            # const, linear, curious
//! schedule.gamma = 1.25
//! schedule.ramp_epochs = 42
//! rho.initial = 0.05
//! rho.double_at = 45                 # none: never doubles
//! interp.tau = 2
//! interp.steps = 3
//! loss.variant = ssat_mbi            # rst, uatpp, ssat_mbi, srst_awr, ssat_mbi_awr
//! loss.lambda = 8
//! loss.beta = 0.4
//! loss.gamma_prime = 1               # AWR variants only
//! loss.lambda_prime = 20
//! loss.tau_prime = 2
//! loss.alpha_prime = 0.1
//! teacher.threshold = 0.95
//! teacher.unsup_weight = 1
//! ...
//! eval.epsilon = 0.1
//! eval.steps = 20
//! eval.attacks = 10:0.1:1,20:0.1:1,40:0.1:1   # steps:epsilon:restarts
//! eval.diag_points = 200
//! eval.grid_size = 11
//! sweep.betas = 0,0.2,0.4,0.6,0.8,1
//! sweep.rhos = 0.05,0.1
//! ```

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attack::{AttackConfig, InnerObjective};
use crate::data::SyntheticKind;
use crate::error::{Error, Result};
use crate::interpolate::InterpolationConfig;
use crate::schedule::{EpsSchedule, RhoSchedule, ScheduleSpec};
use crate::semisup::{AwrParams, EpochEval, LossConfig, LossVariant, SgdConfig, TeacherConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synthetic(SyntheticKind),
    Idx,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Synthetic(k) => k.as_str(),
            DataSource::Idx => "idx",
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "idx" {
            Ok(DataSource::Idx)
        } else {
            s.parse().map(DataSource::Synthetic)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub source: DataSource,
    pub points: usize,
    pub noise: f64,
    pub test_points: usize,
    pub labeled_fraction: f64,
    pub domain_bounds: Option<(f64, f64)>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub limit: Option<usize>,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticKind::TwoMoons),
            points: 1000,
            noise: 0.05,
            test_points: 500,
            labeled_fraction: 0.05,
            domain_bounds: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    /// `(steps, epsilon, restarts)`.
    pub attacks: Vec<(usize, f64, usize)>,
    pub diag_points: usize,
    pub grid_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSection {
    pub betas: Vec<f64>,
    pub rhos: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub data: DataSpec,
    /// `train.seed` is the experiment seed.
    pub train: TrainConfig,
    pub teacher: TeacherConfig,
    /// Kept even for non-AWR variants so the file round-trips.
    pub awr: AwrParams,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let epochs = 60;
        Self {
            out_dir: PathBuf::from("runs/default"),
            data: DataSpec::default(),
            train: TrainConfig {
                epochs,
                batch_size: 64,
                hidden: vec![64, 64],
                optimizer: SgdConfig {
                    lr: 0.05,
                    momentum: 0.9,
                    weight_decay: 2e-4,
                    lr_decay: vec![(0.6, 0.1), (0.7, 0.01), (0.9, 0.005)],
                },
                attack: AttackConfig::new(0.1, 10),
                schedule: ScheduleSpec {
                    variant: EpsSchedule::Curious {
                        gamma: 1.25,
                        ramp_epochs: 42,
                    },
                    eps_base: 0.1,
                    total_epochs: epochs,
                },
                rho_schedule: RhoSchedule {
                    rho_initial: 0.05,
                    double_at_epoch: Some(45),
                },
                interp: InterpolationConfig {
                    rho: 0.05,
                    tau: 2.0,
                    steps: 3,
                },
                loss: LossConfig::new(LossVariant::SsatMbi, 8.0, 0.4),
                eval: EpochEval {
                    epsilon: 0.1,
                    steps: 20,
                },
                record_wall_time: false,
                seed: 0,
            },
            teacher: TeacherConfig::default(),
            awr: AwrParams {
                gamma_prime: 1.0,
                lambda_prime: 20.0,
                tau_prime: 2.0,
                alpha_prime: 0.1,
            },
            eval: EvalSection {
                attacks: vec![(10, 0.1, 1), (20, 0.1, 1), (40, 0.1, 1)],
                diag_points: 200,
                grid_size: 11,
            },
            sweep: SweepSection {
                betas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
                rhos: vec![0.05, 0.1],
            },
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Fields {
    map: BTreeMap<String, Entry>,
}

fn bad(line: usize, detail: impl Into<String>) -> Error {
    Error::Config {
        line,
        detail: detail.into(),
    }
}

fn parse_scalar<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    s.parse::<T>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn split_list(s: &str) -> Vec<&str> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').map(str::trim).collect()
    }
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    split_list(s).into_iter().map(parse_scalar).collect()
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
    Ok((parse_scalar(a.trim())?, parse_scalar(b.trim())?))
}

fn parse_optional<T>(s: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Option<T>, String> {
    if s == "none" {
        Ok(None)
    } else {
        f(s).map(Some)
    }
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected `section.key = value`, got {content:?}")))?;
            let key = key.trim();
            if key.split('.').count() != 2 || key.split('.').any(str::is_empty) {
                return Err(bad(line, format!("key {key:?} is not of the form section.key")));
            }
            if let Some(prev) = map.get(key) {
                let prev: &Entry = prev;
                return Err(bad(line, format!("key {key} already set on line {}", prev.line)));
            }
            map.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.trim().to_string(),
                },
            );
        }
        Ok(Self { map })
    }

    fn take<T>(&mut self, key: &str, slot: &mut T, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<()> {
        if let Some(e) = self.map.remove(key) {
            *slot = f(&e.value).map_err(|d| bad(e.line, format!("{key}: {d}")))?;
        }
        Ok(())
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.line)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Fields::parse(text)?;
        let mut c = ExperimentConfig::default();
        let path = |s: &str| Ok(PathBuf::from(s));

        f.take("experiment.seed", &mut c.train.seed, parse_scalar)?;
        f.take("experiment.out_dir", &mut c.out_dir, path)?;

        let d = &mut c.data;
        f.take("data.source", &mut d.source, |s| s.parse::<DataSource>().map_err(|e| e.to_string()))?;
        f.take("data.points", &mut d.points, parse_scalar)?;
        f.take("data.noise", &mut d.noise, parse_scalar)?;
        f.take("data.test_points", &mut d.test_points, parse_scalar)?;
        f.take("data.labeled_fraction", &mut d.labeled_fraction, parse_scalar)?;
        f.take("data.domain_bounds", &mut d.domain_bounds, |s| parse_optional(s, parse_pair))?;
        for (key, slot) in [
            ("data.train_images", &mut d.train_images),
            ("data.train_labels", &mut d.train_labels),
            ("data.test_images", &mut d.test_images),
            ("data.test_labels", &mut d.test_labels),
        ] {
            f.take(key, slot, |s| parse_optional(s, path))?;
        }
        f.take("data.limit", &mut d.limit, |s| parse_optional(s, parse_scalar))?;

        let t = &mut c.train;
        f.take("model.hidden", &mut t.hidden, parse_list)?;
        f.take("train.epochs", &mut t.epochs, parse_scalar)?;
        f.take("train.batch_size", &mut t.batch_size, parse_scalar)?;
        f.take("train.lr", &mut t.optimizer.lr, parse_scalar)?;
        f.take("train.momentum", &mut t.optimizer.momentum, parse_scalar)?;
        f.take("train.weight_decay", &mut t.optimizer.weight_decay, parse_scalar)?;
        f.take("train.lr_decay", &mut t.optimizer.lr_decay, |s| {
            split_list(s).into_iter().map(parse_pair).collect()
        })?;
        f.take("train.record_wall_time", &mut t.record_wall_time, parse_bool)?;

        let mut eps_base = t.schedule.eps_base;
        f.take("attack.epsilon", &mut eps_base, parse_scalar)?;
        t.attack.epsilon = eps_base;
        f.take("attack.steps", &mut t.attack.steps, parse_scalar)?;
        f.take("attack.step_size", &mut t.attack.step_size, |s| parse_optional(s, parse_scalar))?;
        f.take("attack.objective", &mut t.attack.objective, |s| {
            InnerObjective::parse(s).ok_or_else(|| format!("unknown objective {s:?} (ce_hard, ce, ce_soft, kl)"))
        })?;
        f.take("attack.restarts", &mut t.attack.restarts, parse_scalar)?;

        let kind_line = f.line_of("schedule.kind");
        let mut kind = match t.schedule.variant {
            EpsSchedule::Const => "const",
            EpsSchedule::Linear { .. } => "linear",
            EpsSchedule::Curious { .. } => "curious",
        }
        .to_string();
        let (mut gamma, mut ramp) = match t.schedule.variant {
            EpsSchedule::Curious { gamma, ramp_epochs } => (gamma, ramp_epochs),
            EpsSchedule::Linear { ramp_epochs } => (1.0, ramp_epochs),
            EpsSchedule::Const => (1.0, 1),
        };
        f.take("schedule.kind", &mut kind, |s| Ok(s.to_string()))?;
        f.take("schedule.gamma", &mut gamma, parse_scalar)?;
        f.take("schedule.ramp_epochs", &mut ramp, parse_scalar)?;
        let variant = match kind.as_str() {
            "const" => EpsSchedule::Const,
            "linear" => EpsSchedule::Linear { ramp_epochs: ramp },
            "curious" => EpsSchedule::Curious { gamma, ramp_epochs: ramp },
            other => return Err(bad(kind_line, format!("schedule.kind: unknown schedule {other:?} (const, linear, curious)"))),
        };
        t.schedule = ScheduleSpec {
            variant,
            eps_base,
            total_epochs: t.epochs,
        };
        f.take("rho.initial", &mut t.rho_schedule.rho_initial, parse_scalar)?;
        f.take("rho.double_at", &mut t.rho_schedule.double_at_epoch, |s| parse_optional(s, parse_scalar))?;
        t.interp.rho = t.rho_schedule.rho_initial;
        f.take("interp.tau", &mut t.interp.tau, parse_scalar)?;
        f.take("interp.steps", &mut t.interp.steps, parse_scalar)?;

        f.take("loss.variant", &mut t.loss.variant, |s| {
            LossVariant::parse(s).ok_or_else(|| format!("unknown variant {s:?} (rst, uatpp, ssat_mbi, srst_awr, ssat_mbi_awr)"))
        })?;
        f.take("loss.lambda", &mut t.loss.lambda, parse_scalar)?;
        f.take("loss.beta", &mut t.loss.beta, parse_scalar)?;
        let a = &mut c.awr;
        f.take("loss.gamma_prime", &mut a.gamma_prime, parse_scalar)?;
        f.take("loss.lambda_prime", &mut a.lambda_prime, parse_scalar)?;
        f.take("loss.tau_prime", &mut a.tau_prime, parse_scalar)?;
        f.take("loss.alpha_prime", &mut a.alpha_prime, parse_scalar)?;
        t.loss.awr = t.loss.variant.is_awr().then(|| a.clone());

        let th = &mut c.teacher;
        f.take("teacher.threshold", &mut th.confidence_threshold, parse_scalar)?;
        f.take("teacher.unsup_weight", &mut th.unsup_weight, parse_scalar)?;
        f.take("teacher.epochs", &mut th.epochs, parse_scalar)?;
        f.take("teacher.hidden", &mut th.hidden, parse_list)?;
        f.take("teacher.lr", &mut th.lr, parse_scalar)?;
        f.take("teacher.momentum", &mut th.momentum, parse_scalar)?;
        f.take("teacher.weight_decay", &mut th.weight_decay, parse_scalar)?;
        f.take("teacher.labeled_batch", &mut th.labeled_batch, parse_scalar)?;
        f.take("teacher.unlabeled_batch", &mut th.unlabeled_batch, parse_scalar)?;
        f.take("teacher.weak_sigma", &mut th.weak_sigma, parse_scalar)?;
        f.take("teacher.strong_sigma", &mut th.strong_sigma, parse_scalar)?;
        f.take("teacher.image_side", &mut th.image_side, |s| parse_optional(s, parse_scalar))?;
        f.take("teacher.max_shift", &mut th.max_shift, parse_scalar)?;

        f.take("eval.epsilon", &mut c.train.eval.epsilon, parse_scalar)?;
        f.take("eval.steps", &mut c.train.eval.steps, parse_scalar)?;
        f.take("eval.attacks", &mut c.eval.attacks, |s| {
            split_list(s)
                .into_iter()
                .map(|item| {
                    let p: Vec<&str> = item.split(':').map(str::trim).collect();
                    match p.as_slice() {
                        [a, b, r] => Ok((parse_scalar(a)?, parse_scalar(b)?, parse_scalar(r)?)),
                        _ => Err(format!("expected steps:epsilon:restarts, got {item:?}")),
                    }
                })
                .collect()
        })?;
        f.take("eval.diag_points", &mut c.eval.diag_points, parse_scalar)?;
        f.take("eval.grid_size", &mut c.eval.grid_size, parse_scalar)?;
        f.take("sweep.betas", &mut c.sweep.betas, parse_list)?;
        f.take("sweep.rhos", &mut c.sweep.rhos, parse_list)?;

        if let Some((key, e)) = f.map.iter().min_by_key(|(_, e)| e.line) {
            return Err(bad(e.line, format!("unknown key {key}")));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.teacher.validate()?;
        let d = &self.data;
        if !(d.labeled_fraction > 0.0 && d.labeled_fraction <= 1.0) {
            return Err(Error::invalid(format!("labeled fraction must lie in (0, 1], got {}", d.labeled_fraction)));
        }
        match d.source {
            DataSource::Synthetic(_) => {
                if d.points < 2 || d.test_points < 2 {
                    return Err(Error::invalid("synthetic data needs at least 2 train and 2 test points"));
                }
            }
            DataSource::Idx => {
                if d.train_images.is_none() || d.train_labels.is_none() || d.test_images.is_none() || d.test_labels.is_none() {
                    return Err(Error::invalid("idx data needs train/test image and label paths"));
                }
            }
        }
        if self.eval.grid_size < 2 {
            return Err(Error::invalid("eval.grid_size must be >= 2"));
        }
        if self.sweep.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::invalid("sweep betas must lie in [0, 1]"));
        }
        if self.sweep.rhos.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("sweep rhos must be > 0"));
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        fn opt<T: Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string)
        }
        fn list<T: Display>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        fn pairs(v: &[(f64, f64)]) -> String {
            v.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(",")
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string());
        let t = &self.train;
        let d = &self.data;
        let (kind, gamma, ramp) = match t.schedule.variant {
            EpsSchedule::Const => ("const", 1.0, 1),
            EpsSchedule::Linear { ramp_epochs } => ("linear", 1.0, ramp_epochs),
            EpsSchedule::Curious { gamma, ramp_epochs } => ("curious", gamma, ramp_epochs),
        };
        let th = &self.teacher;
        let a = &self.awr;
        let attacks = self
            .eval
            .attacks
            .iter()
            .map(|(s, e, r)| format!("{s}:{e}:{r}"))
            .collect::<Vec<_>>()
            .join(",");
        let lines: Vec<(&str, String)> = vec![
            ("experiment.seed", t.seed.to_string()),
            ("experiment.out_dir", self.out_dir.display().to_string()),
            ("data.source", d.source.as_str().to_string()),
            ("data.points", d.points.to_string()),
            ("data.noise", d.noise.to_string()),
            ("data.test_points", d.test_points.to_string()),
            ("data.labeled_fraction", d.labeled_fraction.to_string()),
            ("data.domain_bounds", d.domain_bounds.map_or_else(|| "none".into(), |(lo, hi)| format!("{lo}:{hi}"))),
            ("data.train_images", path(&d.train_images)),
            ("data.train_labels", path(&d.train_labels)),
            ("data.test_images", path(&d.test_images)),
            ("data.test_labels", path(&d.test_labels)),
            ("data.limit", opt(&d.limit)),
            ("model.hidden", list(&t.hidden)),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.lr", t.optimizer.lr.to_string()),
            ("train.momentum", t.optimizer.momentum.to_string()),
            ("train.weight_decay", t.optimizer.weight_decay.to_string()),
            ("train.lr_decay", pairs(&t.optimizer.lr_decay)),
            ("train.record_wall_time", t.record_wall_time.to_string()),
            ("attack.epsilon", t.schedule.eps_base.to_string()),
            ("attack.steps", t.attack.steps.to_string()),
            ("attack.step_size", opt(&t.attack.step_size)),
            ("attack.objective", t.attack.objective.as_str().to_string()),
            ("attack.restarts", t.attack.restarts.to_string()),
            ("schedule.kind", kind.to_string()),
            ("schedule.gamma", gamma.to_string()),
            ("schedule.ramp_epochs", ramp.to_string()),
            ("rho.initial", t.rho_schedule.rho_initial.to_string()),
            ("rho.double_at", opt(&t.rho_schedule.double_at_epoch)),
            ("interp.tau", t.interp.tau.to_string()),
            ("interp.steps", t.interp.steps.to_string()),
            ("loss.variant", t.loss.variant.as_str().to_string()),
            ("loss.lambda", t.loss.lambda.to_string()),
            ("loss.beta", t.loss.beta.to_string()),
            ("loss.gamma_prime", a.gamma_prime.to_string()),
            ("loss.lambda_prime", a.lambda_prime.to_string()),
            ("loss.tau_prime", a.tau_prime.to_string()),
            ("loss.alpha_prime", a.alpha_prime.to_string()),
            ("teacher.threshold", th.confidence_threshold.to_string()),
            ("teacher.unsup_weight", th.unsup_weight.to_string()),
            ("teacher.epochs", th.epochs.to_string()),
            ("teacher.hidden", list(&th.hidden)),
            ("teacher.lr", th.lr.to_string()),
            ("teacher.momentum", th.momentum.to_string()),
            ("teacher.weight_decay", th.weight_decay.to_string()),
            ("teacher.labeled_batch", th.labeled_batch.to_string()),
            ("teacher.unlabeled_batch", th.unlabeled_batch.to_string()),
            ("teacher.weak_sigma", th.weak_sigma.to_string()),
            ("teacher.strong_sigma", th.strong_sigma.to_string()),
            ("teacher.image_side", opt(&th.image_side)),
            ("teacher.max_shift", th.max_shift.to_string()),
            ("eval.epsilon", t.eval.epsilon.to_string()),
            ("eval.steps", t.eval.steps.to_string()),
            ("eval.attacks", attacks),
            ("eval.diag_points", self.eval.diag_points.to_string()),
            ("eval.grid_size", self.eval.grid_size.to_string()),
            ("sweep.betas", list(&self.sweep.betas)),
            ("sweep.rhos", list(&self.sweep.rhos)),
        ];
        let mut out = String::new();
        let mut section = "";
        for (key, value) in lines {
            let s = key.split('.').next().unwrap_or("");
            if s != section && !out.is_empty() {
                out.push('\n');
            }
            section = s;
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&c.serialize()).unwrap();
        assert_eq!(back, c);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# header\nexperiment.seed = 7  # trailing\n\nloss.variant = srst_awr\nschedule.kind = linear\nschedule.ramp_epochs = 30\nrho.double_at = none\ndata.domain_bounds = 0:1\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.train.loss.variant, LossVariant::SrstAwr);
        assert!(c.train.loss.awr.is_some());
        assert_eq!(c.train.schedule.variant, EpsSchedule::Linear { ramp_epochs: 30 });
        assert_eq!(c.train.rho_schedule.double_at_epoch, None);
        assert_eq!(c.data.domain_bounds, Some((0.0, 1.0)));
        assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = ExperimentConfig::parse("experiment.seed = 1\n\ntrain.epoks = 3\n").unwrap_err();
        assert_eq!(err.to_string(), "config line 3: unknown key train.epoks");
        let err = ExperimentConfig::parse("train.epochs = three\n").unwrap_err();
        assert!(err.to_string().starts_with("config line 1: train.epochs"), "{err}");
        let err = ExperimentConfig::parse("a.b = 1\na.b = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("line 1"), "{err}");
        let err = ExperimentConfig::parse("justtext\n").unwrap_err();
        assert!(err.to_string().starts_with("config line 1"), "{err}");
        let err = ExperimentConfig::parse("\nschedule.kind = cosine\n").unwrap_err();
        assert!(err.to_string().starts_with("config line 2"), "{err}");
    }
}
