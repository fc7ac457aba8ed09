//! Command-line experiment runner.
//!
//! `marginforge <train|eval|diagnose|schedule|sweep|gradcheck> --config <path> [--out <dir>] [--seed <u64>]`
//!
//! Every artifact goes through [`write_atomic`]. `eval` and `diagnose`
//! read `model.ckpt` from the output directory written by `train`.

pub mod config;
pub mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{pgd_batch, AttackConfig};
use crate::data::idx::parse_idx;
use crate::data::{gen_synthetic, split_semisup, Dataset, SemiSupervisedSplit};
use crate::error::{Error, Result};
use crate::evalx::{assumption_diagnostics, evaluate, evaluation_labels, sample_rows, DiagnosticsSpec, EvalReport, EvalSpec};
use crate::interpolate::{binary_search_alpha_batch, InterpolationConfig};
use crate::io::{read_file, write_atomic};
use crate::model::gradcheck::run_gradcheck;
use crate::model::{checkpoint, Mlp, SoftLabel};
use crate::semisup::{train, MetricsLog, TeacherSource, TrainConfig};
use crate::tensor::Tensor;

pub use config::{DataSource, ExperimentConfig};
pub use svg::{emit_boundary_svg, line_plot_svg, Classifier, Trace, Viewport};

/// Synthetic test sets are drawn with `seed + TEST_SEED_OFFSET`.
pub const TEST_SEED_OFFSET: u64 = 1000;
const GRADCHECK_CASES: usize = 50;
const GRADCHECK_TOLERANCE: f64 = 1e-4;
const BOUNDARY_RESOLUTION: usize = 120;
const TRACE_POINTS: usize = 12;
const PLOTTED_CURVES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Train,
    Eval,
    Diagnose,
    Schedule,
    Sweep,
    Gradcheck,
}

#[derive(Debug, Parser)]
#[command(name = "marginforge", version, about = "Semi-supervised adversarial training experiments")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `experiment.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// A failed run: the stage that failed and why.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub source: Error,
}

impl Failure {
    /// 2 for unusable configuration, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        if self.stage == "config" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for Failure {}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|source| Failure { stage, source })
    }
}

/// Files written by a run, relative to its output directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    /// `false` only for a gradcheck run above tolerance.
    pub passed: bool,
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn put(&mut self, name: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let rel = name.as_ref().to_path_buf();
        write_atomic(&self.dir.join(&rel), bytes)?;
        self.written.push(rel);
        Ok(())
    }
}

/// Parse arguments and run; the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(args.command, &args.config, args.out.as_deref(), args.seed) {
        Ok(s) => {
            for a in &s.artifacts {
                println!("{}", s.out_dir.join(a).display());
            }
            if s.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("marginforge: gradcheck above tolerance");
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("marginforge: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

/// Load, override and validate a config file.
pub fn load_config(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(o) = out {
        cfg.out_dir = o.to_path_buf();
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(command: Command, config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> std::result::Result<RunSummary, Failure> {
    let cfg = load_config(config_path, out, seed).stage("config")?;
    run_config(command, &cfg)
}

pub fn run_config(command: Command, cfg: &ExperimentConfig) -> std::result::Result<RunSummary, Failure> {
    let mut art = Artifacts {
        dir: cfg.out_dir.clone(),
        written: Vec::new(),
    };
    let mut passed = true;
    match command {
        Command::Train => cmd_train(cfg, &mut art)?,
        Command::Eval => cmd_eval(cfg, &mut art)?,
        Command::Diagnose => cmd_diagnose(cfg, &mut art)?,
        Command::Schedule => cmd_schedule(cfg, &mut art).stage("schedule")?,
        Command::Sweep => cmd_sweep(cfg, &mut art)?,
        Command::Gradcheck => passed = cmd_gradcheck(cfg, &mut art).stage("gradcheck")?,
    }
    Ok(RunSummary {
        out_dir: art.dir,
        artifacts: art.written,
        passed,
    })
}

/// Training pool and test set described by the config.
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    pub manifest: serde_json::Value,
}

fn read_idx_pair(images: &Path, labels: &Path, limit: Option<usize>) -> Result<(Tensor, Vec<usize>)> {
    let mut x = parse_idx(&read_file(images)?)?.to_tensor()?;
    let mut y = parse_idx(&read_file(labels)?)?.class_labels()?;
    if x.shape().len() != 2 {
        return Err(Error::invalid(format!("{}: images must have at least 2 dimensions", images.display())));
    }
    if x.rows() != y.len() {
        return Err(Error::shape("idx", format!("{} images but {} labels", x.rows(), y.len())));
    }
    if let Some(n) = limit.filter(|&n| n < y.len()) {
        x = x.select_rows(&(0..n).collect::<Vec<_>>())?;
        y.truncate(n);
    }
    Ok((x, y))
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let d = &cfg.data;
    let seed = cfg.train.seed;
    let test_seed = seed.wrapping_add(TEST_SEED_OFFSET);
    let (mut train, mut test, params) = match d.source {
        DataSource::Synthetic(kind) => (
            gen_synthetic(kind, d.points, d.noise, seed)?,
            gen_synthetic(kind, d.test_points, d.noise, test_seed)?,
            serde_json::json!({"points": d.points, "test_points": d.test_points, "noise": d.noise,
                "test_seed": test_seed}),
        ),
        DataSource::Idx => {
            let need = |p: &Option<PathBuf>, what: &str| p.clone().ok_or_else(|| Error::invalid(format!("missing data.{what}")));
            let (ti, tl) = (need(&d.train_images, "train_images")?, need(&d.train_labels, "train_labels")?);
            let (ei, el) = (need(&d.test_images, "test_images")?, need(&d.test_labels, "test_labels")?);
            let (x, y) = read_idx_pair(&ti, &tl, d.limit)?;
            let (xt, yt) = read_idx_pair(&ei, &el, d.limit)?;
            let classes = y.iter().chain(&yt).max().map_or(0, |m| m + 1);
            (
                Dataset::labeled(x, y, classes)?,
                Dataset::labeled(xt, yt, classes)?,
                serde_json::json!({"train_images": ti, "train_labels": tl, "test_images": ei,
                    "test_labels": el, "limit": d.limit}),
            )
        }
    };
    let bounds = d.domain_bounds.or((d.source == DataSource::Idx).then_some((0.0, 1.0)));
    train.domain_bounds = bounds;
    test.domain_bounds = bounds;
    let manifest = serde_json::json!({
        "kind": d.source.as_str(),
        "params": params,
        "seed": seed,
        "dim": train.dim(),
        "classes": train.class_count,
        "train_rows": train.len(),
        "test_rows": test.len(),
        "domain_bounds": bounds.map(|(lo, hi)| [lo, hi]),
    });
    Ok(LoadedData { train, test, manifest })
}

fn split_manifest(base: &serde_json::Value, fraction: f64, split: &SemiSupervisedSplit) -> serde_json::Value {
    let mut m = base.clone();
    m["split"] = serde_json::json!({
        "labeled_fraction": fraction,
        "seed": base["seed"],
        "labeled_rows": split.labeled_rows,
        "unlabeled_count": split.unlabeled_rows.len(),
    });
    m
}

fn teacher_config(cfg: &ExperimentConfig, dim: usize) -> crate::semisup::TeacherConfig {
    let mut t = cfg.teacher.clone();
    if t.image_side.is_none() && cfg.data.source == DataSource::Idx {
        let side = (dim as f64).sqrt().round() as usize;
        if side * side == dim {
            t.image_side = Some(side);
        }
    }
    t
}

fn eval_spec(cfg: &ExperimentConfig, diagnostics: bool) -> EvalSpec {
    EvalSpec {
        attacks: cfg.eval.attacks.clone(),
        diagnostics: diagnostics.then(|| diagnostics_spec(cfg)),
        seed: cfg.train.seed,
    }
}

/// Diagnostics at the end-of-training budget and threshold.
fn diagnostics_spec(cfg: &ExperimentConfig) -> DiagnosticsSpec {
    let t = &cfg.train;
    DiagnosticsSpec {
        points: cfg.eval.diag_points,
        grid_size: cfg.eval.grid_size,
        interp: InterpolationConfig {
            rho: t.rho_schedule.rho_at(t.epochs),
            ..t.interp.clone()
        },
        attack: AttackConfig {
            epsilon: t.eval.epsilon,
            ..t.attack.clone()
        },
    }
}

fn metrics_plot(log: &MetricsLog) -> String {
    let col = |f: fn(&crate::semisup::EpochMetrics) -> f64| log.epochs.iter().map(|m| (m.epoch as f64, f(m))).collect();
    line_plot_svg(
        "training metrics",
        "epoch",
        &[
            ("nat_acc".into(), col(|m| m.nat_acc)),
            ("robust_acc_pgd20".into(), col(|m| m.robust_acc_pgd20)),
            ("mean_alpha_hat".into(), col(|m| m.mean_alpha_hat)),
        ],
    )
}

/// Decision regions of a 2-D model with `x -> x_adv -> x_pgd` traces for
/// the first correctly classified test points.
fn boundary_plot(cfg: &ExperimentConfig, model: &Mlp, test: &Dataset) -> Result<String> {
    let labels = evaluation_labels(test)?;
    let pred = model.predict(&test.inputs)?;
    let rows: Vec<usize> = (0..test.len()).filter(|&i| pred[i] == labels[i]).take(TRACE_POINTS).collect();
    let mut traces = Vec::new();
    if !rows.is_empty() && cfg.train.eval.epsilon > 0.0 {
        let x = test.inputs.select_rows(&rows)?;
        let targets = rows
            .iter()
            .map(|&i| SoftLabel::one_hot(labels[i], test.class_count))
            .collect::<Result<Vec<_>>>()?;
        let spec = diagnostics_spec(cfg);
        let attack = AttackConfig {
            domain_bounds: spec.attack.domain_bounds.or(test.domain_bounds),
            ..spec.attack
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        rng.set_stream(4);
        let x_pgd = pgd_batch(model, &x, &targets, &attack, &mut rng)?.x_adv;
        let x_adv = binary_search_alpha_batch(model, &x, &x_pgd, &targets, &spec.interp)?.x_adv;
        let pt = |t: &Tensor, i: usize| [t.row(i)[0], t.row(i)[1]];
        traces = (0..rows.len())
            .map(|i| Trace {
                x: pt(&x, i),
                x_adv: pt(&x_adv, i),
                x_pgd: pt(&x_pgd, i),
            })
            .collect();
    }
    emit_boundary_svg(model, &test.inputs, labels, &traces, BOUNDARY_RESOLUTION)
}

fn teacher_source(cfg: &ExperimentConfig, split: &SemiSupervisedSplit, dim: usize) -> TeacherSource {
    if split.unlabeled.is_some() {
        TeacherSource::Train(teacher_config(cfg, dim))
    } else {
        TeacherSource::None
    }
}

fn cmd_train(cfg: &ExperimentConfig, art: &mut Artifacts) -> std::result::Result<(), Failure> {
    let data = load_data(cfg).stage("data")?;
    let split = split_semisup(&data.train, cfg.data.labeled_fraction, cfg.train.seed).stage("split")?;
    art.put("config.cfg", cfg.serialize().as_bytes()).stage("write")?;
    let manifest = split_manifest(&data.manifest, cfg.data.labeled_fraction, &split);
    art.put("manifest.json", pretty(&manifest).as_bytes()).stage("write")?;

    let source = teacher_source(cfg, &split, data.train.dim());
    let out = train(&cfg.train, &split.labeled, split.unlabeled.as_ref(), &data.test, source).stage("training")?;
    art.put("metrics.csv", out.metrics.to_csv().as_bytes()).stage("write")?;
    art.put("metrics_extended.csv", out.metrics.to_extended_csv().as_bytes()).stage("write")?;
    art.put("metrics.svg", metrics_plot(&out.metrics).as_bytes()).stage("write")?;
    art.put("model.ckpt", &checkpoint::to_bytes(&out.model)).stage("write")?;
    if let Some(t) = &out.teacher {
        art.put("teacher.ckpt", &checkpoint::to_bytes(t)).stage("write")?;
    }

    let report = evaluate(&out.model, &data.test, &eval_spec(cfg, true)).stage("evaluation")?;
    write_report(art, "eval", &report)?;
    if data.test.dim() == 2 {
        let svg = boundary_plot(cfg, &out.model, &data.test).stage("plotting")?;
        art.put("boundary.svg", svg.as_bytes()).stage("write")?;
    }
    Ok(())
}

fn write_report(art: &mut Artifacts, stem: &str, report: &EvalReport) -> std::result::Result<(), Failure> {
    art.put(format!("{stem}.csv"), report.to_csv().as_bytes()).stage("write")?;
    art.put(format!("{stem}.jsonl"), report.to_jsonl().as_bytes()).stage("write")
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

fn load_model(cfg: &ExperimentConfig) -> Result<Mlp> {
    checkpoint::load(&cfg.out_dir.join("model.ckpt"))
}

fn cmd_eval(cfg: &ExperimentConfig, art: &mut Artifacts) -> std::result::Result<(), Failure> {
    let model = load_model(cfg).stage("checkpoint")?;
    let data = load_data(cfg).stage("data")?;
    let report = evaluate(&model, &data.test, &eval_spec(cfg, false)).stage("evaluation")?;
    write_report(art, "eval", &report)
}

fn cmd_diagnose(cfg: &ExperimentConfig, art: &mut Artifacts) -> std::result::Result<(), Failure> {
    let model = load_model(cfg).stage("checkpoint")?;
    let data = load_data(cfg).stage("data")?;
    let spec = diagnostics_spec(cfg);
    let rows = sample_rows(data.test.len(), spec.points, cfg.train.seed);
    let x = data.test.inputs.select_rows(&rows).stage("diagnostics")?;
    let all = evaluation_labels(&data.test).stage("diagnostics")?;
    let labels: Vec<usize> = rows.iter().map(|&r| all[r]).collect();
    let attack = AttackConfig {
        domain_bounds: spec.attack.domain_bounds.or(data.test.domain_bounds),
        ..spec.attack.clone()
    };
    let diag = assumption_diagnostics(&model, &x, &labels, spec.grid_size, &spec.interp, &attack, cfg.train.seed)
        .stage("diagnostics")?;

    let mut csv = String::from("row,monotone,loss_ratio\n");
    for (c, r) in diag.curves.iter().zip(&diag.loss_ratios) {
        csv.push_str(&format!("{},{},{}\n", rows[c.row], c.is_monotone(crate::evalx::MONOTONE_TOLERANCE), r));
    }
    art.put("diagnostics.csv", csv.as_bytes()).stage("write")?;
    let curves: Vec<(String, Vec<(f64, f64)>)> = diag
        .curves
        .iter()
        .take(PLOTTED_CURVES)
        .map(|c| (format!("row {}", rows[c.row]), c.alphas.iter().copied().zip(c.margins.iter().copied()).collect()))
        .collect();
    art.put("margin_curves.svg", line_plot_svg("margin along the interpolation path", "alpha", &curves).as_bytes())
        .stage("write")?;
    let mut sorted = diag.loss_ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = vec![(
        "loss ratio".to_string(),
        sorted.iter().enumerate().map(|(i, &r)| ((i as f64 + 0.5) / sorted.len() as f64, r)).collect(),
    )];
    art.put("loss_ratios.svg", line_plot_svg("sorted loss ratios", "quantile", &quantiles).as_bytes())
        .stage("write")?;
    let report = EvalReport {
        natural_acc: crate::evalx::natural_accuracy(&model, &data.test).stage("evaluation")?,
        robust: Vec::new(),
        diagnostics: Some(diag),
    };
    write_report(art, "diagnose", &report)
}

/// `epoch,eps_max,rho` for every epoch of the configured schedules.
pub fn schedule_csv(train: &TrainConfig) -> Result<String> {
    let mut s = String::from("epoch,eps_max,rho\n");
    for e in 1..=train.epochs {
        s.push_str(&format!("{e},{},{}\n", train.schedule.eps_at(e)?, train.rho_schedule.rho_at(e)));
    }
    Ok(s)
}

fn cmd_schedule(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let t = &cfg.train;
    t.schedule.validate()?;
    t.rho_schedule.validate(t.epochs)?;
    art.put("schedule.csv", schedule_csv(t)?.as_bytes())?;
    let eps = (1..=t.epochs).map(|e| Ok((e as f64, t.schedule.eps_at(e)?))).collect::<Result<Vec<_>>>()?;
    let rho = (1..=t.epochs).map(|e| (e as f64, t.rho_schedule.rho_at(e))).collect();
    art.put("schedule.svg", line_plot_svg("epsilon schedule", "epoch", &[("eps_max".into(), eps)]).as_bytes())?;
    art.put("rho.svg", line_plot_svg("margin threshold", "epoch", &[("rho".into(), rho)]).as_bytes())
}

fn sweep_row(value: f64, r: &EvalReport) -> String {
    let mut s = format!("{value},{}", r.natural_acc);
    for e in &r.robust {
        s.push_str(&format!(",{}", e.accuracy));
    }
    s.push('\n');
    s
}

fn cmd_sweep(cfg: &ExperimentConfig, art: &mut Artifacts) -> std::result::Result<(), Failure> {
    let data = load_data(cfg).stage("data")?;
    let seed = cfg.train.seed;
    let split = split_semisup(&data.train, cfg.data.labeled_fraction, seed).stage("split")?;
    let manifest = split_manifest(&data.manifest, cfg.data.labeled_fraction, &split);
    art.put("config.cfg", cfg.serialize().as_bytes()).stage("write")?;
    art.put("manifest.json", pretty(&manifest).as_bytes()).stage("write")?;
    let teacher = match &split.unlabeled {
        Some(u) => Some(
            crate::semisup::train_teacher(&split.labeled, Some(u), &teacher_config(cfg, data.train.dim()), seed)
                .stage("teacher")?
                .model,
        ),
        None => None,
    };
    if let Some(t) = &teacher {
        art.put("teacher.ckpt", &checkpoint::to_bytes(t)).stage("write")?;
    }
    let header = {
        let mut h = String::from("value,nat_acc");
        for (s, e, r) in &cfg.eval.attacks {
            h.push_str(&format!(",robust_pgd{s}_eps{e}_r{r}"));
        }
        h.push('\n');
        h
    };

    type Variant = fn(&mut TrainConfig, f64);
    let grids: [(&str, &[f64], Variant); 2] = [
        ("beta", &cfg.sweep.betas, |t, v| t.loss.beta = v),
        ("rho", &cfg.sweep.rhos, |t, v| {
            t.rho_schedule.rho_initial = v;
            t.interp.rho = v;
        }),
    ];
    for (name, values, apply) in grids {
        let mut table = header.replace("value", name);
        let mut series: Vec<(String, Vec<(f64, f64)>)> = vec![("nat_acc".into(), Vec::new())];
        series.extend(cfg.eval.attacks.iter().map(|(s, _, _)| (format!("pgd-{s}"), Vec::new())));
        for &v in values {
            let mut t = cfg.train.clone();
            apply(&mut t, v);
            let source = teacher.clone().map_or(TeacherSource::None, TeacherSource::Pretrained);
            let out = train(&t, &split.labeled, split.unlabeled.as_ref(), &data.test, source).stage("training")?;
            let report = evaluate(&out.model, &data.test, &eval_spec(cfg, false)).stage("evaluation")?;
            let dir = PathBuf::from(format!("sweep_{name}")).join(format!("{name}_{v}"));
            art.put(dir.join("metrics.csv"), out.metrics.to_csv().as_bytes()).stage("write")?;
            art.put(dir.join("eval.csv"), report.to_csv().as_bytes()).stage("write")?;
            art.put(dir.join("eval.jsonl"), report.to_jsonl().as_bytes()).stage("write")?;
            table.push_str(&sweep_row(v, &report));
            series[0].1.push((v, report.natural_acc));
            for (k, e) in report.robust.iter().enumerate() {
                series[k + 1].1.push((v, e.accuracy));
            }
        }
        art.put(format!("sweep_{name}.csv"), table.as_bytes()).stage("write")?;
        art.put(format!("sweep_{name}.svg"), line_plot_svg(&format!("accuracy vs {name}"), name, &series).as_bytes())
            .stage("write")?;
    }
    Ok(())
}

fn cmd_gradcheck(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<bool> {
    let report = run_gradcheck(GRADCHECK_CASES, cfg.train.seed, GRADCHECK_TOLERANCE)?;
    let mut csv = String::from("case,sizes,composition,max_rel_error\n");
    for (i, c) in report.cases.iter().enumerate() {
        let sizes: Vec<String> = c.sizes.iter().map(ToString::to_string).collect();
        csv.push_str(&format!("{i},{},{},{}\n", sizes.join("-"), c.composition.as_str(), c.max_rel_error));
    }
    art.put("gradcheck.csv", csv.as_bytes())?;
    Ok(report.passed())
}
