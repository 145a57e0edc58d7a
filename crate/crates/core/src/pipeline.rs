//! End-to-end commands: train, score, evaluate, ablate, sweep.
//!
//! Inputs are either one train/test file pair or a list of synthetic kinds.
//! With a single input, artifacts go to the configured paths (or fixed names
//! under `out_dir`); with several, each series gets `<out_dir>/<name>.*`.
//! Every artifact starts with `#` lines holding the tool version and the
//! resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::config::{AblationVariant, RunConfig, SweepAxis};
use crate::data::{
    apply_normalize, fit_normalize, generate_synthetic, load_csv, read_scores_csv,
    write_scores_csv, SyntheticSpec, TimeSeries, WindowIndex,
};
use crate::error::{Error, Result};
use crate::eval::{MetricReport, SeriesMetrics};
use crate::inference::{fit_score_stats, point_scores};
use crate::training::{train, TrainReport};

/// One named input: the series to train on and the series to score.
#[derive(Debug, Clone)]
pub struct Input {
    pub name: String,
    pub train: Option<TimeSeries>,
    pub test: Option<TimeSeries>,
}

/// What a command wrote, plus informational lines for the error stream.
#[derive(Debug, Default, Clone)]
pub struct CommandOutput {
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// `cfg` with its ablation variant (if any) applied.
pub fn resolve(cfg: &RunConfig) -> Result<RunConfig> {
    let c = match cfg.variant {
        Some(v) => cfg.with_variant(v),
        None => cfg.clone(),
    };
    c.validate()?;
    Ok(c)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into())
}

/// Loads the inputs a command needs. Synthetic kinds are generated from the
/// configured seed; otherwise the train and/or test files are read.
pub fn load_inputs(cfg: &RunConfig, need_train: bool, need_test: bool) -> Result<Vec<Input>> {
    if !cfg.synthetic.is_empty() {
        return cfg
            .synthetic
            .iter()
            .map(|&kind| {
                let (train, test) = generate_synthetic(&SyntheticSpec::new(kind), cfg.train.seed)?;
                Ok(Input {
                    name: kind.name().into(),
                    train: Some(train),
                    test: Some(test),
                })
            })
            .collect();
    }
    let opts = cfg.csv_options();
    let read = |needed: bool, path: &Option<PathBuf>, key: &str| -> Result<Option<TimeSeries>> {
        match (needed, path) {
            (false, _) => Ok(None),
            (true, Some(p)) => load_csv(p, &opts).map(Some),
            (true, None) => Err(Error::Config(format!("no input: set {key} or synthetic"))),
        }
    };
    let train = read(need_train, &cfg.train_file, "train_file")?;
    let test = read(need_test, &cfg.test_file, "test_file")?;
    let name = cfg
        .test_file
        .as_deref()
        .or(cfg.train_file.as_deref())
        .map(stem)
        .unwrap_or_else(|| "series".into());
    Ok(vec![Input { name, train, test }])
}

fn artifact(
    explicit: &Option<PathBuf>,
    key: &str,
    cfg: &RunConfig,
    name: &str,
    n_inputs: usize,
    single: &str,
    suffix: &str,
) -> Result<PathBuf> {
    match (explicit, n_inputs) {
        (Some(p), 1) => Ok(p.clone()),
        (Some(_), _) => Err(Error::Config(format!(
            "{key} names one file but there are {n_inputs} inputs; leave it unset"
        ))),
        (None, 1) => Ok(cfg.out_dir.join(single)),
        (None, _) => Ok(cfg.out_dir.join(format!("{name}.{suffix}"))),
    }
}

pub fn checkpoint_path(cfg: &RunConfig, name: &str, n_inputs: usize) -> Result<PathBuf> {
    artifact(
        &cfg.checkpoint,
        "checkpoint",
        cfg,
        name,
        n_inputs,
        "model.jure",
        "jure",
    )
}

pub fn scores_path(cfg: &RunConfig, name: &str, n_inputs: usize) -> Result<PathBuf> {
    artifact(
        &cfg.scores_file,
        "scores_file",
        cfg,
        name,
        n_inputs,
        "scores.csv",
        "scores.csv",
    )
}

/// Trained model and its report.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Normalizes `train`, fits the network and the score statistics.
pub fn fit(cfg: &RunConfig, train_series: &TimeSeries) -> Result<Fitted> {
    let norm = fit_normalize(train_series)?;
    let series = apply_normalize(train_series, &norm)?;
    let out = train(&series, &cfg.model(), cfg.window, &cfg.weights, &cfg.train)?;
    Ok(Fitted {
        checkpoint: Checkpoint {
            net: out.net,
            norm,
            score_stats: out.score_stats,
            metadata: cfg.provenance(),
        },
        report: out.report,
    })
}

/// Point-level z-scores of `test` under `cfg`'s window, stride, weights and
/// aggregation. No randomness is consumed.
pub fn score(ckpt: &Checkpoint, cfg: &RunConfig, test: &TimeSeries) -> Result<Vec<f64>> {
    if test.channels() != ckpt.norm.channels() {
        return Err(Error::Config(format!(
            "test series has {} channels but the checkpoint was trained on {}",
            test.channels(),
            ckpt.norm.channels()
        )));
    }
    let series = apply_normalize(test, &ckpt.norm)?;
    point_scores(
        &ckpt.net,
        &series,
        cfg.window,
        cfg.stride,
        &cfg.weights,
        &ckpt.score_stats,
        cfg.aggregation,
    )
}

/// Same network, different scoring weights: recomputes the score statistics
/// on the training series so the z-scores stay calibrated.
pub fn reweight(
    ckpt: &Checkpoint,
    cfg: &RunConfig,
    train_series: &TimeSeries,
) -> Result<Checkpoint> {
    let series = apply_normalize(train_series, &ckpt.norm)?;
    let score_stats = fit_score_stats(
        &ckpt.net,
        &series,
        cfg.window,
        cfg.train.train_stride,
        &cfg.weights,
        cfg.train.batch_size,
    )?;
    Ok(Checkpoint {
        score_stats,
        metadata: cfg.provenance(),
        ..ckpt.clone()
    })
}

/// Configuration recorded in a checkpoint's metadata.
pub fn checkpoint_config(ckpt: &Checkpoint) -> Result<RunConfig> {
    let body: String = ckpt
        .metadata
        .lines()
        .filter(|l| !l.trim_start().starts_with("tool"))
        .map(|l| format!("{l}\n"))
        .collect();
    RunConfig::from_text(&body)
        .map_err(|e| Error::Config(format!("checkpoint metadata is not a configuration: {e}")))
}

/// Scoring configuration: window and weights come from training, inference
/// and path settings from `user`.
pub fn scoring_config(user: &RunConfig, trained: &RunConfig) -> RunConfig {
    RunConfig {
        stride: user.stride,
        aggregation: user.aggregation,
        vus_buffers: user.vus_buffers.clone(),
        ucr: user.ucr,
        train_file: user.train_file.clone(),
        test_file: user.test_file.clone(),
        scores_file: user.scores_file.clone(),
        checkpoint: user.checkpoint.clone(),
        out_dir: user.out_dir.clone(),
        has_header: user.has_header,
        label_column: user.label_column.clone(),
        synthetic: user.synthetic.clone(),
        ..trained.clone()
    }
}

/// Metrics of `scores` against the labels of `test`.
pub fn evaluate(
    cfg: &RunConfig,
    name: &str,
    scores: &[f64],
    test: &TimeSeries,
) -> Result<SeriesMetrics> {
    let labels = test
        .labels()
        .ok_or_else(|| Error::Config(format!("series {name} has no labels; set label_column")))?;
    SeriesMetrics::compute(name, scores, labels, &cfg.vus_buffers, cfg.ucr)
}

/// In-memory train, score and evaluate of every input.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub fitted: Vec<Fitted>,
    pub scores: Vec<Vec<f64>>,
    pub metrics: MetricReport,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let cfg = resolve(cfg)?;
    let inputs = load_inputs(&cfg, true, true)?;
    let mut fitted = Vec::new();
    let mut scores = Vec::new();
    let mut rows = Vec::new();
    for input in &inputs {
        let (train_s, test_s) = (input.train.as_ref().unwrap(), input.test.as_ref().unwrap());
        let f = fit(&cfg, train_s)?;
        let s = score(&f.checkpoint, &cfg, test_s)?;
        rows.push(evaluate(&cfg, &input.name, &s, test_s)?);
        fitted.push(f);
        scores.push(s);
    }
    let mut metrics = MetricReport::new(rows);
    metrics.preamble = cfg.provenance();
    Ok(RunOutcome {
        fitted,
        scores,
        metrics,
    })
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

fn write(path: PathBuf, text: &str, out: &mut CommandOutput) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    out.artifacts.push(path);
    Ok(())
}

fn comment(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

fn floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// `key = value` rendering of a training report. Wall-clock time is left
/// out so reruns produce identical files.
pub fn train_report_text(name: &str, params: usize, r: &TrainReport) -> String {
    let mut out = String::new();
    let p = format!("series.{name}");
    let _ = writeln!(out, "{p}.parameters = {params}");
    let _ = writeln!(out, "{p}.train_windows = {}", r.n_train_windows);
    let _ = writeln!(out, "{p}.val_windows = {}", r.n_val_windows);
    let _ = writeln!(out, "{p}.initial_val_loss = {:.16e}", r.initial_val_loss);
    let _ = writeln!(out, "{p}.train_loss = {}", floats(&r.train_loss));
    let _ = writeln!(out, "{p}.val_loss = {}", floats(&r.val_loss));
    let _ = writeln!(out, "{p}.best_epoch = {}", r.best_epoch);
    let _ = writeln!(out, "{p}.best_val_loss = {:.16e}", r.best_val_loss());
    let _ = writeln!(out, "{p}.stopped_epoch = {}", r.stopped_epoch);
    out
}

/// Trains one model per input and writes checkpoints plus `train_report.txt`.
/// A failed run leaves no checkpoint behind.
pub fn cmd_train(cfg: &RunConfig) -> Result<CommandOutput> {
    let cfg = resolve(cfg)?;
    let inputs = load_inputs(&cfg, true, false)?;
    prepare_out_dir(&cfg)?;
    let mut out = CommandOutput::default();
    let mut report = comment(&cfg.provenance());
    for input in &inputs {
        let started = Instant::now();
        let f = fit(&cfg, input.train.as_ref().expect("train input"))?;
        let path = checkpoint_path(&cfg, &input.name, inputs.len())?;
        f.checkpoint.save(&path)?;
        out.artifacts.push(path);
        report.push_str(&train_report_text(
            &input.name,
            f.checkpoint.net.parameter_count(),
            &f.report,
        ));
        out.notes.push(format!(
            "{}: {} epochs, best {} (val loss {:.6}), {:.1}s",
            input.name,
            f.report.stopped_epoch,
            f.report.best_epoch,
            f.report.best_val_loss(),
            started.elapsed().as_secs_f64()
        ));
    }
    write(cfg.out_dir.join("train_report.txt"), &report, &mut out)?;
    Ok(out)
}

/// Scores every test input with its checkpoint and writes one score CSV each.
/// Throughput goes to the notes, never into the artifacts.
pub fn cmd_score(cfg: &RunConfig) -> Result<CommandOutput> {
    let user = resolve(cfg)?;
    let inputs = load_inputs(&user, false, true)?;
    prepare_out_dir(&user)?;
    let mut out = CommandOutput::default();
    for input in &inputs {
        let ckpt = Checkpoint::load(checkpoint_path(&user, &input.name, inputs.len())?)?;
        let scfg = scoring_config(&user, &checkpoint_config(&ckpt)?);
        let test = input.test.as_ref().expect("test input");
        let started = Instant::now();
        let scores = score(&ckpt, &scfg, test)?;
        let secs = started.elapsed().as_secs_f64();
        let n_windows = WindowIndex::new(test.len(), scfg.window, scfg.stride)?.len();
        let path = scores_path(&user, &input.name, inputs.len())?;
        write_scores_csv(&scores, &scfg.provenance(), &path)?;
        out.artifacts.push(path);
        out.notes.push(format!(
            "{}: {n_windows} windows in {secs:.3}s ({:.0} windows/s)",
            input.name,
            n_windows as f64 / secs.max(1e-9)
        ));
    }
    Ok(out)
}

/// Reads score CSVs and labels and writes `metrics.txt` and `metrics.kv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<CommandOutput> {
    let cfg = resolve(cfg)?;
    let inputs = load_inputs(&cfg, false, true)?;
    prepare_out_dir(&cfg)?;
    let mut rows = Vec::new();
    for input in &inputs {
        let scores = read_scores_csv(scores_path(&cfg, &input.name, inputs.len())?)?;
        let test = input.test.as_ref().expect("test input");
        if scores.len() != test.len() {
            return Err(Error::Config(format!(
                "{}: {} scores but {} labeled points",
                input.name,
                scores.len(),
                test.len()
            )));
        }
        rows.push(evaluate(&cfg, &input.name, &scores, test)?);
    }
    let mut report = MetricReport::new(rows);
    report.preamble = cfg.provenance();
    let mut out = CommandOutput::default();
    write(cfg.out_dir.join("metrics.txt"), &report.to_text(), &mut out)?;
    write(cfg.out_dir.join("metrics.kv"), &report.to_kv(), &mut out)?;
    Ok(out)
}

/// Keys whose values differ between two configurations, as `key=value`.
fn config_delta(base: &RunConfig, other: &RunConfig) -> String {
    let changed: Vec<String> = crate::config::KEYS
        .iter()
        .filter(|k| **k != "variant")
        .filter_map(|k| {
            let (a, b) = (base.get(k).ok()?, other.get(k).ok()?);
            (a != b).then(|| format!("{k}={b}"))
        })
        .collect();
    if changed.is_empty() {
        "-".into()
    } else {
        changed.join(";")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or("nan".into(), |x| format!("{x}"))
}

const METRIC_HEADER: &str = "auc_pr\tauc_roc\tvus_pr\tvus_roc\tucr_score";

/// One row of an ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    /// `full` or a variant name.
    pub label: String,
    pub delta: String,
    pub metrics: MetricReport,
}

/// Runs the full model and each variant with the same seed.
pub fn ablate(cfg: &RunConfig, variants: &[AblationVariant]) -> Result<Vec<AblationRow>> {
    let base = RunConfig {
        variant: None,
        ..cfg.clone()
    };
    let mut rows = vec![AblationRow {
        label: "full".into(),
        delta: "-".into(),
        metrics: run(&base)?.metrics,
    }];
    for &v in variants {
        let c = base.with_variant(v);
        rows.push(AblationRow {
            label: v.name().into(),
            delta: config_delta(&base, &c),
            metrics: run(&c)?.metrics,
        });
    }
    Ok(rows)
}

/// Tab-separated table: mean metrics per variant plus the change in mean
/// AUC-PR against the full model.
pub fn ablation_table(cfg: &RunConfig, rows: &[AblationRow]) -> String {
    let mut out = comment(
        &RunConfig {
            variant: None,
            ..cfg.clone()
        }
        .provenance(),
    );
    let _ = writeln!(out, "variant\t{METRIC_HEADER}\tdelta_auc_pr\tchange");
    let full = rows.first().and_then(|r| r.metrics.means()[0]);
    for r in rows {
        let m = r.metrics.means();
        let cells: Vec<String> = m.iter().map(|&v| cell(v)).collect();
        let delta = match (m[0], full) {
            (Some(a), Some(b)) => format!("{}", a - b),
            _ => "nan".into(),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{delta}\t{}",
            r.label,
            cells.join("\t"),
            r.delta
        );
    }
    out
}

pub fn cmd_ablate(cfg: &RunConfig, variants: &[AblationVariant]) -> Result<CommandOutput> {
    cfg.validate()?;
    prepare_out_dir(cfg)?;
    let rows = ablate(cfg, variants)?;
    let mut out = CommandOutput::default();
    write(
        cfg.out_dir.join("ablation.tsv"),
        &ablation_table(cfg, &rows),
        &mut out,
    )?;
    Ok(out)
}

/// Metrics for each value of `axis`, all with the same seed. Axes that only
/// change scoring weights reuse one trained network per input.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<(f64, MetricReport)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if axis.affects_training() {
        return values
            .iter()
            .map(|&v| Ok((v, run(&axis.apply(cfg, v))?.metrics)))
            .collect();
    }
    let base = resolve(cfg)?;
    let inputs = load_inputs(&base, true, true)?;
    let fitted: Vec<Fitted> = inputs
        .iter()
        .map(|i| fit(&base, i.train.as_ref().unwrap()))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &v in values {
        let c = resolve(&axis.apply(&base, v))?;
        let mut series = Vec::new();
        for (input, f) in inputs.iter().zip(&fitted) {
            let ckpt = reweight(&f.checkpoint, &c, input.train.as_ref().unwrap())?;
            let test = input.test.as_ref().unwrap();
            let s = score(&ckpt, &c, test)?;
            series.push(evaluate(&c, &input.name, &s, test)?);
        }
        let mut report = MetricReport::new(series);
        report.preamble = c.provenance();
        rows.push((v, report));
    }
    Ok(rows)
}

/// Tab-separated, plot-ready: one row per value, undefined means as `nan`.
pub fn sweep_table(cfg: &RunConfig, axis: SweepAxis, rows: &[(f64, MetricReport)]) -> String {
    let mut out = comment(&cfg.provenance());
    let _ = writeln!(out, "{axis}\t{METRIC_HEADER}");
    for (v, report) in rows {
        let cells: Vec<String> = report.means().iter().map(|&m| cell(m)).collect();
        let _ = writeln!(out, "{v}\t{}", cells.join("\t"));
    }
    out
}

pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<CommandOutput> {
    cfg.validate()?;
    prepare_out_dir(cfg)?;
    let rows = sweep(cfg, axis, values)?;
    let mut out = CommandOutput::default();
    write(
        cfg.out_dir.join(format!("sweep_{axis}.tsv")),
        &sweep_table(cfg, axis, &rows),
        &mut out,
    )?;
    Ok(out)
}
