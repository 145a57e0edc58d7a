//! Run configuration: defaults, `key = value` files, ablation variants and
//! sweep axes.

use std::fmt::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{Aggregation, AnomalyKind, CsvOptions, LabelColumn};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_VUS_BUFFERS;
use crate::model::OutputInit;
use crate::scoring::ScoreWeights;
use crate::training::{ModelConfig, TrainConfig};

pub const TOOL_VERSION: &str = concat!("jure ", env!("CARGO_PKG_VERSION"));

/// Everything a command needs. Keys in files and on the command line use the
/// field names; `-` and `_` are interchangeable.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub weights: ScoreWeights,
    pub window: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub n_blocks: usize,
    pub zero_init: bool,
    /// Window stride at inference time.
    pub stride: usize,
    pub aggregation: Aggregation,
    pub vus_buffers: Vec<usize>,
    pub ucr: bool,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub scores_file: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub has_header: bool,
    pub label_column: Option<LabelColumn>,
    /// Generated series used instead of files; empty means read files.
    pub synthetic: Vec<AnomalyKind>,
    pub variant: Option<AblationVariant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            weights: ScoreWeights::default(),
            window: 100,
            hidden: 128,
            kernel: 5,
            n_blocks: 1,
            zero_init: true,
            stride: 1,
            aggregation: Aggregation::Mean,
            vus_buffers: DEFAULT_VUS_BUFFERS.to_vec(),
            ucr: false,
            train_file: None,
            test_file: None,
            scores_file: None,
            checkpoint: None,
            out_dir: PathBuf::from("."),
            has_header: true,
            label_column: Some(LabelColumn::Name("label".into())),
            synthetic: Vec::new(),
            variant: None,
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "sigma",
    "mask_p",
    "lambda_diff",
    "lr",
    "weight_decay",
    "batch_size",
    "max_epochs",
    "patience",
    "val_fraction",
    "train_stride",
    "w_amp",
    "w_diff",
    "w_trend",
    "w_corr",
    "trend_window",
    "window",
    "hidden",
    "kernel",
    "n_blocks",
    "zero_init",
    "stride",
    "aggregation",
    "vus_buffers",
    "ucr",
    "train_file",
    "test_file",
    "scores_file",
    "checkpoint",
    "out_dir",
    "has_header",
    "label_column",
    "synthetic",
    "variant",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        let t = &mut self.train;
        let w = &mut self.weights;
        match k {
            "seed" => t.seed = parse(k, value)?,
            "sigma" => t.sigma = parse(k, value)?,
            "mask_p" => t.mask_p = parse(k, value)?,
            "lambda_diff" => t.lambda_diff = parse(k, value)?,
            "lr" => t.lr = parse(k, value)?,
            "weight_decay" => t.weight_decay = parse(k, value)?,
            "batch_size" => t.batch_size = parse(k, value)?,
            "max_epochs" => t.max_epochs = parse(k, value)?,
            "patience" => t.patience = parse(k, value)?,
            "val_fraction" => t.val_fraction = parse(k, value)?,
            "train_stride" => t.train_stride = parse(k, value)?,
            "w_amp" => w.w_amp = parse(k, value)?,
            "w_diff" => w.w_diff = parse(k, value)?,
            "w_trend" => w.w_trend = parse(k, value)?,
            "w_corr" => w.w_corr = parse(k, value)?,
            "trend_window" => w.trend_window = parse(k, value)?,
            "window" => self.window = parse(k, value)?,
            "hidden" => self.hidden = parse(k, value)?,
            "kernel" => self.kernel = parse(k, value)?,
            "n_blocks" => self.n_blocks = parse(k, value)?,
            "zero_init" => self.zero_init = parse_bool(k, value)?,
            "stride" => self.stride = parse(k, value)?,
            "aggregation" => self.aggregation = value.parse()?,
            "vus_buffers" => self.vus_buffers = parse_list(k, value)?,
            "ucr" => self.ucr = parse_bool(k, value)?,
            "train_file" => self.train_file = opt_path(value),
            "test_file" => self.test_file = opt_path(value),
            "scores_file" => self.scores_file = opt_path(value),
            "checkpoint" => self.checkpoint = opt_path(value),
            "out_dir" => self.out_dir = PathBuf::from(if value.is_empty() { "." } else { value }),
            "has_header" => self.has_header = parse_bool(k, value)?,
            "label_column" => {
                self.label_column = match value {
                    "" | "none" => None,
                    v => v.parse().ok(),
                }
            }
            "synthetic" => {
                self.synthetic = if value == "suite" {
                    AnomalyKind::TYPOLOGY.to_vec()
                } else {
                    parse_list(k, value)?
                }
            }
            "variant" => {
                self.variant = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?}; valid keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Textual value of one key, as [`RunConfig::set`] accepts it.
    pub fn get(&self, key: &str) -> Result<String> {
        let t = &self.train;
        let w = &self.weights;
        Ok(match key.replace('-', "_").as_str() {
            "seed" => t.seed.to_string(),
            "sigma" => t.sigma.to_string(),
            "mask_p" => t.mask_p.to_string(),
            "lambda_diff" => t.lambda_diff.to_string(),
            "lr" => t.lr.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "max_epochs" => t.max_epochs.to_string(),
            "patience" => t.patience.to_string(),
            "val_fraction" => t.val_fraction.to_string(),
            "train_stride" => t.train_stride.to_string(),
            "w_amp" => w.w_amp.to_string(),
            "w_diff" => w.w_diff.to_string(),
            "w_trend" => w.w_trend.to_string(),
            "w_corr" => w.w_corr.to_string(),
            "trend_window" => w.trend_window.to_string(),
            "window" => self.window.to_string(),
            "hidden" => self.hidden.to_string(),
            "kernel" => self.kernel.to_string(),
            "n_blocks" => self.n_blocks.to_string(),
            "zero_init" => self.zero_init.to_string(),
            "stride" => self.stride.to_string(),
            "aggregation" => self.aggregation.to_string(),
            "vus_buffers" => join(&self.vus_buffers),
            "ucr" => self.ucr.to_string(),
            "train_file" => show_path(&self.train_file),
            "test_file" => show_path(&self.test_file),
            "scores_file" => show_path(&self.scores_file),
            "checkpoint" => show_path(&self.checkpoint),
            "out_dir" => self.out_dir.display().to_string(),
            "has_header" => self.has_header.to_string(),
            "label_column" => match &self.label_column {
                None => "none".into(),
                Some(LabelColumn::Name(n)) => n.clone(),
                Some(LabelColumn::Index(i)) => i.to_string(),
            },
            "synthetic" => {
                let names: Vec<&str> = self.synthetic.iter().map(|k| k.name()).collect();
                names.join(",")
            }
            "variant" => self.variant.map_or("none".into(), |v| v.name().into()),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        })
    }

    /// Applies `key = value` lines; `#` starts a comment, blank lines are
    /// skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    i + 1
                ))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("listed key"));
        }
        out
    }

    /// Tool version followed by the resolved configuration.
    pub fn provenance(&self) -> String {
        format!("tool = {TOOL_VERSION}\n{}", self.to_text())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.weights.validate()?;
        self.dims(1).validate()?;
        if self.window < 2 || self.stride == 0 {
            return Err(Error::Config(format!(
                "window must be >= 2 and stride >= 1 (window {}, stride {})",
                self.window, self.stride
            )));
        }
        if self.vus_buffers.is_empty() {
            return Err(Error::Config("vus_buffers must not be empty".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            kernel: self.kernel,
            n_blocks: self.n_blocks,
            output_init: if self.zero_init {
                OutputInit::Zero
            } else {
                OutputInit::FanIn
            },
        }
    }

    pub fn dims(&self, channels: usize) -> crate::model::NetDims {
        self.model().dims(channels)
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            has_header: self.has_header,
            label_column: self.label_column.clone(),
        }
    }

    /// Copy with `variant` applied.
    pub fn with_variant(&self, variant: AblationVariant) -> Self {
        let mut c = self.clone();
        variant.apply(&mut c);
        c.variant = Some(variant);
        c
    }
}

/// Single-change versions of the default pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationVariant {
    AmpOnly,
    NoCorrTerm,
    NoDiffTerm,
    NoNoise,
    NoMask,
    NoDiffLoss,
    TwoBlocks,
    NoZeroInit,
    H8,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 9] = [
        AblationVariant::NoNoise,
        AblationVariant::TwoBlocks,
        AblationVariant::H8,
        AblationVariant::NoZeroInit,
        AblationVariant::AmpOnly,
        AblationVariant::NoCorrTerm,
        AblationVariant::NoDiffTerm,
        AblationVariant::NoMask,
        AblationVariant::NoDiffLoss,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::AmpOnly => "amp_only",
            AblationVariant::NoCorrTerm => "no_corr_term",
            AblationVariant::NoDiffTerm => "no_diff_term",
            AblationVariant::NoNoise => "no_noise",
            AblationVariant::NoMask => "no_mask",
            AblationVariant::NoDiffLoss => "no_diff_loss",
            AblationVariant::TwoBlocks => "two_blocks",
            AblationVariant::NoZeroInit => "no_zero_init",
            AblationVariant::H8 => "h8",
        }
    }

    pub fn apply(&self, c: &mut RunConfig) {
        match self {
            AblationVariant::AmpOnly => {
                c.weights = ScoreWeights {
                    trend_window: c.weights.trend_window,
                    ..ScoreWeights::amplitude_only()
                }
            }
            AblationVariant::NoCorrTerm => c.weights.w_corr = 0.0,
            AblationVariant::NoDiffTerm => c.weights.w_diff = 0.0,
            AblationVariant::NoNoise => c.train.sigma = 0.0,
            AblationVariant::NoMask => c.train.mask_p = 0.0,
            AblationVariant::NoDiffLoss => c.train.lambda_diff = 0.0,
            AblationVariant::TwoBlocks => c.n_blocks = 2,
            AblationVariant::NoZeroInit => c.zero_init = false,
            AblationVariant::H8 => c.hidden = 8,
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = AblationVariant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown ablation variant {s:?}; valid: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Hyperparameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Sigma,
    LambdaDiff,
    WDiff,
    WTrend,
    WCorr,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        SweepAxis::Sigma,
        SweepAxis::LambdaDiff,
        SweepAxis::WDiff,
        SweepAxis::WTrend,
        SweepAxis::WCorr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::LambdaDiff => "lambda_diff",
            SweepAxis::WDiff => "w_diff",
            SweepAxis::WTrend => "w_trend",
            SweepAxis::WCorr => "w_corr",
        }
    }

    /// Copy of `c` with this axis set to `value`.
    pub fn apply(&self, c: &RunConfig, value: f64) -> RunConfig {
        let mut c = c.clone();
        match self {
            SweepAxis::Sigma => c.train.sigma = value,
            SweepAxis::LambdaDiff => c.train.lambda_diff = value,
            SweepAxis::WDiff => c.weights.w_diff = value,
            SweepAxis::WTrend => c.weights.w_trend = value,
            SweepAxis::WCorr => c.weights.w_corr = value,
        }
        c
    }

    /// Whether changing this axis requires retraining.
    pub fn affects_training(&self) -> bool {
        matches!(self, SweepAxis::Sigma | SweepAxis::LambdaDiff)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sweep axis {s:?}; valid: sigma, lambda_diff, w_diff, w_trend, w_corr"
                ))
            })
    }
}
