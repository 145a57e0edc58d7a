//! `jure` command-line tool.
//!
//! Every configuration key is also a flag (`mask_p` becomes `--mask-p`).
//! Values are resolved as defaults, then `--config` file, then flags.

use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use jure::config::{AblationVariant, RunConfig, SweepAxis, KEYS, TOOL_VERSION};
use jure::pipeline::{self, CommandOutput};
use jure::{Error, Result};

fn help(key: &str) -> &'static str {
    match key {
        "seed" => "master seed for initialization, shuffling, corruption and synthetic data",
        "sigma" => "std of the Gaussian training corruption",
        "mask_p" => "probability of zeroing a whole channel of a training window",
        "lambda_diff" => "weight of the first-difference term in the training loss",
        "lr" => "AdamW learning rate",
        "weight_decay" => "AdamW decoupled weight decay",
        "batch_size" => "windows per optimizer step",
        "max_epochs" => "upper bound on training epochs",
        "patience" => "epochs without validation improvement before stopping",
        "val_fraction" => "fraction of (chronologically last) windows held out",
        "train_stride" => "window stride when training",
        "w_amp" => "weight of the amplitude term",
        "w_diff" => "weight of the first-difference term",
        "w_trend" => "weight of the moving-average trend term",
        "w_corr" => "weight of the cross-channel correlation term",
        "trend_window" => "moving-average length of the trend term",
        "window" => "window length W",
        "hidden" => "hidden width H",
        "kernel" => "depthwise kernel size K (odd)",
        "n_blocks" => "number of residual blocks",
        "zero_init" => "zero-initialize the output projection (true|false)",
        "stride" => "window stride when scoring",
        "aggregation" => "window-to-point aggregation (mean|max)",
        "vus_buffers" => "comma-separated buffer lengths for VUS",
        "ucr" => "also report the UCR score (true|false)",
        "train_file" => "training CSV",
        "test_file" => "test CSV (labels needed for eval)",
        "scores_file" => "score CSV written by score and read by eval",
        "checkpoint" => "checkpoint path",
        "out_dir" => "directory for reports and default artifact paths",
        "has_header" => "CSV files start with a header row (true|false)",
        "label_column" => "label column name or index, or none",
        "synthetic" => "generated inputs instead of files: kind list or `suite`",
        "variant" => "ablation variant applied to the run, or none",
        _ => "",
    }
}

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("`key = value` file; flags override it"),
    );
    KEYS.iter().fold(cmd, |cmd, key| {
        cmd.arg(
            Arg::new(*key)
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .help(help(key)),
        )
    })
}

fn cli() -> Command {
    let sub =
        |name: &'static str, about: &'static str| config_args(Command::new(name).about(about));
    Command::new("jure")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Denoise-and-repair anomaly detection for multivariate time series")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub(
            "train",
            "train a model and write its checkpoint and report",
        ))
        .subcommand(sub(
            "score",
            "write per-timestep anomaly scores for the test series",
        ))
        .subcommand(sub(
            "eval",
            "compute metrics of a score file against labels",
        ))
        .subcommand(
            sub(
                "ablate",
                "compare the full model with single-change variants",
            )
            .arg(
                Arg::new("variants")
                    .long("variants")
                    .value_name("LIST")
                    .help("comma-separated variant names (default: all)"),
            ),
        )
        .subcommand(
            sub("sweep", "evaluate one hyperparameter over a list of values")
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .value_name("AXIS")
                        .help("sigma, lambda_diff, w_diff, w_trend or w_corr"),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_name("LIST")
                        .help("comma-separated numeric values"),
                ),
        )
}

fn resolve_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {path}: {e}")))?;
        cfg.apply_text(&text)
            .map_err(|e| Error::Config(format!("{path}: {e}")))?;
    }
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn list<T: std::str::FromStr<Err = Error>>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn numbers(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("sweep value {s:?} is not a number")))
        })
        .collect()
}

fn dispatch(name: &str, m: &ArgMatches) -> Result<CommandOutput> {
    let cfg = resolve_config(m)?;
    match name {
        "train" => pipeline::cmd_train(&cfg),
        "score" => pipeline::cmd_score(&cfg),
        "eval" => pipeline::cmd_eval(&cfg),
        "ablate" => {
            let variants = match m.get_one::<String>("variants") {
                Some(v) => list::<AblationVariant>(v)?,
                None => AblationVariant::ALL.to_vec(),
            };
            pipeline::cmd_ablate(&cfg, &variants)
        }
        "sweep" => {
            let axis: SweepAxis = m.get_one::<String>("axis").unwrap().parse()?;
            let values = numbers(m.get_one::<String>("values").unwrap())?;
            pipeline::cmd_sweep(&cfg, axis, &values)
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match dispatch(name, sub) {
        Ok(out) => {
            for note in &out.notes {
                eprintln!("{note}");
            }
            for path in &out.artifacts {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{TOOL_VERSION}: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
