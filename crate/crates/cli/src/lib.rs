//! Argument parsing, configuration loading and exit-code mapping for the
//! `cyclesem` binary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use cyclesem_core::experiment::{self, ExperimentConfig, Method};
use cyclesem_core::Error;
use serde_json::Value;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INVALID_CONFIG: u8 = 3;
pub const EXIT_MISSING_PREREQUISITE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cyclesem", version, about = "Unsupervised anomaly segmentation by image-semantic-image cycle translation")]
pub struct Cli {
    /// JSON experiment configuration. Missing fields take their defaults.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    /// Override one configuration field, e.g. `--set seg.epochs=5`. Values
    /// are parsed as JSON and fall back to plain strings.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Output root; takes precedence over `output_dir` in the configuration.
    #[arg(long, global = true, env = "CYCLESEM_OUT")]
    pub out: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the phantom training and test splits.
    GenData,
    /// Train the tissue segmentor.
    TrainSeg,
    /// Train the generator and discriminator.
    TrainSynth,
    /// Train the autoencoder baseline.
    TrainAe,
    /// Compute residual maps for every test split.
    Infer {
        /// cycle_continuous, cycle_discrete or ae. Defaults to the cycle
        /// with the configured semantic mode.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Score residual maps with AUPRC and best DICE.
    Eval {
        #[arg(long)]
        method: Option<Method>,
    },
    /// Continuous vs discrete intermediate on shared checkpoints.
    Ablation,
    /// Summary CSV and figure grids from existing results.
    Report,
    /// Print the resolved configuration as JSON.
    ShowConfig,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig { .. } => EXIT_INVALID_CONFIG,
            Error::MissingArtifact(_) | Error::MissingFile(_) | Error::UnknownSplit { .. } => {
                EXIT_MISSING_PREREQUISITE
            }
            _ => EXIT_FAILURE,
        };
        let message = match &e {
            Error::MissingArtifact(p) => format!("missing prerequisite {}; run the stage that produces it first", p.display()),
            _ => e.to_string(),
        };
        Failure { code, message }
    }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Failure {
    Error::InvalidConfig { field: field.into(), reason: reason.into() }.into()
}

/// Sets `path` (dot separated) inside `root`, creating objects on the way.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), Failure> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid("--set", format!("`{assignment}` is not of the form path=value")))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(invalid("--set", format!("bad field path `{path}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut cur = root;
    for key in path.split('.') {
        if !cur.is_object() {
            return Err(invalid(path, "parent is not an object"));
        }
        cur = cur.as_object_mut().expect("checked").entry(key).or_insert_with(|| Value::Object(Default::default()));
    }
    *cur = value;
    Ok(())
}

/// Reads the configuration file (if any), applies overrides and the output
/// root, and validates the result.
pub fn load_config(file: Option<&Path>, overrides: &[String], out: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let mut value = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                code: if e.kind() == std::io::ErrorKind::NotFound { EXIT_MISSING_PREREQUISITE } else { EXIT_FAILURE },
                message: format!("cannot read config {}: {e}", path.display()),
            })?;
            serde_json::from_str(&text).map_err(|e| invalid("<config>", format!("not valid JSON: {e}")))?
        }
        None => Value::Object(Default::default()),
    };
    if !value.is_object() {
        return Err(invalid("<config>", "top level must be a JSON object"));
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        invalid(if field == "." { "<config>".to_owned() } else { field }, e.into_inner().to_string())
    })?;
    if let Some(out) = out {
        cfg.output_dir = out.to_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed invocation, returning the lines to print on success.
pub fn run(cli: &Cli) -> Result<Vec<String>, Failure> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides, cli.out.as_deref())?;
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    let default_method = Method::cycle(cfg.semantic_mode);
    let losses = |name: &str, l: Vec<cyclesem_core::train::EpochLoss>| -> Vec<String> {
        l.iter()
            .map(|e| {
                let vals: Vec<String> = e.values.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
                format!("{name} epoch {}: {}", e.epoch + 1, vals.join(" "))
            })
            .collect()
    };
    let reports = |r: Vec<cyclesem_core::EvalReport>| -> Vec<String> {
        std::iter::once(cyclesem_core::EvalReport::CSV_HEADER.to_owned()).chain(r.iter().map(|r| r.csv_row())).collect()
    };
    Ok(match &cli.command {
        Command::GenData => {
            experiment::gen_data(&cfg)?;
            vec![format!("wrote {}", cfg.layout().data().display())]
        }
        Command::TrainSeg => losses("segmentor", experiment::train_seg(&cfg)?),
        Command::TrainSynth => losses("synthesizer", experiment::train_synth(&cfg)?),
        Command::TrainAe => losses("autoencoder", experiment::train_baseline(&cfg)?),
        Command::Infer { method } => experiment::infer(&cfg, method.unwrap_or(default_method))?
            .into_iter()
            .map(|p| format!("wrote {}", p.display()))
            .collect(),
        Command::Eval { method } => reports(experiment::eval(&cfg, method.unwrap_or(default_method))?),
        Command::Ablation => {
            let r = experiment::ablation(&cfg)?;
            std::iter::once(experiment::ABLATION_CSV_HEADER.to_owned())
                .chain(r.iter().zip(["continuous", "discrete"]).map(|(r, m)| format!("{m},{:.6},{:.6}", r.auprc, r.best_dice)))
                .collect()
        }
        Command::Report => vec![format!("wrote {}", experiment::report(&cfg)?.display())],
        Command::ShowConfig => vec![serde_json::to_string_pretty(&cfg).expect("config serializes")],
    })
}
