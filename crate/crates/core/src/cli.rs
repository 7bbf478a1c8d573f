//! Command-line surface: argument types and one function per subcommand.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::dataset::{forward_candidate, generate, ForwardConfig, GridConfig, Outcome, Sample};
use crate::error::IoError;
use crate::inverse::{InverseConfig, InverseDesigner, InverseError};
use crate::io::{
    export_csv, read_manifest, read_predictions, read_samples, read_waypoints, write_json_pretty, write_manifest,
    write_samples, SampleRecord,
};
use crate::metrics::{evaluate, EvalRecord};
use crate::normalize::{normalize_dataset, C99Choice};
use crate::solver::SolverConfig;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GATE_REPORT_FILE: &str = "gate_report.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "bennett",
    version,
    about = "Bennett 4R linkage dataset generation and inverse design"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep a parameter grid and write the accepted samples.
    Gen(GenArgs),
    /// Split a dataset and apply the two-stage coordinate normalization.
    Normalize(NormalizeArgs),
    /// Run one parameter pair through the forward pipeline.
    Forward(ForwardArgs),
    /// Recover link parameters from three waypoints.
    Inverse(InverseArgs),
    /// Score predictions against a dataset.
    Eval(EvalArgs),
    /// Write one sample's trajectory as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Drive-angle frames per revolution.
    #[arg(long, default_value_t = 360)]
    pub frames: usize,
    /// Low-pass cutoff harmonic.
    #[arg(long, default_value_t = 72)]
    pub fc: usize,
    /// Closure residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Minimum converged-frame fraction.
    #[arg(long, default_value_t = 0.8)]
    pub gate2: f64,
}

impl PipelineArgs {
    pub fn forward_config(&self) -> ForwardConfig {
        ForwardConfig {
            solver: SolverConfig {
                eps: self.eps,
                frames: self.frames,
                ..SolverConfig::default()
            },
            fc: self.fc,
            gate2: self.gate2,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub na: usize,
    #[arg(long)]
    pub nalpha: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (0 = all cores). Does not affect the output.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Dataset file or a directory containing dataset.jsonl.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// "auto" or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_c99)]
    pub c99: C99Choice,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a12: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha12: f64,
    /// Read --alpha12 in degrees.
    #[arg(long)]
    pub degrees: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InverseArgs {
    /// JSON array of three 7-element waypoints.
    #[arg(long)]
    pub waypoints: PathBuf,
    /// JSON inverse configuration; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the configured normalization constant.
    #[arg(long)]
    pub c99: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction JSONL.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth dataset JSONL.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Grid index as "i,j".
    #[arg(long, value_parser = parse_sample_id)]
    pub sample: (usize, usize),
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_c99(s: &str) -> Result<C99Choice, String> {
    if s == "auto" {
        return Ok(C99Choice::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(C99Choice::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a positive number, got {s:?}")),
    }
}

pub fn parse_sample_id(s: &str) -> Result<(usize, usize), String> {
    let (i, j) = s
        .split_once(',')
        .ok_or_else(|| format!("expected \"i,j\", got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(i)?, parse(j)?))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    NoSolution(InverseError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) | CliError::Data(_) => 2,
            CliError::NoSolution(_) => 3,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Normalize(a) => cmd_normalize(&a),
        Command::Forward(a) => cmd_forward(&a),
        Command::Inverse(a) => cmd_inverse(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Export(a) => cmd_export(&a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|source| file_err(parent, source))?;
            }
            fs::write(path, format!("{text}\n")).map_err(|source| file_err(path, source))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|source| file_err(Path::new("<stdout>"), source))?;
        }
    }
    Ok(())
}

fn file_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io(IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let grid = GridConfig::with_counts(args.na, args.nalpha);
    let forward = args.pipeline.forward_config();
    forward.solver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (samples, report) = generate(&grid, &forward, args.workers).map_err(|e| CliError::Usage(e.to_string()))?;
    write_samples(&args.out.join(DATASET_FILE), &samples)?;
    let manifest = crate::normalize::DatasetManifest::for_generation(&grid, &forward, report, samples.len());
    write_manifest(&args.out.join(MANIFEST_FILE), &manifest)?;
    write_json_pretty(&args.out.join(GATE_REPORT_FILE), &report)?;
    Ok(())
}

fn dataset_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join(DATASET_FILE)
    } else {
        input.to_path_buf()
    }
}

pub fn cmd_normalize(args: &NormalizeArgs) -> Result<(), CliError> {
    let data = dataset_path(&args.input);
    let samples = read_samples(&data)?;
    let manifest_path = data.with_file_name(MANIFEST_FILE);
    let mut manifest = read_manifest(&manifest_path)?;
    if manifest.normalization.is_some() {
        return Err(CliError::Data(format!("{} is already normalized", data.display())));
    }
    let normalized =
        normalize_dataset(&samples, args.split_seed, args.c99).map_err(|e| CliError::Data(e.to_string()))?;
    write_samples(&args.out.join(TRAIN_FILE), &normalized.train)?;
    write_samples(&args.out.join(TEST_FILE), &normalized.test)?;
    manifest.normalization = Some(normalized.info());
    manifest.split = Some(normalized.split.clone());
    write_manifest(&args.out.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

pub fn cmd_forward(args: &ForwardArgs) -> Result<(), CliError> {
    let alpha12 = if args.degrees {
        args.alpha12.to_radians()
    } else {
        args.alpha12
    };
    let forward = args.pipeline.forward_config();
    forward.solver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let outcome = forward_candidate(args.a12, alpha12, &forward).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = match &outcome {
        Outcome::Accepted(model) => {
            let sample = Sample::from_model((0, 0), model);
            serde_json::to_string(&SampleRecord::from(&sample)).expect("sample serializes")
        }
        Outcome::Gate1Reject { sin_alpha23 } => {
            json!({"rejected": "gate1", "a12": args.a12, "alpha12": alpha12, "sin_alpha23": sin_alpha23}).to_string()
        }
        Outcome::Gate2Reject { converged_fraction } => json!({
            "rejected": "gate2", "a12": args.a12, "alpha12": alpha12,
            "converged_fraction": converged_fraction, "threshold": forward.gate2
        })
        .to_string(),
        Outcome::Gate3Reject { jump, tau } => {
            json!({"rejected": "gate3", "a12": args.a12, "alpha12": alpha12, "jump": jump, "tau": tau}).to_string()
        }
    };
    emit(args.out.as_deref(), &text)
}

pub fn cmd_inverse(args: &InverseArgs) -> Result<(), CliError> {
    let wps = read_waypoints(&args.waypoints)?;
    let mut cfg: InverseConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| file_err(path, source))?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Io(IoError::Parse {
                    path: path.display().to_string(),
                    line: e.line(),
                    message: e.to_string(),
                })
            })?
        }
        None => InverseConfig::default(),
    };
    if let Some(c) = args.c99 {
        cfg.c99 = c;
    }
    let designer = InverseDesigner::new(cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let result = designer.solve(&wps).map_err(|e| match e {
        InverseError::InvalidConfig(m) => CliError::Usage(m),
        e @ InverseError::NoSolution { .. } => CliError::NoSolution(e),
    })?;
    let text = serde_json::to_string_pretty(&result).expect("result serializes");
    emit(args.out.as_deref(), &text)
}

/// Pair each prediction with the ground-truth sample of the same id.
pub fn match_predictions(pred: &Path, gt: &Path) -> Result<(Vec<EvalRecord>, Vec<EvalRecord>), CliError> {
    let preds = read_predictions(pred)?;
    let gts = read_samples(gt)?;
    let mut by_id: HashMap<(usize, usize), &Sample> = HashMap::with_capacity(gts.len());
    for s in &gts {
        if by_id.insert(s.grid_index, s).is_some() {
            return Err(CliError::Data(format!(
                "duplicate id {:?} in {}",
                s.grid_index,
                gt.display()
            )));
        }
    }
    let mut seen = HashMap::with_capacity(preds.len());
    let mut p_out = Vec::with_capacity(preds.len());
    let mut g_out = Vec::with_capacity(preds.len());
    for (line, p) in preds.iter().enumerate() {
        let id = (p.id[0], p.id[1]);
        let g = by_id.get(&id).ok_or_else(|| {
            CliError::Data(format!(
                "prediction {} has id {id:?}, absent from {}",
                line + 1,
                gt.display()
            ))
        })?;
        if seen.insert(id, ()).is_some() {
            return Err(CliError::Data(format!("duplicate prediction id {id:?}")));
        }
        p_out.push(p.to_eval());
        g_out.push(crate::io::sample_to_eval(g));
    }
    Ok((p_out, g_out))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (preds, gts) = match_predictions(&args.pred, &args.gt)?;
    let report = evaluate(&preds, &gts).map_err(|e| CliError::Data(e.to_string()))?;
    emit(args.out.as_deref(), &report.to_json())
}

pub fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    let samples = read_samples(&dataset_path(&args.input))?;
    let sample = samples
        .iter()
        .find(|s| s.grid_index == args.sample)
        .ok_or_else(|| CliError::Data(format!("no sample with id {:?}", args.sample)))?;
    export_csv(&args.out, sample)?;
    Ok(())
}
