//! Command-line surface.
//!
//! Every command accepts `--config <file.json>`; values given as flags win
//! over the file, which wins over the defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynsuite_core::metrics::{evaluate_model, EvalConfig, EvalDirection, MetricReport};
use dynsuite_core::models::{train, ModelClass, TrainConfig, TrainMode};
use dynsuite_core::systems::{render, SystemKind, SystemSpec, DEFAULT_FRICTION};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::{write_dataset, Dataset, Manifest, ObsShape, Split, StateOnly, FORMAT_VERSION, GENERATOR_VERSION};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "dynsuite", version, about = "Generate physical-system datasets, train latent dynamics models and score them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and render a dataset
    Generate(GenerateArgs),
    /// Train a model on a dataset
    Train(TrainArgs),
    /// Score a checkpoint on the test split
    Eval(EvalArgs),
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn parse_class(s: &str) -> Result<ModelClass, String> {
    ModelClass::from_str(s).map_err(|e| e.to_string())
}

fn parse_system(s: &str) -> Result<SystemKind, String> {
    SystemKind::from_str(s).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub system: Option<SystemKind>,
    pub colour: bool,
    pub friction: bool,
    pub num_train: usize,
    pub num_test: usize,
    pub steps: usize,
    /// Sampling interval; the system's default when absent.
    pub dt: Option<f64>,
    pub resolution: usize,
    pub state_only: bool,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            system: None,
            colour: false,
            friction: false,
            num_train: 100,
            num_test: 20,
            steps: 256,
            dt: None,
            resolution: 32,
            state_only: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_system)]
    pub system: Option<SystemKind>,
    /// Per-trajectory hues and masses
    #[arg(long)]
    pub colour: bool,
    /// Add friction with coefficient 0.05
    #[arg(long)]
    pub friction: bool,
    #[arg(long)]
    pub num_train: Option<usize>,
    #[arg(long)]
    pub num_test: Option<usize>,
    /// Stored states per trajectory
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Square image side in pixels
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Store phase-space states only
    #[arg(long)]
    pub state_only: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

impl GenerateArgs {
    pub fn resolve(&self) -> Result<GenerateConfig, CliError> {
        let mut c: GenerateConfig = read_config(self.config.as_deref())?;
        if self.system.is_some() {
            c.system = self.system;
        }
        c.colour |= self.colour;
        c.friction |= self.friction;
        c.state_only |= self.state_only;
        set(&mut c.num_train, self.num_train);
        set(&mut c.num_test, self.num_test);
        set(&mut c.steps, self.steps);
        if self.dt.is_some() {
            c.dt = self.dt;
        }
        set(&mut c.resolution, self.resolution);
        set(&mut c.seed, self.seed);
        Ok(c)
    }
}

fn check_empty_dir(path: &Path) -> Result<(), CliError> {
    match std::fs::read_dir(path) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(CliError::Config(format!(
                    "output directory {} is not empty",
                    path.display()
                )));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
        }
        Err(e) => Err(CliError::io(path, e)),
    }
}

/// Writes a dataset and returns its manifest.
pub fn cmd_generate(args: &GenerateArgs) -> Result<Manifest, CliError> {
    let c = args.resolve()?;
    let kind = c
        .system
        .ok_or_else(|| CliError::Config("--system is required".into()))?;
    let friction = if c.friction { DEFAULT_FRICTION } else { 0.0 };
    let system = SystemSpec::new(kind).with_colour(c.colour).with_friction(friction);
    system.validate()?;
    if c.steps == 0 {
        return Err(CliError::Config("--steps must be positive".into()));
    }
    let dt = c.dt.unwrap_or(kind.default_dt());
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::Config(format!("--dt {dt} must be positive")));
    }
    let obs_shape = if c.state_only {
        ObsShape::StateOnly(StateOnly::StateOnly)
    } else {
        if kind.is_camera() {
            return Err(CliError::Config(format!("{kind} has no rendered observations; pass --state-only")));
        }
        if c.resolution == 0 {
            return Err(CliError::Config("--resolution must be positive".into()));
        }
        ObsShape::Image([c.resolution, c.resolution, render::channels(&system)])
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        system,
        dt,
        n_train: c.num_train,
        n_test: c.num_test,
        steps_per_trajectory: c.steps,
        obs_shape,
        global_seed: c.seed,
        generator_version: GENERATOR_VERSION.to_string(),
    };
    check_empty_dir(&args.out)?;
    write_dataset(&manifest, &args.out)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    State,
    Pixel,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::State => TrainMode::State,
            ModeArg::Pixel => TrainMode::Pixel,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// hgn, lgn, node, node_tr, rgn or rgn_res
    #[arg(long, value_parser = parse_class)]
    pub model: Option<ModelClass>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Conditioning frames
    #[arg(long)]
    pub window: Option<usize>,
    /// Rolled-out frames per training sequence
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Use only the first N training trajectories
    #[arg(long)]
    pub num_train: Option<usize>,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint path; the loss curve goes next to it as `.loss.csv`
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut c: TrainConfig = read_config(self.config.as_deref())?;
        set(&mut c.class, self.model);
        set(&mut c.mode, self.mode.map(TrainMode::from));
        set(&mut c.steps, self.steps);
        set(&mut c.batch, self.batch);
        set(&mut c.lr, self.lr);
        set(&mut c.beta, self.beta);
        set(&mut c.seed, self.seed);
        set(&mut c.window, self.window);
        set(&mut c.horizon, self.horizon);
        set(&mut c.hidden, self.hidden);
        set(&mut c.depth, self.depth);
        if self.latent_dim.is_some() {
            c.latent_dim = self.latent_dim;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

pub fn loss_csv_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".loss.csv");
    checkpoint.with_file_name(name)
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary, CliError> {
    let config = args.resolve()?;
    let dataset = Dataset::open(&args.dataset)?;
    if config.mode == TrainMode::Pixel && dataset.manifest.obs_shape.dims().is_none() {
        return Err(CliError::Config(format!(
            "pixel mode needs rendered frames, but {} was generated with --state-only",
            args.dataset.display()
        )));
    }
    let need = config.window + config.horizon;
    if dataset.manifest.steps_per_trajectory < need {
        return Err(CliError::Config(format!(
            "a window of {} plus horizon {} needs {need} steps per trajectory, the dataset has {}",
            config.window, config.horizon, dataset.manifest.steps_per_trajectory
        )));
    }
    let data = dataset.load(Split::Train, args.num_train)?;
    let outcome = train(&config, &data)?;

    let ckpt = Checkpoint {
        model: outcome.model,
        config: Some(config),
    };
    ckpt.write(&args.out)?;
    let log = &outcome.log;
    let mut csv = String::from("step,loss,recon,kl\n");
    for k in 0..log.loss.len() {
        writeln!(csv, "{},{},{},{}", k + 1, log.loss[k], log.recon[k], log.kl[k]).expect("string write");
    }
    let loss_csv = loss_csv_path(&args.out);
    std::fs::write(&loss_csv, csv).map_err(|e| CliError::io(&loss_csv, e))?;
    Ok(TrainSummary {
        checkpoint: args.out.clone(),
        loss_csv,
        initial_loss: log.loss.first().copied(),
        final_loss: log.loss.last().copied(),
    })
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Forward,
    Backward,
    Both,
}

impl From<DirectionArg> for EvalDirection {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Forward => EvalDirection::Forward,
            DirectionArg::Backward => EvalDirection::Backward,
            DirectionArg::Both => EvalDirection::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalFileConfig {
    n_traj: usize,
    horizon: usize,
    eps: f64,
    direction: EvalDirection,
}

impl Default for EvalFileConfig {
    fn default() -> Self {
        let d = EvalConfig::default();
        EvalFileConfig {
            n_traj: d.n_traj,
            horizon: d.horizon,
            eps: d.eps,
            direction: d.direction,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Error threshold; `inf` accepts every prediction
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Also write the JSON report here
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-step normalised errors as CSV
    #[arg(long)]
    pub errors_csv: Option<PathBuf>,
}

impl EvalArgs {
    pub fn resolve(&self) -> Result<EvalConfig, CliError> {
        let mut c: EvalFileConfig = read_config(self.config.as_deref())?;
        set(&mut c.n_traj, self.n_traj);
        set(&mut c.horizon, self.horizon);
        set(&mut c.eps, self.eps);
        set(&mut c.direction, self.direction.map(EvalDirection::from));
        Ok(EvalConfig {
            n_traj: c.n_traj,
            horizon: c.horizon,
            eps: c.eps,
            direction: c.direction,
        })
    }
}

/// The JSON document `eval` prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub format_version: u32,
    pub model: ModelClass,
    pub mode: TrainMode,
    pub system: SystemKind,
    pub direction: EvalDirection,
    #[serde(flatten)]
    pub report: MetricReport,
}

impl EvalOutput {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalOutput, CliError> {
    let config = args.resolve()?;
    let ckpt = Checkpoint::read(&args.checkpoint)?;
    let dataset = Dataset::open(&args.dataset)?;
    let model = &ckpt.model;
    if model.mode == TrainMode::Pixel {
        let dims = dataset.manifest.obs_shape.dims();
        let heads = model.heads.as_ref().expect("validated pixel model has heads");
        if dims != Some(heads.obs_shape) {
            return Err(CliError::Config(format!(
                "the checkpoint decodes {:?} frames but the dataset holds {:?}",
                heads.obs_shape, dataset.manifest.obs_shape
            )));
        }
    }
    if config.n_traj == 0 {
        return Err(CliError::Config("--n-traj must be positive".into()));
    }
    if config.horizon > dataset.manifest.steps_per_trajectory {
        return Err(CliError::Config(format!(
            "horizon {} exceeds the {} stored steps per trajectory",
            config.horizon, dataset.manifest.steps_per_trajectory
        )));
    }
    let n = config.n_traj.min(dataset.manifest.n_test);
    let data = dataset.load(Split::Test, Some(n))?;
    let eval = evaluate_model(model, &data, &config)?;

    let output = EvalOutput {
        format_version: FORMAT_VERSION,
        model: model.dynamics.class,
        mode: model.mode,
        system: dataset.manifest.system.kind,
        direction: config.direction,
        report: eval.report,
    };
    if let Some(path) = &args.out {
        let mut text = output.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &args.errors_csv {
        let mut csv = String::from("trajectory,direction,step,error\n");
        for (i, m) in eval.per_trajectory.iter().enumerate() {
            for (dir, errors) in [("forward", &m.forward_errors), ("backward", &m.backward_errors)] {
                for (t, e) in errors.iter().enumerate() {
                    writeln!(csv, "{i},{dir},{t},{e}").expect("string write");
                }
            }
        }
        std::fs::write(path, csv).map_err(|e| CliError::io(path, e))?;
    }
    Ok(output)
}
