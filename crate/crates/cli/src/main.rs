//! Command-line front end for the adaptive feature-masking engine.
//!
//! Each subcommand exposes one stage of the engine for standalone
//! debugging — `encode`, `prior`, `mask`, `apply`, `render`, `schedule`,
//! and `verify-bound` — while `pipeline` chains encode → prior → mask →
//! apply in one deterministic run. Tensors travel in the `.amzt` container
//! format, configuration is JSON, and everything a command prints to
//! standard output is machine-parseable JSON lines. Diagnostics go to
//! standard error; set `AMAZE_LOG` to `error`, `info`, or `debug` to
//! control their verbosity. Every failure exits nonzero with a single
//! `error: ...` line on standard error.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use amaze_core::adapter::AdapterParams;
use amaze_core::io::config::{MaskMethod, PipelineConfig};
use amaze_core::io::pgm::write_pgm;
use amaze_core::io::tensor_file::TensorFile;
use amaze_core::mask::{apply_mask, MaskMatrix};
use amaze_core::pipeline::{
    build_mask, compute_prior, load_features, mask_stats, run_pipeline, INTENSITY_ENTRY,
    MASKED_ENTRY, MASK_ENTRY, PRIOR_ENTRY,
};
use amaze_core::schedule::{scale_plan, ScheduleConfig};
use amaze_core::tensor::feature_to_tokens;
use amaze_core::theory::{binomial_slack, hoeffding_bound, monte_carlo_violation, SampleModel};
use amaze_core::{adapter::encode_tokens, SeededRng, Tensor32};

/// Container entry name for adapted tokens written by `encode`.
const TOKENS_ENTRY: &str = "tokens";
/// Output file names, one per artifact-producing subcommand.
const TOKENS_FILE: &str = "tokens.amzt";
const PRIOR_FILE: &str = "prior.amzt";
const MASK_FILE: &str = "mask.amzt";
const MASKED_FILE: &str = "masked.amzt";

/// Deterministic importance-guided masking for backbone feature maps.
#[derive(Parser)]
#[command(name = "amaze", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a feature map into adapted tokens.
    Encode {
        /// Tensor container holding a `features` entry (B x C x H x W).
        #[arg(long)]
        input: PathBuf,
        /// Directory that receives `tokens.amzt`.
        #[arg(long)]
        out: PathBuf,
        /// Adapter weight seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute the importance prior of a feature map.
    Prior {
        /// Tensor container holding a `features` entry (B x C x H x W).
        #[arg(long)]
        input: PathBuf,
        /// Directory that receives `prior.amzt`.
        #[arg(long)]
        out: PathBuf,
        /// Adapter weight seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a mask for a feature map and report per-batch counts.
    Mask {
        /// JSON configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tensor container holding a `features` entry (B x C x H x W).
        #[arg(long)]
        input: PathBuf,
        /// Directory that receives `mask.amzt`.
        #[arg(long)]
        out: PathBuf,
        /// Overrides both config seeds when set.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config epoch when set.
        #[arg(long)]
        epoch: Option<usize>,
        /// Overrides the config mask method when set.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Apply a stored mask to a feature map.
    Apply {
        /// Tensor container holding a `features` entry (B x C x H x W).
        #[arg(long)]
        input: PathBuf,
        /// Tensor container holding a `mask` entry (B x N).
        #[arg(long)]
        mask: PathBuf,
        /// Directory that receives `masked.amzt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a stored tensor entry as a PGM heatmap.
    Render {
        /// Tensor container to read from.
        #[arg(long)]
        input: PathBuf,
        /// Entry to render; rank 2 (B x N) needs --width, rank 3
        /// (B x H x W) renders directly.
        #[arg(long, default_value = "prior")]
        entry: String,
        /// Output PGM file path.
        #[arg(long)]
        out: PathBuf,
        /// Row width used to fold a B x N entry into an image.
        #[arg(long)]
        width: Option<usize>,
        /// Batch index to render.
        #[arg(long, default_value_t = 0)]
        batch: usize,
    },
    /// Print the per-scale masking plan as JSON lines.
    Schedule {
        /// JSON configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config epoch when set.
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Check the concentration bound against a Monte Carlo simulation.
    VerifyBound {
        /// Draws per trial.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Deviation threshold.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Number of trials.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Simulation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Distribution the trials draw from.
        #[arg(long, value_enum, default_value_t = ModelArg::Uniform)]
        model: ModelArg,
    },
    /// Run encode, prior, mask, and apply in one deterministic pass.
    Pipeline {
        /// JSON configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tensor container holding a `features` entry (B x C x H x W).
        #[arg(long)]
        input: PathBuf,
        /// Directory that receives `outputs.amzt`.
        #[arg(long)]
        out: PathBuf,
        /// Overrides both config seeds when set.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config epoch when set.
        #[arg(long)]
        epoch: Option<usize>,
        /// Overrides the config mask method when set.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
}

/// Mask method selector mirrored into the flag grammar.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Threshold,
    Rfgam,
}

impl From<MethodArg> for MaskMethod {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Threshold => MaskMethod::Threshold,
            MethodArg::Rfgam => MaskMethod::Rfgam,
        }
    }
}

/// Sampling distribution selector mirrored into the flag grammar.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Uniform,
    Bernoulli,
}

impl From<ModelArg> for SampleModel {
    fn from(value: ModelArg) -> Self {
        match value {
            ModelArg::Uniform => SampleModel::Uniform,
            ModelArg::Bernoulli => SampleModel::Bernoulli,
        }
    }
}

fn main() {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => match err.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                err.exit()
            }
            // Usage errors stay single-line: keep clap's "error: ..." head
            // and drop the multi-line usage block.
            _ => {
                let rendered = err.render().to_string();
                let line = rendered.lines().next().unwrap_or("error: invalid arguments");
                eprintln!("{line}");
                std::process::exit(2);
            }
        },
    };
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

/// Route stderr diagnostics through `AMAZE_LOG` (error, info, or debug).
fn init_logging() {
    let filter = std::env::var("AMAZE_LOG").unwrap_or_else(|_| "error".to_string());
    env_logger::Builder::new()
        .parse_filters(&filter)
        .format_timestamp(None)
        .init();
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Encode { input, out, seed } => encode_cmd(&input, &out, seed),
        Command::Prior { input, out, seed } => prior_cmd(&input, &out, seed),
        Command::Mask {
            config,
            input,
            out,
            seed,
            epoch,
            method,
        } => mask_cmd(config.as_deref(), &input, &out, seed, epoch, method),
        Command::Apply { input, mask, out } => apply_cmd(&input, &mask, &out),
        Command::Render {
            input,
            entry,
            out,
            width,
            batch,
        } => render_cmd(&input, &entry, &out, width, batch),
        Command::Schedule { config, epoch } => schedule_cmd(config.as_deref(), epoch),
        Command::VerifyBound {
            samples,
            eps,
            trials,
            seed,
            model,
        } => verify_bound_cmd(samples, eps, trials, seed, model),
        Command::Pipeline {
            config,
            input,
            out,
            seed,
            epoch,
            method,
        } => pipeline_cmd(config.as_deref(), &input, &out, seed, epoch, method),
    }
}

/// Load the configuration file (or defaults) and fold in flag overrides.
fn resolve_config(
    path: Option<&Path>,
    method: Option<MethodArg>,
    seed: Option<u64>,
    epoch: Option<usize>,
) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::with_method(MaskMethod::Threshold),
    };
    if let Some(method) = method {
        config.method = method.into();
    }
    if let Some(seed) = seed {
        config.params_seed = seed;
        config.mask_seed = seed;
    }
    if let Some(epoch) = epoch {
        config.epoch = epoch;
    }
    config.validate()?;
    Ok(config)
}

/// Write named tensors into `dir/file_name` and return the full path.
fn write_entries(dir: &Path, file_name: &str, entries: Vec<(&str, Tensor32)>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut file = TensorFile::new();
    for (name, tensor) in entries {
        file.insert(name, tensor)?;
    }
    let path = dir.join(file_name);
    file.write(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// One `{"entry": ..., "dims": ..., "path": ...}` line per written artifact.
fn print_artifact(entry: &str, dims: &[usize], path: &Path) {
    println!(
        "{}",
        json!({ "entry": entry, "dims": dims, "path": path.display().to_string() })
    );
}

fn encode_cmd(input: &Path, out: &Path, seed: u64) -> Result<()> {
    let features = load_features(input)?;
    let params = AdapterParams::<f32>::init(features.dims()[1], seed)?;
    let tokens = encode_tokens(&feature_to_tokens(&features)?, &params)?;
    let dims = tokens.tensor().dims().to_vec();
    let path = write_entries(out, TOKENS_FILE, vec![(TOKENS_ENTRY, tokens.into_tensor())])?;
    print_artifact(TOKENS_ENTRY, &dims, &path);
    Ok(())
}

fn prior_cmd(input: &Path, out: &Path, seed: u64) -> Result<()> {
    let features = load_features(input)?;
    let params = AdapterParams::<f32>::init(features.dims()[1], seed)?;
    let (_, prior) = compute_prior(&features, &params)?;
    let scores = prior.scores().clone();
    let dims = scores.dims().to_vec();
    let path = write_entries(out, PRIOR_FILE, vec![(PRIOR_ENTRY, scores)])?;
    print_artifact(PRIOR_ENTRY, &dims, &path);
    Ok(())
}

fn mask_cmd(
    config: Option<&Path>,
    input: &Path,
    out: &Path,
    seed: Option<u64>,
    epoch: Option<usize>,
    method: Option<MethodArg>,
) -> Result<()> {
    let config = resolve_config(config, method, seed, epoch)?;
    let features = load_features(input)?;
    let [_, channels, height, width] = features.dims()[..] else {
        unreachable!("load_features validates rank 4");
    };
    let params = AdapterParams::<f32>::init(channels, config.params_seed)?;
    let (tokens, prior) = compute_prior(&features, &params)?;
    let (mask, field) = build_mask(&config, &prior, &tokens, &params, height, width)?;
    let mut entries = vec![(MASK_ENTRY, mask.values().clone())];
    if let Some(field) = &field {
        entries.push((INTENSITY_ENTRY, field.grid().clone()));
    }
    let path = write_entries(out, MASK_FILE, entries)?;
    log::info!("mask written to {}", path.display());
    for stat in mask_stats(&mask) {
        println!("{}", serde_json::to_string(&stat)?);
    }
    Ok(())
}

fn apply_cmd(input: &Path, mask_path: &Path, out: &Path) -> Result<()> {
    let features = load_features(input)?;
    let mask_file =
        TensorFile::read(mask_path).with_context(|| format!("reading {}", mask_path.display()))?;
    let values = mask_file
        .get(MASK_ENTRY)
        .with_context(|| format!("no `{MASK_ENTRY}` entry in {}", mask_path.display()))?
        .clone();
    let mask = MaskMatrix::new(values)?;
    let masked = apply_mask(&features, &mask)?;
    let dims = masked.dims().to_vec();
    let path = write_entries(out, MASKED_FILE, vec![(MASKED_ENTRY, masked)])?;
    print_artifact(MASKED_ENTRY, &dims, &path);
    Ok(())
}

fn render_cmd(
    input: &Path,
    entry: &str,
    out: &Path,
    width: Option<usize>,
    batch: usize,
) -> Result<()> {
    let file = TensorFile::read(input).with_context(|| format!("reading {}", input.display()))?;
    let tensor = file
        .get(entry)
        .with_context(|| format!("no `{entry}` entry in {}", input.display()))?;
    let (height, row_width, values) = grid_slice(tensor, width, batch)?;
    write_pgm(out, row_width, height, &values)?;
    println!(
        "{}",
        json!({ "path": out.display().to_string(), "width": row_width, "height": height })
    );
    Ok(())
}

/// Slice one batch of a rank-2 or rank-3 entry into an H x W grid of f64.
fn grid_slice(
    tensor: &Tensor32,
    width: Option<usize>,
    batch: usize,
) -> Result<(usize, usize, Vec<f64>)> {
    let (batches, height, row_width) = match tensor.dims() {
        &[batches, height, row_width] => (batches, height, row_width),
        &[batches, tokens] => {
            let row_width =
                width.context("a rank-2 (batch x tokens) entry needs --width to fold rows")?;
            if row_width == 0 || tokens % row_width != 0 {
                bail!("--width {row_width} does not evenly divide {tokens} tokens");
            }
            (batches, tokens / row_width, row_width)
        }
        dims => bail!(
            "entry has shape {dims:?}; expected batch x tokens or batch x height x width"
        ),
    };
    if batch >= batches {
        bail!("--batch {batch} out of range for {batches} batches");
    }
    let cells = height * row_width;
    let start = batch * cells;
    let values = tensor.data()[start..start + cells]
        .iter()
        .map(|&v| f64::from(v))
        .collect();
    Ok((height, row_width, values))
}

fn schedule_cmd(config: Option<&Path>, epoch: Option<usize>) -> Result<()> {
    let config = resolve_config(config, None, None, epoch)?;
    let plan = scale_plan(
        &ScheduleConfig {
            initial_window: config.initial_window,
            total_epochs: config.total_epochs,
            scale_ratios: config.scale_rhos.clone(),
            warmup_fraction: config.warmup_fraction,
        },
        config.epoch,
    )?;
    for entry in plan {
        println!("{}", serde_json::to_string(&entry)?);
    }
    Ok(())
}

fn verify_bound_cmd(
    samples: usize,
    eps: f64,
    trials: usize,
    seed: u64,
    model: ModelArg,
) -> Result<()> {
    let bound = hoeffding_bound(samples, eps);
    let mut rng = SeededRng::new(seed);
    let frequency = monte_carlo_violation(samples, eps, trials, model.into(), &mut rng)?;
    let slack = binomial_slack(bound, trials);
    println!(
        "{}",
        json!({
            "samples": samples,
            "eps": eps,
            "trials": trials,
            "bound": bound,
            "frequency": frequency,
            "slack": slack,
            "within_bound": frequency <= bound + slack,
        })
    );
    Ok(())
}

fn pipeline_cmd(
    config: Option<&Path>,
    input: &Path,
    out: &Path,
    seed: Option<u64>,
    epoch: Option<usize>,
    method: Option<MethodArg>,
) -> Result<()> {
    let config = resolve_config(config, method, seed, epoch)?;
    let run = run_pipeline(&config, input, out)?;
    log::info!("outputs written to {}", run.output_path.display());
    for stat in &run.stats {
        println!("{}", serde_json::to_string(stat)?);
    }
    Ok(())
}
