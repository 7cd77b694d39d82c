//! The `planecycle` command-line tool.
//!
//! Errors are reported on stderr as a single `E_CODE: message` line.
//! Exit codes: 0 on success, 1 when a computation or self-test fails, 2
//! when inputs are missing or unreadable.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::archive::{read_archive, write_archive, Archive};
use crate::error::Error;
use crate::lifting::{build_cycle_schedule, extract_global_summary, LiftMode, LiftingEngine, NetworkWeights, Schedule, GLOBAL_TOKENS, PATCH_SIZE};
use crate::metrics::bench::{benchmark_forward, rows_to_csv};
use crate::metrics::complexity::attention_cost;
use crate::metrics::featdice::{downsample_mask, feat_dice, LesionMask};
use crate::metrics::pca::pca_project;
use crate::plane::{PlaneAxis, PoolMode, VolumeFeatures};
use crate::ppm::central_slice;
use crate::selftest;
use crate::tensor::Tensor;
use crate::weights::{synth_weights, weights_from_archive, Arch};

/// Pseudo-path for `--weights` that selects seeded synthetic weights.
pub const SYNTH_WEIGHTS: &str = "synth";

#[derive(Parser, Debug)]
#[command(name = "planecycle", version, about = "Training-free 2D-to-3D lifting of ViT backbones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a forward pass and write features, globals and summary.
    Lift(Config),
    /// Score feature similarity against a lesion mask.
    Featdice(Config),
    /// Write three-plane PCA images of the features.
    Pca(Config),
    /// Time the forward pass per mode and token grid.
    Bench(Config),
    /// Run the embedded invariant checks.
    Selftest(Config),
}

#[derive(Args, Debug, Clone)]
pub struct Config {
    /// Lifting mode: 2d, 3d, pcm or pcg.
    #[arg(long, default_value = "pcg")]
    pub mode: LiftMode,
    /// Plane pattern such as "hw,dw,dh,hw", tiled to the network depth.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Weight archive, or "synth" for seeded synthetic weights.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Token grids for bench, e.g. "4x4x4,8x8x8".
    #[arg(long, default_value = "4x4x4,8x8x8")]
    pub dims: String,
    /// Modes for bench.
    #[arg(long, default_value = "2d,3d,pcm,pcg")]
    pub modes: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    /// Global tokens per sequence in the reported attention pairs.
    #[arg(long)]
    pub globals: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub exit: i32,
    pub message: String,
}

impl CliError {
    fn input(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            exit: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::Io { .. }
            | Error::MalformedHeader(_)
            | Error::OverlappingRanges(_)
            | Error::TruncatedFile(_)
            | Error::UnsupportedDtype(_)
            | Error::DuplicateName(_)
            | Error::MissingTensor(_) => 2,
            _ => 1,
        };
        CliError {
            code: e.code(),
            exit,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: "E_IO",
            exit: 1,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn arch(cfg: &Config) -> Arch {
    let d = Arch::default();
    Arch {
        depth: cfg.depth.unwrap_or(d.depth),
        channels: cfg.channels.unwrap_or(d.channels),
        heads: cfg.heads.unwrap_or(d.heads),
        ..d
    }
}

fn load_weights(cfg: &Config) -> CliResult<NetworkWeights> {
    match cfg.weights.as_deref() {
        None => Err(CliError::input("E_NO_WEIGHTS", "--weights is required")),
        Some(SYNTH_WEIGHTS) => Ok(synth_weights(cfg.seed, &arch(cfg))?),
        Some(path) => Ok(weights_from_archive(&read_archive(path)?)?),
    }
}

fn require_path<'a>(p: &'a Option<PathBuf>, code: &'static str, flag: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::input(code, format!("{flag} is required")))
}

fn schedule(cfg: &Config, depth: usize) -> CliResult<Schedule> {
    Ok(match &cfg.schedule {
        None => build_cycle_schedule(depth)?,
        Some(s) => {
            let pattern = s
                .split(',')
                .map(|p| p.trim().parse::<PlaneAxis>())
                .collect::<Result<Vec<_>, _>>()?;
            Schedule::from_pattern(&pattern, depth)?
        }
    })
}

/// Raw volume `[D, H, W, C]`; a rank-3 tensor gets one channel.
fn raw_volume(t: &Tensor) -> CliResult<Tensor> {
    match t.rank() {
        4 => Ok(t.clone()),
        3 => Ok(t.reshape([t.dims()[0], t.dims()[1], t.dims()[2], 1])?),
        _ => Err(Error::ShapeMismatch(format!("volume must be rank 3 or 4, got {:?}", t.dims())).into()),
    }
}

/// Features from an input archive: a stored "features" entry, or a lift
/// of its "volume" entry.
fn features_from(cfg: &Config, input: &Archive) -> CliResult<VolumeFeatures> {
    if let Some(f) = input.get("features") {
        return Ok(VolumeFeatures::new(f.clone())?);
    }
    let raw = raw_volume(input.require("volume")?)?;
    let engine = LiftingEngine::new(load_weights(cfg)?, cfg.threads as usize)?;
    let s = schedule(cfg, engine.weights().depth())?;
    Ok(engine.forward(&raw, cfg.mode, &s)?.features)
}

fn cmd_lift(cfg: &Config, out: &mut dyn Write) -> CliResult {
    let weights = load_weights(cfg)?;
    let input = read_archive(require_path(&cfg.input, "E_NO_INPUT", "--input")?)?;
    let output = require_path(&cfg.output, "E_NO_OUTPUT", "--output")?;
    let raw = raw_volume(input.require("volume")?)?;
    let engine = LiftingEngine::new(weights, cfg.threads as usize)?;
    let depth = engine.weights().depth();
    let s = schedule(cfg, depth)?;
    let result = engine.forward(&raw, cfg.mode, &s)?;

    let mut archive = Archive::new();
    archive.metadata.insert("mode".into(), cfg.mode.name().into());
    archive.metadata.insert("schedule".into(), s.to_string());
    archive.insert("summary", extract_global_summary(&result.globals))?;
    archive.insert("features", result.features.into_tensor())?;
    archive.insert("globals", result.globals.tensor().clone())?;
    write_archive(&archive, output)?;

    let [d0, h0, w0, _] = *raw.dims() else { unreachable!() };
    let grid = (d0, h0 / PATCH_SIZE, w0 / PATCH_SIZE);
    let report = attention_cost(cfg.mode, grid, cfg.globals.unwrap_or(GLOBAL_TOKENS), depth, &s)?;
    writeln!(
        out,
        "mode={} grid={}x{}x{} layers={} tokens={} attention_pairs={}",
        cfg.mode,
        grid.0,
        grid.1,
        grid.2,
        report.layers.len(),
        report.total_tokens(),
        report.total_pairs()
    )?;
    Ok(())
}

fn cmd_featdice(cfg: &Config, out: &mut dyn Write) -> CliResult {
    let input = read_archive(require_path(&cfg.input, "E_NO_INPUT", "--input")?)?;
    let features = features_from(cfg, &input)?;
    let mask = input.require("mask")?;
    let mask = if mask.rank() == 4 {
        mask.reshape(mask.dims()[..3].to_vec())?
    } else {
        mask.clone()
    };
    let (d, h, w) = features.grid();
    let mask = if mask.dims() == [d, h, w] {
        LesionMask::new(mask)?
    } else {
        downsample_mask(&mask, PATCH_SIZE)?
    };
    let result = feat_dice(&features, &mask)?;
    writeln!(out, "featdice={:.4}", result.score)?;
    Ok(())
}

/// Output file for one plane: `<prefix>_<plane>.ppm`.
pub fn plane_image_path(prefix: &Path, axis: PlaneAxis) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_{}.ppm", axis.plane_name()));
    PathBuf::from(name)
}

fn cmd_pca(cfg: &Config, out: &mut dyn Write) -> CliResult {
    let input = read_archive(require_path(&cfg.input, "E_NO_INPUT", "--input")?)?;
    let prefix = require_path(&cfg.output, "E_NO_OUTPUT", "--output")?;
    let features = features_from(cfg, &input)?;
    let pca = pca_project(&features, 3)?;
    for axis in PlaneAxis::ALL {
        let path = plane_image_path(prefix, axis);
        central_slice(&pca.projection, axis)?.write(&path)?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

fn parse_dims(s: &str) -> CliResult<Vec<(usize, usize, usize)>> {
    s.split(',')
        .map(|item| {
            let parts: Vec<usize> = item
                .trim()
                .split('x')
                .map(|p| p.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::input("E_PARSE", format!("bad grid {item:?}")))?;
            match parts[..] {
                [d, h, w] if d > 0 && h > 0 && w > 0 => Ok((d, h, w)),
                _ => Err(CliError::input("E_PARSE", format!("bad grid {item:?}, expected DxHxW"))),
            }
        })
        .collect()
}

fn parse_modes(s: &str) -> CliResult<Vec<LiftMode>> {
    s.split(',')
        .map(|m| {
            m.trim()
                .parse::<LiftMode>()
                .map_err(|e| CliError::input("E_PARSE", e.to_string()))
        })
        .collect()
}

fn cmd_bench(cfg: &Config, out: &mut dyn Write) -> CliResult {
    let dims = parse_dims(&cfg.dims)?;
    let modes = parse_modes(&cfg.modes)?;
    let weights = match cfg.weights {
        Some(_) => load_weights(cfg)?,
        None => synth_weights(cfg.seed, &arch(cfg))?,
    };
    let engine = LiftingEngine::new(weights, cfg.threads as usize)?;
    let depth = engine.weights().depth();
    let rows = benchmark_forward(&engine, &dims, &modes, cfg.repeats, cfg.globals)?;
    let csv = rows_to_csv(&rows);
    match &cfg.output {
        Some(path) => std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?,
        None => write!(out, "{csv}")?,
    }
    let s = build_cycle_schedule(depth)?;
    let g = cfg.globals.unwrap_or(GLOBAL_TOKENS);
    for &(d, h, w) in &dims {
        let flat = attention_cost(LiftMode::Flat3D, (d, h, w), g, depth, &s)?.total_pairs();
        let pc = attention_cost(LiftMode::PlaneCycle(PoolMode::Grouped), (d, h, w), g, depth, &s)?.total_pairs();
        writeln!(out, "# ratio 3d/planecycle {d}x{h}x{w}: {:.3}", flat as f64 / pc as f64)?;
    }
    Ok(())
}

fn cmd_selftest(out: &mut dyn Write) -> CliResult {
    if selftest::run(&selftest::Hooks::default(), out)? {
        Ok(())
    } else {
        Err(CliError {
            code: "E_SELFTEST",
            exit: 1,
            message: "one or more checks failed".into(),
        })
    }
}

pub fn execute(command: &Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Lift(cfg) => cmd_lift(cfg, out),
        Command::Featdice(cfg) => cmd_featdice(cfg, out),
        Command::Pca(cfg) => cmd_pca(cfg, out),
        Command::Bench(cfg) => cmd_bench(cfg, out),
        Command::Selftest(_) => cmd_selftest(out),
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or_default().trim_start_matches("error: ");
            let _ = writeln!(err, "E_USAGE: {first}");
            return 2;
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit
        }
    }
}

pub fn main() -> ! {
    let code = run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code)
}
