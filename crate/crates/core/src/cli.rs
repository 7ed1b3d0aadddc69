// SPDX-License-Identifier: Apache-2.0

//! Command-line front end for the `siaf` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::gen::{generate, random_image, SizeClass};
use crate::reference::model::ModelConfig;
use crate::report::{comparison_document, run_document, stats_document, to_json};
use crate::scheduler::{compare_schedules, simulate, Schedule};
use crate::siaf::TensorFile;
use crate::tensor::ByteImage;
use crate::verify::{compare_traces, inject_fault, reference_trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "siaf", version, about = "All-spike transformer reference model and accelerator simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one inference and write a JSON report.
    Run(RunArgs),
    /// Compare reference and simulator traces; exit 1 on any difference.
    Verify(RunArgs),
    /// Write a random model (config + weights) of a size class.
    Gen(GenArgs),
    /// Run serial and parallel schedules and compare their costs.
    Compare(RunArgs),
    /// Architecture constants and planned cycles, without executing.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Override the model's time steps (1, 2 or 4).
    #[arg(long)]
    pub timesteps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Raw image: u32 LE width, height, channels, then bytes in [c][h][w] order.
    /// A seeded random image is used when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "parallel")]
    pub schedule: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Flip the sign of one weight of this layer on the simulator side.
    #[arg(long)]
    pub fault_layer: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value = "tiny")]
    pub size: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub timesteps: usize,
    /// Output config path.
    #[arg(long)]
    pub config: PathBuf,
    /// Output weight file path.
    #[arg(long)]
    pub weights: PathBuf,
    /// Also write a seeded random input image here.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Size class to plan; ignored when --config/--weights are given.
    #[arg(long, default_value = "paper-384")]
    pub size: String,
    #[arg(long, requires = "weights")]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "config")]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long, default_value = "parallel")]
    pub schedule: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// An error with its exit code and where it happened.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub location: String,
    pub error: Error,
}

impl CliError {
    fn new(error: Error, location: impl Into<String>) -> Self {
        let code = if error.is_input_error() { EXIT_INPUT } else { EXIT_SIMULATION };
        Self { code, location: location.into(), error }
    }

    /// First stderr line: `siaf-error: code=<n> location=<where> message=<text>`.
    pub fn line(&self) -> String {
        format!(
            "siaf-error: code={} location={} message={}",
            self.code,
            self.location.replace(' ', "_"),
            self.error.to_string().replace('\n', " ")
        )
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn at<T>(r: Result<T>, location: impl std::fmt::Display) -> CliResult<T> {
    r.map_err(|e| {
        let loc = match &e {
            Error::Format { offset, .. } => format!("{location}@{offset}"),
            Error::Io { path, .. } | Error::Parse { path, .. } => path.display().to_string(),
            _ => location.to_string(),
        };
        CliError::new(e, loc)
    })
}

/// Reads the raw image format.
pub fn read_image(path: &Path) -> Result<ByteImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::Format { offset: bytes.len() as u64, message: "image header needs 12 bytes".into() });
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h, c) = (u(0), u(4), u(8));
    let n = w
        .checked_mul(h)
        .and_then(|x| x.checked_mul(c))
        .ok_or_else(|| Error::Format { offset: 0, message: "image dimensions overflow".into() })?;
    if bytes.len() - 12 != n {
        return Err(Error::Format {
            offset: 12 + n.min(bytes.len() - 12) as u64,
            message: format!("{w}x{h}x{c} image needs {n} data bytes, file has {}", bytes.len() - 12),
        });
    }
    ByteImage::new(c, h, w, bytes[12..].to_vec())
}

pub fn write_image(path: &Path, img: &ByteImage) -> Result<()> {
    let [c, h, w] = img.shape();
    let mut out = Vec::with_capacity(12 + img.data().len());
    for v in [w, h, c] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(img.data());
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Loaded {
    file: ConfigFile,
    model: ModelConfig,
}

fn load_model(a: &ModelArgs) -> CliResult<Loaded> {
    let file = at(ConfigFile::load(&a.config), a.config.display())?;
    let weights = at(TensorFile::load(&a.weights), a.weights.display())?;
    let mut model = at(file.build_model(&weights), a.config.display())?;
    if let Some(t) = a.timesteps {
        at(crate::tensor::check_time_steps(t).map_err(|e| Error::Config(e.to_string())), "--timesteps")?;
        model.time_steps = t;
    }
    at(file.accel.validate(), a.config.display())?;
    at(file.energy.validate().map_err(|e| Error::Config(e.to_string())), a.config.display())?;
    Ok(Loaded { file, model })
}

fn load_input(args: &RunArgs, model: &ModelConfig) -> CliResult<ByteImage> {
    match &args.input {
        Some(p) => at(read_image(p), p.display()),
        None => Ok(random_image(model.input, args.seed)),
    }
}

fn schedule(name: &str, t: usize) -> CliResult<Schedule> {
    at(Schedule::by_name(name, t).map_err(|e| Error::Config(e.to_string())), "--schedule")
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => at(std::fs::write(p, text).map_err(|e| Error::io(p, e)), p.display()),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn cmd_run(a: &RunArgs, verify: bool) -> CliResult<i32> {
    let l = load_model(&a.model)?;
    let img = load_input(a, &l.model)?;
    let sched = schedule(&a.schedule, l.model.time_steps)?;
    let mut sim_model = l.model.clone();
    if let Some(f) = &a.fault_layer {
        at(inject_fault(&mut sim_model, f), "--fault-layer")?;
    }
    info!("simulating {} with the {} schedule, T={}", l.model.name, sched.name(), sched.time_steps());
    let exec = at(simulate(&sim_model, &img, &l.file.accel, &sched, &l.file.budget), "simulator")?;
    let verification = if verify {
        let gold = at(reference_trace(&l.model, &img), "reference")?;
        Some(compare_traces(&gold, &exec.trace))
    } else {
        None
    };
    let doc = run_document(&l.model, &l.file.accel, &l.file.energy, &exec, verification.clone());
    emit(a.report.as_deref(), &to_json(&doc))?;
    if let Some(v) = verification {
        if let Some(m) = v.first_mismatch {
            eprintln!(
                "mismatch: layer={} time_step={} index={} expected={} actual={} ({})",
                m.layer,
                m.time_step.map_or("-".to_string(), |t| t.to_string()),
                m.index,
                m.expected.map_or("-".to_string(), |v| v.to_string()),
                m.actual.map_or("-".to_string(), |v| v.to_string()),
                m.reason
            );
            return Ok(EXIT_MISMATCH);
        }
        info!("verify: {} trace entries bit-identical", v.entries_compared);
    }
    Ok(EXIT_OK)
}

fn cmd_gen(a: &GenArgs) -> CliResult<i32> {
    let size: SizeClass = at(a.size.parse(), "--size")?;
    let model = at(generate(size, a.seed, a.timesteps).map_err(|e| Error::Config(e.to_string())), "--timesteps")?;
    let (cfg, tensors) = ConfigFile::from_model(&model);
    at(cfg.save(&a.config), a.config.display())?;
    at(tensors.save(&a.weights), a.weights.display())?;
    if let Some(p) = &a.image {
        at(write_image(p, &random_image(model.input, a.seed)), p.display())?;
    }
    info!("wrote {} model ({} weight words)", size, model.weight_words());
    Ok(EXIT_OK)
}

fn cmd_compare(a: &RunArgs) -> CliResult<i32> {
    let l = load_model(&a.model)?;
    let img = load_input(a, &l.model)?;
    let c = at(compare_schedules(&l.model, &l.file.accel, &img, &l.file.budget), "simulator")?;
    let doc = comparison_document(&l.model, &l.file.accel, c);
    emit(a.report.as_deref(), &to_json(&doc))?;
    Ok(EXIT_OK)
}

fn cmd_stats(a: &StatsArgs) -> CliResult<i32> {
    let (model, accel, budget) = match (&a.config, &a.weights) {
        (Some(c), Some(w)) => {
            let l = load_model(&ModelArgs { config: c.clone(), weights: w.clone(), timesteps: a.timesteps })?;
            (l.model, l.file.accel, l.file.budget)
        }
        _ => {
            let size: SizeClass = at(a.size.parse(), "--size")?;
            let t = a.timesteps.unwrap_or(4);
            let model = at(generate(size, a.seed, t).map_err(|e| Error::Config(e.to_string())), "--timesteps")?;
            (model, Default::default(), Default::default())
        }
    };
    let sched = schedule(&a.schedule, model.time_steps)?;
    let doc = at(stats_document(&model, &accel, &sched, &budget), "planner")?;
    emit(a.report.as_deref(), &to_json(&doc))?;
    Ok(EXIT_OK)
}

/// Runs a parsed command and returns the process exit code. Errors print
/// their machine-readable line first.
pub fn run(cli: Cli) -> i32 {
    let r = match &cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Verify(a) => cmd_run(a, true),
        Command::Gen(a) => cmd_gen(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.line());
            e.code
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("SIAF_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip_and_short_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.raw");
        let img = random_image([3, 4, 5], 9);
        write_image(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
        std::fs::write(&p, [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]).unwrap();
        assert!(matches!(read_image(&p), Err(Error::Format { offset: 12, .. })));
    }

    #[test]
    fn error_line_shape() {
        let e = CliError::new(Error::Format { offset: 0, message: "bad magic".into() }, "w.siaf@0");
        assert_eq!(e.code, EXIT_INPUT);
        assert!(e.line().starts_with("siaf-error: code=2 location=w.siaf@0 message="));
        assert_eq!(CliError::new(Error::Overflow("x"), "sim").code, EXIT_SIMULATION);
    }
}
