//! Command-line driver for the graph wavelet mixing toolkit.
//!
//! [`run`] parses `argv` and returns the process exit code: 0 on success,
//! 1 on a runtime failure, 2 on a usage error.

pub mod alloc;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use gwt_core::gradcheck::{DEFAULT_FD_STEP, DEFAULT_TOL_REL};
use gwt_core::scaling::BenchMode;
use gwt_core::train::validation_set;
use gwt_core::{
    bench_scaling, evaluate, grad_check, load_checkpoint, parse_conllu, run_training, AllocProbe, BenchConfig,
    GradTarget, GwtError, GwtModel, MixMode, ModelConfig, SpectralCache, TaskStream, TrainConfig,
};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "gwt", about = "Graph wavelet token mixing: training, checks and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a JSON config; writes metrics and checkpoints to --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loss and token accuracy of a checkpoint on a seeded held-out stream.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Stream seed; defaults to the training run's validation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 256)]
        examples: usize,
        /// `exact`, `truncated` or `chebyshev`; defaults to the trained mode.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient check; exits 0 iff every tensor passes.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOL_REL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_FD_STEP)]
        step: f64,
        /// `model`, `layer` or `mix`.
        #[arg(long, default_value = "model")]
        target: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter responses over [0, 2] as CSV, from a checkpoint or a fresh init.
    Spectrum {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward-time scaling of the mixing modes and dense attention.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "exact,truncated:16,chebyshev:16,attention"
        )]
        modes: Vec<String>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-mode log-log slopes.
        #[arg(long)]
        slopes: Option<PathBuf>,
    },
    /// CoNLL-U to graph JSON (an array, or one object with --sentence).
    BuildGraph {
        #[arg(long)]
        conllu: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Zero-based sentence index.
        #[arg(long)]
        sentence: Option<usize>,
    },
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, probe: &dyn AllocProbe) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command, probe) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command, probe: &dyn AllocProbe) -> gwt_core::Result<i32> {
    match cmd {
        Command::Train { config, out } => train(&config, &out),
        Command::Eval {
            checkpoint,
            seed,
            examples,
            mode,
            out,
        } => eval(&checkpoint, seed, examples, mode, out.as_deref()),
        Command::Gradcheck {
            seed,
            tol,
            step,
            target,
            out,
        } => gradcheck(seed, tol, step, &target, out.as_deref()),
        Command::Spectrum {
            checkpoint,
            layer,
            seed,
            k,
            d,
            out,
        } => spectrum(checkpoint.as_deref(), layer, seed, k, d, &out),
        Command::Bench {
            ns,
            d,
            k,
            modes,
            repeats,
            seed,
            out,
            slopes,
        } => {
            let modes = modes
                .iter()
                .map(|m| m.parse())
                .collect::<gwt_core::Result<Vec<BenchMode>>>()?;
            let cfg = BenchConfig {
                ns,
                d,
                k,
                modes,
                repeats,
                seed,
            };
            let report = bench_scaling(&cfg, probe)?;
            std::fs::write(&out, report.to_csv())?;
            if let Some(path) = slopes {
                std::fs::write(path, report.slopes_csv())?;
            }
            print!("{}", report.slopes_csv());
            Ok(if report.all_verified() { 0 } else { 1 })
        }
        Command::BuildGraph { conllu, out, sentence } => build_graph(&conllu, &out, sentence),
    }
}

fn train(config: &Path, out: &Path) -> gwt_core::Result<i32> {
    let cfg = TrainConfig::from_json(&std::fs::read_to_string(config)?)?;
    let outcome = run_training(&cfg, Some(out))?;
    let last = outcome.trace.last().map_or(f64::NAN, |m| m.loss);
    let summary = json!({
        "steps": outcome.trace.len(),
        "final_train_loss": last,
        "val_loss": outcome.final_eval().map(|e| e.loss),
        "val_accuracy": outcome.final_eval().map(|e| e.accuracy),
        "stopped_early": outcome.stopped_early,
    });
    println!("{summary}");
    Ok(0)
}

fn eval(
    checkpoint: &Path,
    seed: Option<u64>,
    examples: usize,
    mode: Option<String>,
    out: Option<&Path>,
) -> gwt_core::Result<i32> {
    let (model, config) = load_checkpoint(checkpoint)?;
    let mut cfg: TrainConfig = serde_json::from_value(config)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.val_size = examples;
    cfg.validate()?;
    let spec = cfg.task_spec()?;
    let batches = match seed {
        Some(s) => TaskStream::new(spec, s)?.take_batches(examples)?,
        None => validation_set(&cfg, &spec)?,
    };
    let report = evaluate(&model, &SpectralCache::new(), &batches, cfg.mix_mode()?)?;
    let line = json!({
        "loss": report.loss,
        "accuracy": report.accuracy,
        "tokens": report.tokens,
        "examples": examples,
        "mode": cfg.mix_mode()?.label(),
    })
    .to_string();
    println!("{line}");
    if let Some(path) = out {
        std::fs::write(path, line + "\n")?;
    }
    Ok(0)
}

fn gradcheck(seed: u64, tol: f64, step: f64, target: &str, out: Option<&Path>) -> gwt_core::Result<i32> {
    let target = match target {
        "model" => GradTarget::default_model(),
        "layer" => GradTarget::Layer {
            n: 6,
            d: 8,
            k: 2,
            mode: MixMode::Exact,
        },
        "mix" => GradTarget::Mix {
            n: 6,
            d: 8,
            k: 2,
            mode: MixMode::Exact,
        },
        other => return Err(GwtError::InvalidArgument(format!("unknown gradcheck target {other:?}"))),
    };
    let report = grad_check(&target, seed, step, tol)?;
    let csv = report.to_csv();
    match out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!("{verdict}: max rel. err. {:e} (tol {tol:e})", report.max_rel_err());
    Ok(if report.passed() { 0 } else { 1 })
}

fn spectrum(
    checkpoint: Option<&Path>,
    layer: usize,
    seed: u64,
    k: usize,
    d: usize,
    out: &Path,
) -> gwt_core::Result<i32> {
    let model = match checkpoint {
        Some(path) => load_checkpoint(path)?.0,
        None => GwtModel::init(
            &ModelConfig {
                k,
                d,
                ..ModelConfig::default()
            },
            seed,
        )?,
    };
    let Some(l) = model.layers.get(layer) else {
        return Err(GwtError::InvalidArgument(format!(
            "layer {layer} requested but the model has {}",
            model.layers.len()
        )));
    };
    std::fs::write(out, l.bank.response_csv())?;
    Ok(0)
}

fn build_graph(conllu: &Path, out: &Path, sentence: Option<usize>) -> gwt_core::Result<i32> {
    let graphs = parse_conllu(&std::fs::read_to_string(conllu)?)?;
    let json = match sentence {
        Some(i) => {
            let g = graphs.get(i).ok_or_else(|| {
                GwtError::InvalidArgument(format!("sentence {i} requested but the file has {}", graphs.len()))
            })?;
            serde_json::to_string(&g.to_json())?
        }
        None => serde_json::to_string(&graphs.iter().map(|g| g.to_json()).collect::<Vec<_>>())?,
    };
    std::fs::write(out, json + "\n")?;
    Ok(0)
}
