//! Training driver: JSON config, Adam state, the step loop with gradient
//! accumulation, periodic validation/checkpointing and early stopping.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::block::{model_backward, model_forward, GwtModel, ModelConfig};
use crate::cache::SpectralCache;
use crate::checkpoint::save_checkpoint;
use crate::error::{invalid, GwtError, Result};
use crate::filter_bank::{MixMode, DEFAULT_CHEB_ORDER, DEFAULT_HIDDEN};
use crate::loss::{cross_entropy_loss, token_accuracy};
use crate::optim::{lr_at, Adam, AdamConfig, ScheduleConfig};
use crate::task::{GraphSource, TaskBatch, TaskKind, TaskSpec, TaskStream};

/// Offset between the training and validation stream seeds.
pub const VALIDATION_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;
const TRAIN_SEED_SALT: u64 = 0x5851_F42D_4C95_7F2D;

pub const METRICS_FILE: &str = "metrics.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

fn default_mask_rate() -> f64 {
    0.15
}
fn default_eval_every() -> u64 {
    100
}
fn default_val_size() -> usize {
    32
}
fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub d: usize,
    pub k: usize,
    pub layers: usize,
    pub ffn_mult: usize,
    pub vocab: usize,
    pub task: TaskKind,
    pub n: usize,
    pub steps: u64,
    pub seed: u64,
    pub lr: f64,
    pub warmup: u64,
    /// `"exact"`, `"truncated"` or `"chebyshev"`.
    pub mode: String,
    pub cheb_order: usize,
    pub trunc_m: usize,
    /// Samples whose gradients are averaged into one update.
    pub accum: usize,
    /// Evaluations without improvement before stopping; 0 disables.
    pub patience: u64,
    #[serde(default = "default_mask_rate")]
    pub mask_rate: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// CoNLL-U file supplying graphs; chains of length `n` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 32,
            k: 4,
            layers: 1,
            ffn_mult: 4,
            vocab: 32,
            task: TaskKind::Copy,
            n: 16,
            steps: 2000,
            seed: 0,
            lr: 5e-4,
            warmup: 4000,
            mode: "exact".into(),
            cheb_order: DEFAULT_CHEB_ORDER,
            trunc_m: 16,
            accum: 1,
            patience: 0,
            mask_rate: default_mask_rate(),
            eval_every: default_eval_every(),
            val_size: default_val_size(),
            hidden: DEFAULT_HIDDEN,
            graph: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mix_mode(&self) -> Result<MixMode> {
        let mode = match self.mode.as_str() {
            "exact" => MixMode::Exact,
            "truncated" => MixMode::Truncated(self.trunc_m),
            "chebyshev" => MixMode::Chebyshev(self.cheb_order),
            other => return invalid(format!("unknown mode {other:?}")),
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vocab: self.vocab,
            d: self.d,
            k: self.k,
            layers: self.layers,
            ffn_mult: self.ffn_mult,
            hidden: self.hidden,
        }
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            base_lr: self.lr,
            warmup_steps: self.warmup,
        }
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        let graph_source = match &self.graph {
            Some(path) => GraphSource::from_conllu_file(path)?,
            None => GraphSource::Chain,
        };
        let spec = TaskSpec {
            kind: self.task,
            n: self.n,
            vocab: self.vocab,
            mask_rate: self.mask_rate,
            graph_source,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.mix_mode()?;
        lr_at(&self.schedule(), 1)?;
        if self.accum == 0 || self.eval_every == 0 || self.val_size == 0 {
            return invalid("accum, eval_every and val_size must be positive");
        }
        Ok(())
    }

    pub fn train_seed(&self) -> u64 {
        self.seed ^ TRAIN_SEED_SALT
    }

    pub fn validation_seed(&self) -> u64 {
        self.seed.wrapping_add(VALIDATION_SEED_OFFSET)
    }
}

/// Parameters, matching gradient buffers and optimizer moments.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: GwtModel,
    pub grads: GwtModel,
    pub adam: Adam,
    pub step: u64,
    pub rng_seed: u64,
}

impl TrainState {
    pub fn new(model: GwtModel, rng_seed: u64) -> Self {
        let sizes: Vec<usize> = model.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            grads: model.zeros_like(),
            adam: Adam::new(&sizes, AdamConfig::default()),
            model,
            step: 0,
            rng_seed,
        }
    }

    /// One Adam update from `grads`, which are zeroed afterwards.
    pub fn adam_step(&mut self, lr: f64) -> Result<()> {
        let grads = self.grads.tensors();
        let named: Vec<(&str, &[f64])> = grads.iter().map(|t| (t.name.as_str(), t.data)).collect();
        self.adam.update(self.model.tensors_mut(), &named, lr)?;
        drop(grads);
        self.grads = self.model.zeros_like();
        self.step += 1;
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub trace: Vec<StepMetrics>,
    pub evals: Vec<EvalRecord>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn final_eval(&self) -> Option<EvalReport> {
        self.evals.last().map(|e| e.report)
    }
}

/// Mean per-example loss and pooled token accuracy over `batches`.
pub fn evaluate(model: &GwtModel, cache: &SpectralCache, batches: &[TaskBatch], mode: MixMode) -> Result<EvalReport> {
    if batches.is_empty() {
        return invalid("evaluation needs at least one example");
    }
    let (mut loss, mut hits, mut total) = (0.0, 0, 0);
    for b in batches {
        let (logits, _) = model_forward(model, cache, &b.graph, &b.tokens, mode)?;
        loss += cross_entropy_loss(&logits, &b.targets, &b.mask)?.0;
        let (h, t) = token_accuracy(&logits, &b.targets, &b.mask);
        hits += h;
        total += t;
    }
    Ok(EvalReport {
        loss: loss / batches.len() as f64,
        accuracy: hits as f64 / total.max(1) as f64,
        tokens: total,
    })
}

pub fn metrics_csv(trace: &[StepMetrics]) -> String {
    let mut out = String::from("step,loss,lr,grad_norm\n");
    for m in trace {
        let _ = writeln!(out, "{},{:e},{:e},{:e}", m.step, m.loss, m.lr, m.grad_norm);
    }
    out
}

pub fn validation_csv(evals: &[EvalRecord]) -> String {
    let mut out = String::from("step,val_loss,val_accuracy\n");
    for e in evals {
        let _ = writeln!(out, "{},{:e},{:e}", e.step, e.report.loss, e.report.accuracy);
    }
    out
}

struct Sink<'a> {
    dir: Option<&'a Path>,
    config: serde_json::Value,
}

impl Sink<'_> {
    fn checkpoint(&self, model: &GwtModel) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
        save_checkpoint(&tmp, model, &self.config)?;
        std::fs::rename(&tmp, dir.join(CHECKPOINT_FILE))?;
        Ok(())
    }

    fn traces(&self, trace: &[StepMetrics], evals: &[EvalRecord]) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        std::fs::write(dir.join(METRICS_FILE), metrics_csv(trace))?;
        std::fs::write(dir.join(VALIDATION_FILE), validation_csv(evals))?;
        Ok(())
    }
}

/// Runs `cfg.steps` updates of `accum` examples each. With `out_dir`, the
/// metric traces and the latest checkpoint are kept there; a checkpoint is
/// written before the first step and after every evaluation, and survives a
/// later failure.
pub fn train_loop(
    model: GwtModel,
    stream: &mut TaskStream,
    val: &[TaskBatch],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mode = cfg.mix_mode()?;
    if let MixMode::Chebyshev(_) = mode {
        return Err(GwtError::UnsupportedMode(
            "training needs the exact or truncated mode; chebyshev has no backward pass".into(),
        ));
    }
    if model.config() != cfg.model_config() {
        return invalid("model shape does not match the training config");
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let sink = Sink {
        dir: out_dir,
        config: serde_json::to_value(cfg)?,
    };
    let cache = SpectralCache::new();
    let schedule = cfg.schedule();
    let mut state = TrainState::new(model, cfg.seed);
    let mut trace = Vec::with_capacity(cfg.steps as usize);
    let mut evals = Vec::new();

    sink.checkpoint(&state.model)?;
    if cfg.steps == 0 {
        sink.traces(&trace, &evals)?;
        return Ok(TrainOutcome {
            state,
            trace,
            evals,
            stopped_early: false,
        });
    }
    evals.push(EvalRecord {
        step: 0,
        report: evaluate(&state.model, &cache, val, mode)?,
    });
    let mut best = evals[0].report.loss;
    let mut stale = 0;
    let mut stopped_early = false;
    let scale = 1.0 / cfg.accum as f64;

    for step in 1..=cfg.steps {
        let mut loss = 0.0;
        for _ in 0..cfg.accum {
            let b = stream.next_batch()?;
            let (logits, tape) = model_forward(&state.model, &cache, &b.graph, &b.tokens, mode)?;
            let (l, grad_logits) = cross_entropy_loss(&logits, &b.targets, &b.mask)?;
            loss += l * scale;
            let g = model_backward(&state.model, &tape, &grad_logits)?;
            state.grads.add_scaled(&g, scale);
        }
        if !loss.is_finite() {
            sink.traces(&trace, &evals)?;
            return Err(GwtError::NonFinite { name: "loss".into() });
        }
        let lr = lr_at(&schedule, step)?;
        let grad_norm = state.grad_norm();
        if let Err(e) = state.adam_step(lr) {
            sink.traces(&trace, &evals)?;
            return Err(e);
        }
        trace.push(StepMetrics {
            step,
            loss,
            lr,
            grad_norm,
        });

        if step % cfg.eval_every == 0 || step == cfg.steps {
            let report = evaluate(&state.model, &cache, val, mode)?;
            evals.push(EvalRecord { step, report });
            sink.checkpoint(&state.model)?;
            sink.traces(&trace, &evals)?;
            if report.loss < best {
                best = report.loss;
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        state,
        trace,
        evals,
        stopped_early,
    })
}

/// Builds the model, training stream and validation set from `cfg` and
/// runs [`train_loop`].
pub fn run_training(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.task_spec()?;
    let model = GwtModel::init(&cfg.model_config(), cfg.seed)?;
    let val = validation_set(cfg, &spec)?;
    let mut stream = TaskStream::new(spec, cfg.train_seed())?;
    train_loop(model, &mut stream, &val, cfg, out_dir)
}

/// The held-out examples used for validation and `eval`.
pub fn validation_set(cfg: &TrainConfig, spec: &TaskSpec) -> Result<Vec<TaskBatch>> {
    TaskStream::new(spec.clone(), cfg.validation_seed())?.take_batches(cfg.val_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            d: 8,
            k: 2,
            vocab: 8,
            n: 6,
            steps: 20,
            lr: 1e-2,
            warmup: 5,
            eval_every: 10,
            val_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_writes_only_initial_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { steps: 0, ..small() };
        let out = run_training(&cfg, Some(dir.path())).unwrap();
        assert!(out.trace.is_empty());
        assert!(dir.path().join(CHECKPOINT_FILE).exists());
        let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(csv, "step,loss,lr,grad_norm\n");
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let a = run_training(&small(), None).unwrap();
        let b = run_training(&small(), None).unwrap();
        assert_eq!(metrics_csv(&a.trace), metrics_csv(&b.trace));
        assert_eq!(a.state.model, b.state.model);
        assert_eq!(a.trace.len(), 20);
    }

    #[test]
    fn chebyshev_training_unsupported() {
        let cfg = TrainConfig {
            mode: "chebyshev".into(),
            ..small()
        };
        assert!(matches!(run_training(&cfg, None), Err(GwtError::UnsupportedMode(_))));
    }

    #[test]
    fn adam_step_zeroes_grads_and_counts() {
        let model = GwtModel::init(&small().model_config(), 0).unwrap();
        let mut st = TrainState::new(model.clone(), 0);
        st.grads.readout.set(0, 0, 1.0);
        st.adam_step(0.1).unwrap();
        assert_eq!(st.step, 1);
        assert_eq!(st.grad_norm(), 0.0);
        assert!((st.model.readout.get(0, 0) - (model.readout.get(0, 0) - 0.1)).abs() < 1e-6);
        assert_eq!(st.model.embed, model.embed);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let model = GwtModel::init(&small().model_config(), 0).unwrap();
        let mut st = TrainState::new(model, 0);
        st.grads.layers[0].ffn.b2[0] = f64::NAN;
        match st.adam_step(0.1) {
            Err(GwtError::NonFinite { name }) => assert_eq!(name, "layers.0.ffn.b2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn early_stopping_after_patience_stale_evals() {
        // Updates of size 1e-300 leave every parameter bit-identical.
        let cfg = TrainConfig {
            lr: 1e-300,
            steps: 200,
            eval_every: 1,
            patience: 2,
            ..small()
        };
        let out = run_training(&cfg, None).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.trace.len(), 2);
    }

    #[test]
    fn config_json_round_trip_and_unknown_keys() {
        let cfg = small();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);
        let bad = text.replacen('{', "{\"bogus\":1,", 1);
        assert!(TrainConfig::from_json(&bad).is_err());
    }
}
