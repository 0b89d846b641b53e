//! Seeded synthetic sequence tasks.
//!
//! The last vocabulary id is reserved as the MASK token for every task, so
//! content tokens are drawn from `0..vocab-1`.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::parse_conllu;
use crate::error::{invalid, GwtError, Result};
use crate::graph::{build_chain_graph, TokenGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Reproduce every input token.
    Copy,
    /// Position `i` predicts input token `n-1-i`.
    Reverse,
    /// Recover the tokens hidden behind MASK. Sequences are made of short
    /// runs of repeated tokens, so hidden tokens are predictable from their
    /// graph neighbourhood.
    MaskedRecovery,
}

impl FromStr for TaskKind {
    type Err = GwtError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(Self::Copy),
            "reverse" => Ok(Self::Reverse),
            "masked_recovery" => Ok(Self::MaskedRecovery),
            other => invalid(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum GraphSource {
    Chain,
    /// Parsed sentences with at least two tokens.
    Parsed(Arc<Vec<TokenGraph>>),
}

impl GraphSource {
    pub fn from_conllu_text(text: &str) -> Result<Self> {
        let graphs: Vec<TokenGraph> = parse_conllu(text)?.into_iter().filter(|g| g.n() >= 2).collect();
        if graphs.is_empty() {
            return invalid("CoNLL-U source has no sentence with at least two tokens");
        }
        Ok(Self::Parsed(Arc::new(graphs)))
    }

    pub fn from_conllu_file(path: &Path) -> Result<Self> {
        Self::from_conllu_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Sequence length for chain graphs; parsed graphs bring their own.
    pub n: usize,
    pub vocab: usize,
    pub mask_rate: f64,
    pub graph_source: GraphSource,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("task sequences need n >= 2");
        }
        if self.vocab < 2 {
            return invalid("task vocab must be at least 2");
        }
        if self.kind == TaskKind::MaskedRecovery && !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return invalid("mask_rate must lie in (0, 1)");
        }
        if let GraphSource::Parsed(g) = &self.graph_source {
            if g.iter().all(|g| g.n() < 2) {
                return invalid("CoNLL-U source has no sentence with at least two tokens");
            }
        }
        Ok(())
    }

    pub fn mask_id(&self) -> usize {
        self.vocab - 1
    }

    /// `floor(rate · n)`, at least one.
    pub fn masked_count(&self, n: usize) -> usize {
        ((self.mask_rate * n as f64).floor() as usize).clamp(1, n)
    }
}

#[derive(Debug, Clone)]
pub struct TaskBatch {
    pub graph: TokenGraph,
    pub tokens: Vec<usize>,
    pub targets: Vec<usize>,
    /// Positions that count towards the loss.
    pub mask: Vec<bool>,
}

fn run_sequence(n: usize, symbols: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let tok = rng.gen_range(0..symbols);
        let len = rng.gen_range(2..=4);
        for _ in 0..len.min(n - out.len()) {
            out.push(tok);
        }
    }
    out
}

/// One example, fully determined by `(spec, seed)`.
pub fn gen_task_batch(spec: &TaskSpec, seed: u64) -> Result<TaskBatch> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = match &spec.graph_source {
        GraphSource::Chain => build_chain_graph(spec.n)?,
        GraphSource::Parsed(graphs) => {
            let usable: Vec<&TokenGraph> = graphs.iter().filter(|g| g.n() >= 2).collect();
            usable[rng.gen_range(0..usable.len())].clone()
        }
    };
    let n = graph.n();
    let symbols = (spec.vocab - 1).max(1);
    let batch = match spec.kind {
        TaskKind::Copy => {
            let tokens: Vec<usize> = (0..n).map(|_| rng.gen_range(0..symbols)).collect();
            TaskBatch {
                targets: tokens.clone(),
                tokens,
                mask: vec![true; n],
                graph,
            }
        }
        TaskKind::Reverse => {
            let tokens: Vec<usize> = (0..n).map(|_| rng.gen_range(0..symbols)).collect();
            let targets = tokens.iter().rev().copied().collect();
            TaskBatch {
                tokens,
                targets,
                mask: vec![true; n],
                graph,
            }
        }
        TaskKind::MaskedRecovery => {
            let original = run_sequence(n, symbols, &mut rng);
            let picks = rand::seq::index::sample(&mut rng, n, spec.masked_count(n));
            let mut tokens = original.clone();
            let mut mask = vec![false; n];
            for i in picks.iter() {
                tokens[i] = spec.mask_id();
                mask[i] = true;
            }
            TaskBatch {
                tokens,
                targets: original,
                mask,
                graph,
            }
        }
    };
    Ok(batch)
}

/// Endless seeded stream of examples.
#[derive(Debug, Clone)]
pub struct TaskStream {
    spec: TaskSpec,
    rng: ChaCha8Rng,
}

impl TaskStream {
    pub fn new(spec: TaskSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn next_batch(&mut self) -> Result<TaskBatch> {
        let seed = self.rng.next_u64();
        gen_task_batch(&self.spec, seed)
    }

    pub fn take_batches(&mut self, count: usize) -> Result<Vec<TaskBatch>> {
        (0..count).map(|_| self.next_batch()).collect()
    }
}
