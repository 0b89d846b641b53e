//! Central finite-difference check of the hand-written backward passes.
//!
//! The error for a tensor is `max_i |a_i − f_i| / max(max_i |a_i|, max_i |f_i|)`
//! with `a` the analytic and `f` the numeric gradient, so a sign flip reads
//! as 2 and an all-zero tensor as 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::{layer_backward, layer_forward, model_backward, model_forward, GwtLayer, GwtModel, ModelConfig};
use crate::cache::SpectralCache;
use crate::error::Result;
use crate::filter_bank::{wavelet_mix, wavelet_mix_backward, FilterBank, MixMode};
use crate::graph::{normalized_laplacian, random_graph, symmetrize, TokenGraph};
use crate::loss::cross_entropy_loss;
use crate::matrix::DenseMatrix;
use crate::spectral::{eigendecompose, EigenSystem, DEFAULT_TOL};

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOL_REL: f64 = 1e-4;

/// What to differentiate.
#[derive(Debug, Clone, PartialEq)]
pub enum GradTarget {
    /// Token model with a cross-entropy loss on random targets.
    Model {
        config: ModelConfig,
        n: usize,
        mode: MixMode,
    },
    /// One layer under the loss `Σ R ⊙ y` for a fixed random `R`; the input
    /// is checked as well.
    Layer {
        n: usize,
        d: usize,
        k: usize,
        mode: MixMode,
    },
    /// The mixer alone, same loss as `Layer`.
    Mix {
        n: usize,
        d: usize,
        k: usize,
        mode: MixMode,
    },
    /// No parameters at all.
    Empty,
}

impl GradTarget {
    /// `n=6, d=8, K=2`, two layers, vocab 11, exact mixing.
    pub fn default_model() -> Self {
        GradTarget::Model {
            config: ModelConfig {
                vocab: 11,
                d: 8,
                k: 2,
                layers: 2,
                ..ModelConfig::default()
            },
            n: 6,
            mode: MixMode::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub rel_err: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub step: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.rel_err <= self.tol)
    }

    pub fn failures(&self) -> Vec<&TensorCheck> {
        self.tensors
            .iter()
            .filter(|t| t.rel_err.is_nan() || t.rel_err > self.tol)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tensor,len,rel_err,max_abs_analytic,max_abs_numeric,pass\n");
        for t in &self.tensors {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{}\n",
                t.name,
                t.len,
                t.rel_err,
                t.max_abs_analytic,
                t.max_abs_numeric,
                t.rel_err <= self.tol
            ));
        }
        out
    }
}

type LossFn = Box<dyn Fn(&[Vec<f64>]) -> Result<f64>>;

struct Problem {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
    analytic: Vec<Vec<f64>>,
    loss: LossFn,
}

fn test_graph(n: usize, seed: u64) -> Result<TokenGraph> {
    let extra = random_graph(n, 0.3, seed)?;
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    edges.extend_from_slice(extra.edges());
    Ok(symmetrize(&TokenGraph::new(n, edges, None)?))
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}

fn bank_tensors(bank: &FilterBank) -> Vec<(String, Vec<f64>)> {
    let layer = GwtLayer {
        bank: bank.clone(),
        ffn: crate::block::FeedForward::zeros(bank.d(), 1),
    };
    layer
        .tensors("")
        .into_iter()
        .filter(|t| t.name.starts_with("bank."))
        .map(|t| (t.name, t.data.to_vec()))
        .collect()
}

fn load_bank(bank: &mut FilterBank, values: &[Vec<f64>]) {
    let mut dst: Vec<&mut [f64]> = vec![bank.alpha.as_mut_slice()];
    for f in &mut bank.filters {
        dst.extend(f.tensors_mut());
    }
    for (d, v) in dst.into_iter().zip(values) {
        d.copy_from_slice(v);
    }
}

fn spectral(graph: &TokenGraph) -> Result<(crate::graph::NormalizedLaplacian, EigenSystem)> {
    let l = normalized_laplacian(graph)?;
    let e = eigendecompose(&l, DEFAULT_TOL)?;
    Ok((l, e))
}

fn model_problem(config: &ModelConfig, n: usize, mode: MixMode, seed: u64) -> Result<Problem> {
    let model = GwtModel::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let graph = test_graph(n, seed)?;
    let tokens: Vec<usize> = (0..n).map(|_| rng.gen_range(0..config.vocab)).collect();
    let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..config.vocab)).collect();
    let mask = vec![true; n];
    let cache = SpectralCache::new();
    let (logits, tape) = model_forward(&model, &cache, &graph, &tokens, mode)?;
    let (_, grad_logits) = cross_entropy_loss(&logits, &targets, &mask)?;
    let grads = model_backward(&model, &tape, &grad_logits)?;
    let names = model.tensors().into_iter().map(|t| t.name).collect();
    let values = model.tensors().iter().map(|t| t.data.to_vec()).collect();
    let analytic = grads.tensors().iter().map(|t| t.data.to_vec()).collect();
    let loss: LossFn = Box::new(move |vals: &[Vec<f64>]| {
        let mut m = model.clone();
        for (d, v) in m.tensors_mut().into_iter().zip(vals) {
            d.copy_from_slice(v);
        }
        let (logits, _) = model_forward(&m, &cache, &graph, &tokens, mode)?;
        Ok(cross_entropy_loss(&logits, &targets, &mask)?.0)
    });
    Ok(Problem {
        names,
        values,
        analytic,
        loss,
    })
}

fn layer_problem(n: usize, d: usize, k: usize, mode: MixMode, seed: u64) -> Result<Problem> {
    let cfg = ModelConfig {
        vocab: 2,
        d,
        k,
        layers: 1,
        ..ModelConfig::default()
    };
    let layer = GwtModel::init(&cfg, seed)?.layers.remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A);
    let x = random_matrix(n, d, &mut rng);
    let r = random_matrix(n, d, &mut rng);
    let (l, eig) = spectral(&test_graph(n, seed)?)?;
    let (_, tape) = layer_forward(&layer, Some(&eig), Some(&l), &x, mode)?;
    let (gx, grads) = layer_backward(&layer, Some(&eig), &tape, &r)?;
    let mut names: Vec<String> = layer.tensors("").into_iter().map(|t| t.name).collect();
    let mut values: Vec<Vec<f64>> = layer.tensors("").iter().map(|t| t.data.to_vec()).collect();
    let mut analytic: Vec<Vec<f64>> = grads.tensors("").iter().map(|t| t.data.to_vec()).collect();
    names.push("x".into());
    values.push(x.as_slice().to_vec());
    analytic.push(gx.into_vec());
    let loss: LossFn = Box::new(move |vals: &[Vec<f64>]| {
        let mut lay = layer.clone();
        for (dst, v) in lay.tensors_mut().into_iter().zip(vals) {
            dst.copy_from_slice(v);
        }
        let x = DenseMatrix::new(n, d, vals[vals.len() - 1].clone())?;
        let (y, _) = layer_forward(&lay, Some(&eig), Some(&l), &x, mode)?;
        Ok(y.hadamard(&r).sum())
    });
    Ok(Problem {
        names,
        values,
        analytic,
        loss,
    })
}

fn mix_problem(n: usize, d: usize, k: usize, mode: MixMode, seed: u64) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = FilterBank::init(k, d, crate::filter_bank::DEFAULT_HIDDEN, &mut rng)?;
    bank.alpha = random_matrix(k, d, &mut rng);
    let x = random_matrix(n, d, &mut rng);
    let r = random_matrix(n, d, &mut rng);
    let (l, eig) = spectral(&test_graph(n, seed)?)?;
    let grads = wavelet_mix_backward(&bank, Some(&eig), &x, mode, &r)?;
    let (mut names, mut values): (Vec<String>, Vec<Vec<f64>>) = bank_tensors(&bank).into_iter().unzip();
    let gbank = FilterBank {
        filters: grads.filters,
        alpha: grads.alpha,
    };
    let mut analytic: Vec<Vec<f64>> = bank_tensors(&gbank).into_iter().map(|(_, v)| v).collect();
    names.push("x".into());
    values.push(x.as_slice().to_vec());
    analytic.push(grads.x.into_vec());
    let loss: LossFn = Box::new(move |vals: &[Vec<f64>]| {
        let mut b = bank.clone();
        load_bank(&mut b, vals);
        let x = DenseMatrix::new(n, d, vals[vals.len() - 1].clone())?;
        Ok(wavelet_mix(&b, Some(&eig), &x, mode, Some(&l))?.hadamard(&r).sum())
    });
    Ok(Problem {
        names,
        values,
        analytic,
        loss,
    })
}

fn build(target: &GradTarget, seed: u64) -> Result<Problem> {
    match target {
        GradTarget::Model { config, n, mode } => model_problem(config, *n, *mode, seed),
        GradTarget::Layer { n, d, k, mode } => layer_problem(*n, *d, *k, *mode, seed),
        GradTarget::Mix { n, d, k, mode } => mix_problem(*n, *d, *k, *mode, seed),
        GradTarget::Empty => Ok(Problem {
            names: Vec::new(),
            values: Vec::new(),
            analytic: Vec::new(),
            loss: Box::new(|_| Ok(0.0)),
        }),
    }
}

/// Compares analytic gradients with central differences of step `step`.
pub fn grad_check(target: &GradTarget, seed: u64, step: f64, tol: f64) -> Result<GradCheckReport> {
    grad_check_with(target, seed, step, tol, |_, _| {})
}

/// As [`grad_check`], with `corrupt` applied to each analytic gradient
/// tensor before comparison.
pub fn grad_check_with(
    target: &GradTarget,
    seed: u64,
    step: f64,
    tol: f64,
    corrupt: impl Fn(&str, &mut [f64]),
) -> Result<GradCheckReport> {
    let mut p = build(target, seed)?;
    for (name, g) in p.names.iter().zip(p.analytic.iter_mut()) {
        corrupt(name, g);
    }
    let mut tensors = Vec::with_capacity(p.names.len());
    let mut vals = p.values.clone();
    for t in 0..vals.len() {
        let mut numeric = vec![0.0; vals[t].len()];
        for i in 0..vals[t].len() {
            let orig = vals[t][i];
            vals[t][i] = orig + step;
            let plus = (p.loss)(&vals)?;
            vals[t][i] = orig - step;
            let minus = (p.loss)(&vals)?;
            vals[t][i] = orig;
            numeric[i] = (plus - minus) / (2.0 * step);
        }
        tensors.push(compare(&p.names[t], &p.analytic[t], &numeric));
    }
    Ok(GradCheckReport { tol, step, tensors })
}

fn compare(name: &str, analytic: &[f64], numeric: &[f64]) -> TensorCheck {
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (a, f) = (max_abs(analytic), max_abs(numeric));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.max(f);
    let rel_err = if diff == 0.0 {
        0.0
    } else if scale > 0.0 {
        diff / scale
    } else {
        f64::INFINITY
    };
    TensorCheck {
        name: name.to_string(),
        len: analytic.len(),
        rel_err,
        max_abs_analytic: a,
        max_abs_numeric: f,
    }
}
