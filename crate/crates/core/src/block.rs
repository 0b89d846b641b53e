//! The wavelet layer (mixing, residual, feed-forward, residual) and the
//! embedding → layers → readout model used for the toy tasks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{SpectralCache, SpectralEntry};
use crate::error::{invalid, GwtError, Result};
use crate::filter_bank::{wavelet_mix, wavelet_mix_backward, FilterBank, MixMode, DEFAULT_HIDDEN, FILTER_TENSOR_NAMES};
use crate::graph::{NormalizedLaplacian, TokenGraph};
use crate::matrix::DenseMatrix;
use crate::spectral::EigenSystem;

/// Position-wise `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl FeedForward {
    pub fn zeros(d: usize, f: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(d, f),
            b1: vec![0.0; f],
            w2: DenseMatrix::zeros(f, d),
            b2: vec![0.0; d],
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(d: usize, f: usize, rng: &mut impl Rng) -> Self {
        let (a, b) = (1.0 / (d as f64).sqrt(), 1.0 / (f as f64).sqrt());
        Self {
            w1: DenseMatrix::from_fn(d, f, |_, _| rng.gen_range(-a..=a)),
            b1: vec![0.0; f],
            w2: DenseMatrix::from_fn(f, d, |_, _| rng.gen_range(-b..=b)),
            b2: vec![0.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.w1.rows()
    }

    pub fn width(&self) -> usize {
        self.w1.cols()
    }

    fn pre_activation(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut h = x.matmul(&self.w1);
        for i in 0..h.rows() {
            for (v, b) in h.row_mut(i).iter_mut().zip(&self.b1) {
                *v += b;
            }
        }
        h
    }

    fn output(&self, hidden: &DenseMatrix) -> DenseMatrix {
        let mut y = hidden.matmul(&self.w2);
        for i in 0..y.rows() {
            for (v, b) in y.row_mut(i).iter_mut().zip(&self.b2) {
                *v += b;
            }
        }
        y
    }
}

fn relu(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        *v = v.max(0.0);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwtLayer {
    pub bank: FilterBank,
    pub ffn: FeedForward,
}

impl GwtLayer {
    pub fn d(&self) -> usize {
        self.bank.d()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            bank: FilterBank::zeros(self.bank.k(), self.bank.d(), self.bank.hidden_width()),
            ffn: FeedForward::zeros(self.ffn.d(), self.ffn.width()),
        }
    }

    /// Parameter tensors with names prefixed by `prefix`.
    pub fn tensors(&self, prefix: &str) -> Vec<TensorRef<'_>> {
        let mut out = vec![TensorRef {
            name: format!("{prefix}bank.alpha"),
            shape: vec![self.bank.alpha.rows(), self.bank.alpha.cols()],
            data: self.bank.alpha.as_slice(),
        }];
        for (k, f) in self.bank.filters.iter().enumerate() {
            for (name, data) in FILTER_TENSOR_NAMES.iter().zip(f.tensors()) {
                out.push(TensorRef {
                    name: format!("{prefix}bank.filters.{k}.{name}"),
                    shape: vec![data.len()],
                    data,
                });
            }
        }
        let ffn = &self.ffn;
        out.push(TensorRef {
            name: format!("{prefix}ffn.w1"),
            shape: vec![ffn.w1.rows(), ffn.w1.cols()],
            data: ffn.w1.as_slice(),
        });
        out.push(TensorRef {
            name: format!("{prefix}ffn.b1"),
            shape: vec![ffn.b1.len()],
            data: &ffn.b1,
        });
        out.push(TensorRef {
            name: format!("{prefix}ffn.w2"),
            shape: vec![ffn.w2.rows(), ffn.w2.cols()],
            data: ffn.w2.as_slice(),
        });
        out.push(TensorRef {
            name: format!("{prefix}ffn.b2"),
            shape: vec![ffn.b2.len()],
            data: &ffn.b2,
        });
        out
    }

    /// Mutable views in the same order as [`GwtLayer::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.bank.alpha.as_mut_slice()];
        for f in &mut self.bank.filters {
            out.extend(f.tensors_mut());
        }
        out.push(self.ffn.w1.as_mut_slice());
        out.push(&mut self.ffn.b1);
        out.push(self.ffn.w2.as_mut_slice());
        out.push(&mut self.ffn.b2);
        out
    }

    fn check(&self) -> Result<()> {
        if self.bank.d() != self.ffn.d() || self.ffn.w2.cols() != self.ffn.d() {
            return Err(GwtError::InvalidState(
                "filter bank and feed-forward widths disagree".into(),
            ));
        }
        Ok(())
    }
}

/// Intermediates saved by [`layer_forward`].
#[derive(Debug, Clone)]
pub struct LayerTape {
    pub mode: MixMode,
    /// Layer input.
    pub x: DenseMatrix,
    /// Mixer output.
    pub mixed: DenseMatrix,
    /// `x + mixed`, the feed-forward input.
    pub residual: DenseMatrix,
    /// Feed-forward pre-activations.
    pub hidden_pre: DenseMatrix,
}

/// `r = x + mix(x)`, `y = r + ffn(r)`.
pub fn layer_forward(
    layer: &GwtLayer,
    eig: Option<&EigenSystem>,
    l: Option<&NormalizedLaplacian>,
    x: &DenseMatrix,
    mode: MixMode,
) -> Result<(DenseMatrix, LayerTape)> {
    layer.check()?;
    let mixed = wavelet_mix(&layer.bank, eig, x, mode, l)?;
    let residual = x.add(&mixed);
    let hidden_pre = layer.ffn.pre_activation(&residual);
    let y = residual.add(&layer.ffn.output(&relu(&hidden_pre)));
    let tape = LayerTape {
        mode,
        x: x.clone(),
        mixed,
        residual,
        hidden_pre,
    };
    Ok((y, tape))
}

/// Reverse pass through both residual branches. Returns `(∂x, ∂params)`
/// with the parameter gradients in a layer-shaped container.
pub fn layer_backward(
    layer: &GwtLayer,
    eig: Option<&EigenSystem>,
    tape: &LayerTape,
    upstream: &DenseMatrix,
) -> Result<(DenseMatrix, GwtLayer)> {
    layer.check()?;
    if upstream.shape() != tape.x.shape() || tape.hidden_pre.cols() != layer.ffn.width() {
        return Err(GwtError::InvalidState(
            "tape does not match this layer or upstream shape".into(),
        ));
    }
    let ffn = &layer.ffn;
    let hidden = relu(&tape.hidden_pre);

    let grad_w2 = hidden.t_matmul(upstream);
    let grad_b2 = upstream.column_sums();
    let mut grad_hidden = upstream.matmul_t(&ffn.w2);
    for (g, pre) in grad_hidden.as_mut_slice().iter_mut().zip(tape.hidden_pre.as_slice()) {
        if *pre <= 0.0 {
            *g = 0.0;
        }
    }
    let grad_w1 = tape.residual.t_matmul(&grad_hidden);
    let grad_b1 = grad_hidden.column_sums();
    let grad_residual = upstream.add(&grad_hidden.matmul_t(&ffn.w1));

    let mix = wavelet_mix_backward(&layer.bank, eig, &tape.x, tape.mode, &grad_residual).map_err(|e| match e {
        GwtError::InvalidArgument(msg) => GwtError::InvalidState(msg),
        other => other,
    })?;
    let grad_x = grad_residual.add(&mix.x);
    let grads = GwtLayer {
        bank: FilterBank {
            filters: mix.filters,
            alpha: mix.alpha,
        },
        ffn: FeedForward {
            w1: grad_w1,
            b1: grad_b1,
            w2: grad_w2,
            b2: grad_b2,
        },
    };
    Ok((grad_x, grads))
}

/// Shape hyperparameters of a [`GwtModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: usize,
    pub d: usize,
    pub k: usize,
    pub layers: usize,
    /// Feed-forward width as a multiple of `d`.
    pub ffn_mult: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab: 32,
            d: 32,
            k: 4,
            layers: 1,
            ffn_mult: 4,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return invalid("vocab must be at least 2");
        }
        if self.d == 0 || self.k == 0 || self.ffn_mult == 0 || self.hidden == 0 {
            return invalid("d, k, ffn_mult and hidden must be positive");
        }
        Ok(())
    }
}

/// Embedding table, stacked layers, linear readout.
#[derive(Debug, Clone, PartialEq)]
pub struct GwtModel {
    pub embed: DenseMatrix,
    pub layers: Vec<GwtLayer>,
    pub readout: DenseMatrix,
}

/// Name, shape and values of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl GwtModel {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = DenseMatrix::from_fn(cfg.vocab, cfg.d, |_, _| rng.gen_range(-1.0..=1.0));
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let bank = FilterBank::init(cfg.k, cfg.d, cfg.hidden, &mut rng)?;
            let ffn = FeedForward::init(cfg.d, cfg.d * cfg.ffn_mult, &mut rng);
            layers.push(GwtLayer { bank, ffn });
        }
        let r = 1.0 / (cfg.d as f64).sqrt();
        let readout = DenseMatrix::from_fn(cfg.d, cfg.vocab, |_, _| rng.gen_range(-r..=r));
        Ok(Self { embed, layers, readout })
    }

    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layer = GwtLayer {
            bank: FilterBank::zeros(cfg.k, cfg.d, cfg.hidden),
            ffn: FeedForward::zeros(cfg.d, cfg.d * cfg.ffn_mult),
        };
        Ok(Self {
            embed: DenseMatrix::zeros(cfg.vocab, cfg.d),
            layers: vec![layer; cfg.layers],
            readout: DenseMatrix::zeros(cfg.d, cfg.vocab),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embed: DenseMatrix::zeros(self.embed.rows(), self.embed.cols()),
            layers: self.layers.iter().map(GwtLayer::zeros_like).collect(),
            readout: DenseMatrix::zeros(self.readout.rows(), self.readout.cols()),
        }
    }

    pub fn vocab(&self) -> usize {
        self.embed.rows()
    }

    pub fn d(&self) -> usize {
        self.embed.cols()
    }

    pub fn config(&self) -> ModelConfig {
        let first = self.layers.first();
        ModelConfig {
            vocab: self.vocab(),
            d: self.d(),
            k: first.map_or(1, |l| l.bank.k()),
            layers: self.layers.len(),
            ffn_mult: first.map_or(4, |l| l.ffn.width() / self.d().max(1)),
            hidden: first.map_or(DEFAULT_HIDDEN, |l| l.bank.hidden_width()),
        }
    }

    /// Every parameter tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![TensorRef {
            name: "embed".into(),
            shape: vec![self.embed.rows(), self.embed.cols()],
            data: self.embed.as_slice(),
        }];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.tensors(&format!("layers.{i}.")));
        }
        out.push(TensorRef {
            name: "readout".into(),
            shape: vec![self.readout.rows(), self.readout.cols()],
            data: self.readout.as_slice(),
        });
        out
    }

    /// Mutable views in the same order as [`GwtModel::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embed.as_mut_slice()];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(self.readout.as_mut_slice());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// `self += scale · other` over every tensor.
    pub fn add_scaled(&mut self, other: &GwtModel, scale: f64) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.iter_mut().zip(s.data) {
                *a += scale * b;
            }
        }
    }
}

/// Saved state of a [`model_forward`] call.
#[derive(Debug, Clone)]
pub struct ModelTape {
    pub tokens: Vec<usize>,
    pub layers: Vec<LayerTape>,
    pub last_hidden: DenseMatrix,
    pub spectrum: Arc<SpectralEntry>,
}

/// Embedding lookup, then the layers, then the readout. The graph's
/// Laplacian and (for spectral modes) eigensystem come from `cache`.
pub fn model_forward(
    model: &GwtModel,
    cache: &SpectralCache,
    graph: &TokenGraph,
    tokens: &[usize],
    mode: MixMode,
) -> Result<(DenseMatrix, ModelTape)> {
    mode.validate()?;
    if tokens.len() != graph.n() {
        return invalid(format!("{} tokens for a {}-node graph", tokens.len(), graph.n()));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= model.vocab()) {
        return invalid(format!("token id {bad} out of range for vocab {}", model.vocab()));
    }
    let spectrum = cache.get(graph)?;
    let eig = match mode {
        MixMode::Chebyshev(_) => None,
        _ => Some(spectrum.eigensystem()?),
    };
    let lap = Some(spectrum.laplacian());
    let mut x = model.embed.select_rows(tokens);
    let mut tapes = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let (y, tape) = layer_forward(layer, eig, lap, &x, mode)?;
        tapes.push(tape);
        x = y;
    }
    let logits = x.matmul(&model.readout);
    let tape = ModelTape {
        tokens: tokens.to_vec(),
        layers: tapes,
        last_hidden: x,
        spectrum,
    };
    Ok((logits, tape))
}

/// Gradients of a scalar loss with respect to every parameter, given
/// `∂loss/∂logits`.
pub fn model_backward(model: &GwtModel, tape: &ModelTape, grad_logits: &DenseMatrix) -> Result<GwtModel> {
    if grad_logits.shape() != (tape.tokens.len(), model.vocab()) || tape.layers.len() != model.layers.len() {
        return Err(GwtError::InvalidState(
            "tape does not match model or logits shape".into(),
        ));
    }
    let mut grads = model.zeros_like();
    grads.readout = tape.last_hidden.t_matmul(grad_logits);
    let mut g = grad_logits.matmul_t(&model.readout);
    let eig = match tape.layers.first().map(|t| t.mode) {
        Some(MixMode::Chebyshev(_)) | None => None,
        Some(_) => Some(tape.spectrum.eigensystem()?),
    };
    for (i, (layer, lt)) in model.layers.iter().zip(&tape.layers).enumerate().rev() {
        let (gx, lg) = layer_backward(layer, eig, lt, &g)?;
        grads.layers[i] = lg;
        g = gx;
    }
    for (pos, &tok) in tape.tokens.iter().enumerate() {
        for (dst, src) in grads.embed.row_mut(tok).iter_mut().zip(g.row(pos)) {
            *dst += src;
        }
    }
    Ok(grads)
}
