//! Learnable spectral filter bank and the wavelet mixing operator
//!
//! ```text
//! Y = Σ_k U g_k(Λ) Uᵀ X diag(α_k)
//! ```
//!
//! Each `g_k` is a 1 → H → 1 MLP (tanh hidden, softplus head) evaluated on
//! eigenvalues. In spectral modes the K filters and mixing vectors collapse
//! into one `m × d` weight table `W[i][j] = Σ_k g_k(λ_i) α_k[j]`, so the
//! cost is one projection, one elementwise product and one lift no matter
//! how many scales there are.

use std::fmt::Write;

use rand::Rng;

use crate::chebyshev::{apply_column_coeffs, chebyshev_nodes, coefficients_from_samples};
use crate::error::{invalid, GwtError, Result};
use crate::graph::NormalizedLaplacian;
use crate::matrix::DenseMatrix;
use crate::spectral::{lift, project, EigenSystem};

pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_CHEB_ORDER: usize = 16;
pub const RESPONSE_SAMPLES: usize = 512;

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `g(λ) = softplus(w2 · tanh(w1 λ + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMlp {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl FilterMlp {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w1: vec![0.0; hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Uniform `±1/√fan_in` per layer.
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        let outer = 1.0 / (hidden as f64).sqrt();
        let mut draw = |bound: f64| rng.gen_range(-bound..=bound);
        let w1 = (0..hidden).map(|_| draw(1.0)).collect();
        let b1 = (0..hidden).map(|_| draw(1.0)).collect();
        let w2 = (0..hidden).map(|_| draw(outer)).collect();
        let b2 = draw(outer);
        Self { w1, b1, w2, b2 }
    }

    /// A filter that returns `value` (> 0) for every λ, up to rounding.
    pub fn constant(hidden: usize, value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return invalid("a softplus filter can only be constant at a positive value");
        }
        Ok(Self {
            b2: value.exp_m1().ln(),
            ..Self::zeros(hidden)
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.w1.len()
    }

    pub fn is_finite(&self) -> bool {
        self.b2.is_finite() && self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite())
    }

    #[inline]
    fn pre_activation(&self, lambda: f64) -> f64 {
        let mut s = self.b2;
        for h in 0..self.w1.len() {
            s += self.w2[h] * (self.w1[h] * lambda + self.b1[h]).tanh();
        }
        s
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, lambda: f64) -> f64 {
        softplus(self.pre_activation(lambda.clamp(0.0, 2.0)))
    }

    /// `grad += scale · ∂g(λ)/∂θ`.
    pub(crate) fn accumulate_grad(&self, lambda: f64, scale: f64, grad: &mut FilterMlp) {
        let lambda = lambda.clamp(0.0, 2.0);
        let mut s = self.b2;
        let mut act = Vec::with_capacity(self.w1.len());
        for h in 0..self.w1.len() {
            let a = (self.w1[h] * lambda + self.b1[h]).tanh();
            act.push(a);
            s += self.w2[h] * a;
        }
        let ds = scale * sigmoid(s);
        grad.b2 += ds;
        for (h, a) in act.into_iter().enumerate() {
            grad.w2[h] += ds * a;
            let dz = ds * self.w2[h] * (1.0 - a * a);
            grad.b1[h] += dz;
            grad.w1[h] += dz * lambda;
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, std::slice::from_ref(&self.b2)]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }
}

pub const FILTER_TENSOR_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() {
        Ok(())
    } else {
        invalid("λ must be finite")
    }
}

fn check_filter(f: &FilterMlp) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(GwtError::InvalidState("filter parameters are not finite".into()))
    }
}

/// Evaluates a filter; λ slightly outside `[0, 2]` is clamped.
pub fn filter_eval(f: &FilterMlp, lambda: f64) -> Result<f64> {
    check_filter(f)?;
    check_lambda(lambda)?;
    Ok(f.eval_unchecked(lambda))
}

/// Value plus gradients with respect to every parameter (returned in a
/// `FilterMlp`-shaped container).
pub fn filter_eval_grad(f: &FilterMlp, lambda: f64) -> Result<(f64, FilterMlp)> {
    check_filter(f)?;
    check_lambda(lambda)?;
    let mut grad = FilterMlp::zeros(f.hidden_width());
    f.accumulate_grad(lambda, 1.0, &mut grad);
    Ok((f.eval_unchecked(lambda), grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixMode {
    Exact,
    /// Uses only the `m` smallest eigenpairs.
    Truncated(usize),
    /// Polynomial approximation of the given order; needs no eigenvectors.
    Chebyshev(usize),
}

impl MixMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MixMode::Truncated(0) => invalid("truncated mode needs m >= 1"),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MixMode::Exact => "exact".into(),
            MixMode::Truncated(m) => format!("truncated({m})"),
            MixMode::Chebyshev(p) => format!("chebyshev({p})"),
        }
    }
}

/// K filters plus their per-channel mixing coefficients (`alpha` is `K × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub filters: Vec<FilterMlp>,
    pub alpha: DenseMatrix,
}

impl FilterBank {
    /// Seeded filters, every α entry `1/K`.
    pub fn init(k: usize, d: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if k == 0 || d == 0 || hidden == 0 {
            return invalid("filter bank needs k, d and hidden width >= 1");
        }
        let filters = (0..k).map(|_| FilterMlp::init(hidden, rng)).collect();
        let alpha = DenseMatrix::from_fn(k, d, |_, _| 1.0 / k as f64);
        Ok(Self { filters, alpha })
    }

    pub fn zeros(k: usize, d: usize, hidden: usize) -> Self {
        Self {
            filters: vec![FilterMlp::zeros(hidden); k],
            alpha: DenseMatrix::zeros(k, d),
        }
    }

    pub fn k(&self) -> usize {
        self.filters.len()
    }

    pub fn d(&self) -> usize {
        self.alpha.cols()
    }

    pub fn hidden_width(&self) -> usize {
        self.filters.first().map_or(0, FilterMlp::hidden_width)
    }

    pub fn check(&self) -> Result<()> {
        if self.filters.is_empty() || self.alpha.rows() != self.filters.len() {
            return Err(GwtError::InvalidState("alpha rows must match the filter count".into()));
        }
        for f in &self.filters {
            check_filter(f)?;
        }
        if !self.alpha.is_finite() {
            return Err(GwtError::InvalidState("alpha is not finite".into()));
        }
        Ok(())
    }

    /// `W[i][j] = Σ_k g_k(λ_i) α_k[j]` over the given eigenvalues.
    fn spectral_weights(&self, lambda: &[f64]) -> DenseMatrix {
        let mut w = DenseMatrix::zeros(lambda.len(), self.d());
        for (k, f) in self.filters.iter().enumerate() {
            let alpha = self.alpha.row(k);
            for (i, &l) in lambda.iter().enumerate() {
                let g = f.eval_unchecked(l);
                for (o, a) in w.row_mut(i).iter_mut().zip(alpha) {
                    *o += g * a;
                }
            }
        }
        w
    }

    /// CSV of filter responses on a uniform grid over `[0, 2]`.
    pub fn response_csv(&self) -> String {
        let mut out = String::from("lambda");
        for k in 1..=self.k() {
            let _ = write!(out, ",g_{k}");
        }
        out.push('\n');
        for i in 0..RESPONSE_SAMPLES {
            let lambda = 2.0 * i as f64 / (RESPONSE_SAMPLES - 1) as f64;
            let _ = write!(out, "{lambda}");
            for f in &self.filters {
                let _ = write!(out, ",{}", f.eval_unchecked(lambda));
            }
            out.push('\n');
        }
        out
    }
}

fn spectral_pairs(eig: Option<&EigenSystem>, mode: MixMode) -> Result<(&EigenSystem, usize)> {
    let eig = eig.ok_or_else(|| GwtError::InvalidArgument(format!("{} mode needs an eigensystem", mode.label())))?;
    let m = match mode {
        MixMode::Truncated(m) => {
            if m == 0 || m > eig.m() {
                return invalid(format!("truncated({m}) but the eigensystem has {} pairs", eig.m()));
            }
            m
        }
        _ => eig.m(),
    };
    Ok((eig, m))
}

fn check_rows(x: &DenseMatrix, bank: &FilterBank, n: usize) -> Result<()> {
    if x.rows() != n {
        return invalid(format!("signal has {} rows, graph has {n} nodes", x.rows()));
    }
    if x.cols() != bank.d() {
        return invalid(format!(
            "signal has {} columns, bank expects d = {}",
            x.cols(),
            bank.d()
        ));
    }
    Ok(())
}

/// Forward wavelet mixing.
pub fn wavelet_mix(
    bank: &FilterBank,
    eig: Option<&EigenSystem>,
    x: &DenseMatrix,
    mode: MixMode,
    l: Option<&NormalizedLaplacian>,
) -> Result<DenseMatrix> {
    bank.check()?;
    match mode {
        MixMode::Exact | MixMode::Truncated(_) => {
            let (eig, m) = spectral_pairs(eig, mode)?;
            check_rows(x, bank, eig.n())?;
            let w = bank.spectral_weights(&eig.lambda()[..m]);
            let xhat = project(eig.u(), m, x);
            Ok(lift(eig.u(), m, &w.hadamard(&xhat)))
        }
        MixMode::Chebyshev(order) => {
            let l = l.ok_or_else(|| GwtError::InvalidArgument("chebyshev mode needs the Laplacian".into()))?;
            check_rows(x, bank, l.n())?;
            let nodes = chebyshev_nodes(order);
            // combined[p][j] = Σ_k c_{k,p} α_k[j]
            let mut combined = vec![vec![0.0; bank.d()]; order + 1];
            for (k, f) in bank.filters.iter().enumerate() {
                let samples: Vec<f64> = nodes.iter().map(|&v| f.eval_unchecked(v)).collect();
                let coeffs = coefficients_from_samples(&samples);
                for (row, c) in combined.iter_mut().zip(coeffs) {
                    for (o, a) in row.iter_mut().zip(bank.alpha.row(k)) {
                        *o += c * a;
                    }
                }
            }
            Ok(apply_column_coeffs(l, &combined, x))
        }
    }
}

/// Gradients of a scalar loss through [`wavelet_mix`].
#[derive(Debug, Clone)]
pub struct MixGradients {
    pub x: DenseMatrix,
    pub alpha: DenseMatrix,
    pub filters: Vec<FilterMlp>,
}

/// Reverse pass for the spectral modes. `U` and `Λ` are constants.
pub fn wavelet_mix_backward(
    bank: &FilterBank,
    eig: Option<&EigenSystem>,
    x: &DenseMatrix,
    mode: MixMode,
    upstream: &DenseMatrix,
) -> Result<MixGradients> {
    if let MixMode::Chebyshev(_) = mode {
        return Err(GwtError::UnsupportedMode(
            "backward through the Chebyshev path is not available; train with exact or truncated".into(),
        ));
    }
    bank.check()?;
    let (eig, m) = spectral_pairs(eig, mode)?;
    check_rows(x, bank, eig.n())?;
    if upstream.shape() != x.shape() {
        return invalid("upstream gradient shape differs from the input");
    }
    let lambda = &eig.lambda()[..m];
    let xhat = project(eig.u(), m, x);
    let ghat = project(eig.u(), m, upstream);
    let w = bank.spectral_weights(lambda);
    let grad_x = lift(eig.u(), m, &w.hadamard(&ghat));
    // P[i][j] = xhat[i][j] · ghat[i][j] = ∂loss/∂W[i][j]
    let p = xhat.hadamard(&ghat);

    let (k, d) = (bank.k(), bank.d());
    let mut grad_alpha = DenseMatrix::zeros(k, d);
    let mut grad_filters = vec![FilterMlp::zeros(bank.hidden_width()); k];
    for (kk, f) in bank.filters.iter().enumerate() {
        let alpha = bank.alpha.row(kk);
        for (i, &l) in lambda.iter().enumerate() {
            let g = f.eval_unchecked(l);
            let prow = p.row(i);
            for (ga, pv) in grad_alpha.row_mut(kk).iter_mut().zip(prow) {
                *ga += g * pv;
            }
            let dg: f64 = prow.iter().zip(alpha).map(|(pv, a)| pv * a).sum();
            if dg != 0.0 {
                f.accumulate_grad(l, dg, &mut grad_filters[kk]);
            }
        }
    }
    Ok(MixGradients {
        x: grad_x,
        alpha: grad_alpha,
        filters: grad_filters,
    })
}
