//! Chebyshev expansion of spectral filters on `[0, 2]`.
//!
//! Filters are expanded in `T_p(λ - 1)` (the normalized-Laplacian spectrum
//! rescaled onto `[-1, 1]`) and applied to node signals with the three-term
//! recurrence, which only needs sparse products with `L`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::graph::NormalizedLaplacian;
use crate::matrix::DenseMatrix;

/// Spectral bound used for rescaling: fixed at the normalized-Laplacian
/// maximum so a fitted filter means the same thing on every graph.
pub const LAMBDA_MAX: f64 = 2.0;

/// Number of uniform points used to report the fit error.
pub const ERROR_PROBES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevFilter {
    coeffs: Vec<f64>,
}

impl ChebyshevFilter {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return invalid("a Chebyshev filter needs at least one coefficient");
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("Chebyshev coefficients must be finite");
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn lambda_max(&self) -> f64 {
        LAMBDA_MAX
    }

    /// Clenshaw evaluation of the expansion at `lambda`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let x = 2.0 * lambda / LAMBDA_MAX - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs[0]
    }
}

#[derive(Debug, Clone)]
pub struct ChebyshevFit {
    pub filter: ChebyshevFilter,
    /// Max |expansion − filter| over [`ERROR_PROBES`] uniform points in `[0, 2]`.
    pub max_error: f64,
}

/// Chebyshev–Gauss nodes of an order-`order` fit, mapped onto `[0, 2]`.
pub fn chebyshev_nodes(order: usize) -> Vec<f64> {
    let count = order + 1;
    (0..count)
        .map(|j| {
            let x = (PI * (j as f64 + 0.5) / count as f64).cos();
            0.5 * LAMBDA_MAX * (x + 1.0)
        })
        .collect()
}

/// Coefficients from filter samples taken at [`chebyshev_nodes`].
pub fn coefficients_from_samples(samples: &[f64]) -> Vec<f64> {
    let count = samples.len();
    (0..count)
        .map(|p| {
            let s: f64 = samples
                .iter()
                .enumerate()
                .map(|(j, f)| f * (PI * p as f64 * (j as f64 + 0.5) / count as f64).cos())
                .sum();
            let c = 2.0 * s / count as f64;
            if p == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

pub fn chebyshev_fit(filter: impl Fn(f64) -> f64, order: usize) -> Result<ChebyshevFit> {
    let samples: Vec<f64> = chebyshev_nodes(order).into_iter().map(&filter).collect();
    if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
        return invalid(format!("filter is not finite at Chebyshev node {pos}"));
    }
    let filter_poly = ChebyshevFilter::new(coefficients_from_samples(&samples))?;
    let mut max_error = 0.0f64;
    for i in 0..ERROR_PROBES {
        let lambda = LAMBDA_MAX * i as f64 / (ERROR_PROBES - 1) as f64;
        let want = filter(lambda);
        if !want.is_finite() {
            return invalid(format!("filter is not finite at λ = {lambda}"));
        }
        max_error = max_error.max((filter_poly.eval(lambda) - want).abs());
    }
    Ok(ChebyshevFit {
        filter: filter_poly,
        max_error,
    })
}

/// `Σ_p c_p T_p(L̃) x` with `L̃ = (2/λ_max) L − I`.
pub fn chebyshev_apply(l: &NormalizedLaplacian, f: &ChebyshevFilter, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.rows() != l.n() {
        return invalid(format!("signal has {} rows, graph has {} nodes", x.rows(), l.n()));
    }
    let coeffs: Vec<Vec<f64>> = f.coeffs().iter().map(|&c| vec![c; x.cols()]).collect();
    Ok(apply_column_coeffs(l, &coeffs, x))
}

/// `Σ_p T_p(L̃) x diag(coeffs[p])`: one recurrence shared by every column,
/// with a per-column coefficient for each term.
pub(crate) fn apply_column_coeffs(l: &NormalizedLaplacian, coeffs: &[Vec<f64>], x: &DenseMatrix) -> DenseMatrix {
    let (n, d) = x.shape();
    let mut out = DenseMatrix::zeros(n, d);
    accumulate_scaled(&mut out, x, &coeffs[0]);
    if coeffs.len() == 1 {
        return out;
    }
    let mut prev = x.clone();
    let mut cur = DenseMatrix::zeros(n, d);
    shifted_apply(l, &prev, &mut cur);
    accumulate_scaled(&mut out, &cur, &coeffs[1]);
    let mut next = DenseMatrix::zeros(n, d);
    for c in &coeffs[2..] {
        shifted_apply(l, &cur, &mut next);
        for (nv, pv) in next.as_mut_slice().iter_mut().zip(prev.as_slice()) {
            *nv = 2.0 * *nv - pv;
        }
        accumulate_scaled(&mut out, &next, c);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    out
}

/// `out = L̃ x = (2/λ_max) L x − x`.
fn shifted_apply(l: &NormalizedLaplacian, x: &DenseMatrix, out: &mut DenseMatrix) {
    l.apply_into(x, out);
    let scale = 2.0 / LAMBDA_MAX;
    for (o, v) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *o = scale * *o - v;
    }
}

fn accumulate_scaled(out: &mut DenseMatrix, term: &DenseMatrix, col_coeffs: &[f64]) {
    let d = term.cols();
    for (o_row, t_row) in out
        .as_mut_slice()
        .chunks_exact_mut(d)
        .zip(term.as_slice().chunks_exact(d))
    {
        for ((o, t), c) in o_row.iter_mut().zip(t_row).zip(col_coeffs) {
            *o += c * t;
        }
    }
}
