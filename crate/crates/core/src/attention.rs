//! Single-head dense self-attention, the quadratic reference point for the
//! scaling benchmark.

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;

/// `softmax((X Wq)(X Wk)ᵀ / √d) (X Wv)` with a row-wise max-shifted softmax.
pub fn attention_baseline_forward(
    x: &DenseMatrix,
    wq: &DenseMatrix,
    wk: &DenseMatrix,
    wv: &DenseMatrix,
) -> Result<DenseMatrix> {
    let d = x.cols();
    for (name, w) in [("wq", wq), ("wk", wk), ("wv", wv)] {
        if w.shape() != (d, d) {
            return invalid(format!("{name} is {:?}, expected ({d}, {d})", w.shape()));
        }
    }
    if x.rows() == 0 {
        return invalid("attention needs at least one token");
    }
    let q = x.matmul(wq);
    let k = x.matmul(wk);
    let v = x.matmul(wv);
    let mut scores = q.matmul_t(&k);
    let scale = 1.0 / (d as f64).sqrt();
    for i in 0..scores.rows() {
        let row = scores.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s * scale));
        let mut total = 0.0;
        for s in row.iter_mut() {
            *s = (*s * scale - max).exp();
            total += *s;
        }
        for s in row.iter_mut() {
            *s /= total;
        }
    }
    Ok(scores.matmul(&v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_token_is_value_projection() {
        let x = m(&[&[1.0, -2.0]]);
        let w = m(&[&[0.5, 1.0], &[2.0, -1.0]]);
        let y = attention_baseline_forward(&x, &w, &w, &w).unwrap();
        assert!(y.max_abs_diff(&x.matmul(&w)) < 1e-15);
    }

    #[test]
    fn zero_query_key_is_uniform() {
        let x = m(&[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 1.0]]);
        let z = DenseMatrix::zeros(2, 2);
        let wv = m(&[&[1.0, 2.0], &[-1.0, 0.5]]);
        let y = attention_baseline_forward(&x, &z, &z, &wv).unwrap();
        let v = x.matmul(&wv);
        for i in 0..3 {
            for j in 0..2 {
                let mean = (v.get(0, j) + v.get(1, j) + v.get(2, j)) / 3.0;
                assert!((y.get(i, j) - mean).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_naive_oracle() {
        let x = m(&[&[0.3, -1.2], &[0.7, 0.1], &[-0.4, 0.9]]);
        let wq = m(&[&[0.2, -0.5], &[1.1, 0.3]]);
        let wk = m(&[&[-0.7, 0.4], &[0.6, 0.9]]);
        let wv = m(&[&[0.5, 0.8], &[-0.3, 1.4]]);
        let y = attention_baseline_forward(&x, &wq, &wk, &wv).unwrap();
        // Scalar loops, no max shift.
        let proj = |w: &DenseMatrix, i: usize, j: usize| x.get(i, 0) * w.get(0, j) + x.get(i, 1) * w.get(1, j);
        for i in 0..3 {
            let s: Vec<f64> = (0..3)
                .map(|t| ((proj(&wq, i, 0) * proj(&wk, t, 0) + proj(&wq, i, 1) * proj(&wk, t, 1)) / 2f64.sqrt()).exp())
                .collect();
            let z: f64 = s.iter().sum();
            for j in 0..2 {
                let want: f64 = (0..3).map(|t| s[t] / z * proj(&wv, t, j)).sum();
                assert!((y.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = DenseMatrix::zeros(3, 2);
        let bad = DenseMatrix::zeros(3, 2);
        let ok = DenseMatrix::zeros(2, 2);
        assert!(attention_baseline_forward(&x, &bad, &ok, &ok).is_err());
    }
}
