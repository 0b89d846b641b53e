use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;

/// Mean masked cross-entropy and its gradient with respect to the logits.
///
/// Rows with `mask[i] == false` contribute neither loss nor gradient.
pub fn cross_entropy_loss(logits: &DenseMatrix, targets: &[usize], mask: &[bool]) -> Result<(f64, DenseMatrix)> {
    let (n, vocab) = logits.shape();
    if targets.len() != n || mask.len() != n {
        return invalid("targets and mask must have one entry per logit row");
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= vocab) {
        return invalid(format!("target {t} out of range for vocab {vocab}"));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return invalid("every position is masked out");
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(n, vocab);
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        loss += sum.ln() - (row[targets[i]] - max);
        let g = grad.row_mut(i);
        for (gv, z) in g.iter_mut().zip(row) {
            *gv = (z - max).exp() / sum * inv;
        }
        g[targets[i]] -= inv;
    }
    Ok((loss * inv, grad))
}

/// Fraction of unmasked rows whose arg-max logit equals the target.
pub fn token_accuracy(logits: &DenseMatrix, targets: &[usize], mask: &[bool]) -> (usize, usize) {
    let mut hits = 0;
    let mut total = 0;
    for i in 0..logits.rows() {
        if !mask[i] {
            continue;
        }
        total += 1;
        let row = logits.row(i);
        let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        if best == targets[i] {
            hits += 1;
        }
    }
    (hits, total)
}
