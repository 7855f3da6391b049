use super::tensor::{Scalar, TensorBuf};
use super::NnError;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn check_labels(rows: usize, classes: usize, labels: &[usize]) -> Result<(), NnError> {
    if labels.len() != rows {
        return Err(NnError::ShapeMismatch(format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::ShapeMismatch(format!("label {l} with {classes} classes")));
    }
    Ok(())
}

/// Mean over the batch of `-alpha (1 - p_true)^gamma ln p_true`.
/// `probs` is `[B, classes]` (stored as `[B, classes, 1]`).
pub fn focal_loss<T: Scalar>(probs: &TensorBuf<T>, labels: &[usize], alpha: f64, gamma: f64) -> Result<f64, NnError> {
    let (b, k) = (probs.batch(), probs.sample_len());
    check_labels(b, k, labels)?;
    let mut total = 0.0;
    for (bi, &y) in labels.iter().enumerate() {
        let row = probs.sample(bi);
        let sum: f64 = row.iter().map(|p| p.to_f64().unwrap()).sum();
        if (sum - 1.0).abs() > 1e-5 || row.iter().any(|p| !(p.to_f64().unwrap() >= 0.0)) {
            return Err(NnError::InvalidProbability(format!("row {bi} sums to {sum}")));
        }
        let p = row[y].to_f64().unwrap().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total += -alpha * (1.0 - p).powf(gamma) * p.ln();
    }
    Ok(total / b.max(1) as f64)
}

pub fn softmax_rows<T: Scalar>(logits: &TensorBuf<T>) -> TensorBuf<T> {
    let k = logits.sample_len();
    let mut out = logits.clone();
    for row in out.values.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Focal loss of `softmax(logits)` and its gradient with respect to the logits.
pub fn focal_loss_logits<T: Scalar>(
    logits: &TensorBuf<T>,
    labels: &[usize],
    alpha: f64,
    gamma: f64,
) -> Result<(f64, TensorBuf<T>), NnError> {
    let (b, k) = (logits.batch(), logits.sample_len());
    check_labels(b, k, labels)?;
    let probs = softmax_rows(logits);
    let mut dlogits = TensorBuf::zeros(logits.shape);
    let mut total = 0.0;
    let inv_b = 1.0 / b.max(1) as f64;
    for (bi, &y) in labels.iter().enumerate() {
        let row = probs.sample(bi);
        let raw = row[y].to_f64().unwrap();
        let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let q = 1.0 - p;
        total += -alpha * q.powf(gamma) * p.ln();
        if raw != p {
            continue;
        }
        // d/dp of -alpha q^gamma ln p
        let dqg = if gamma == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) };
        let dl_dp = -alpha * (-dqg * p.ln() + q.powf(gamma) / p);
        let g = dlogits.sample_mut(bi);
        for (c, slot) in g.iter_mut().enumerate() {
            let pc = row[c].to_f64().unwrap();
            let dp_dz = if c == y { p * (1.0 - p) } else { -p * pc };
            *slot = T::lit(dl_dp * dp_dz * inv_b);
        }
    }
    Ok((total * inv_b, dlogits))
}
