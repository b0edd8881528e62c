//! Losses averaged over the prediction horizon.

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean over heads of `-ln p_k[target_k]`.
pub fn loss_cce(predicted: &[Vec<f64>], targets: &[usize]) -> f64 {
    assert_eq!(predicted.len(), targets.len(), "one target per head");
    let total: f64 = predicted
        .iter()
        .zip(targets)
        .map(|(p, &t)| -p[t].max(PROB_FLOOR).ln())
        .sum();
    total / targets.len() as f64
}

/// Mean absolute error over heads.
pub fn loss_mae(predicted: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predicted.len(), targets.len(), "one target per head");
    let total: f64 = predicted.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    total / targets.len() as f64
}

pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
