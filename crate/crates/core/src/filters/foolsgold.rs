use super::FilterDecision;
use crate::distances::DistanceMatrix;

/// FoolsGold weights from cosine distances between client update histories.
///
/// Max-similarity per client, pardoning of clients less similar than their
/// neighbour, inversion, rescale to max 1, then logit sharpening clipped to
/// `[0, 1]`. A degenerate rescale (every weight 0) yields all zeros.
pub fn foolsgold_weights(dists: &DistanceMatrix) -> Vec<f64> {
    let n = dists.n();
    let mut cs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 - dists.get(i, j) })
                .collect()
        })
        .collect();
    let maxcs: Vec<f64> = cs
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && maxcs[i] < maxcs[j] {
                cs[i][j] *= maxcs[i] / maxcs[j];
            }
        }
    }
    let mut wv: Vec<f64> = cs
        .iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (1.0 - m).clamp(0.0, 1.0)
        })
        .collect();
    let top = wv.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return vec![0.0; n];
    }
    for w in &mut wv {
        *w /= top;
        if *w == 1.0 {
            *w = 0.99;
        }
        let logit = (*w / (1.0 - *w)).ln() + 0.5;
        *w = if logit.is_nan() { 0.0 } else { logit.clamp(0.0, 1.0) };
    }
    wv
}

/// Accepts every client with a positive weight and carries the weights along.
pub fn foolsgold(dists: &DistanceMatrix) -> FilterDecision {
    let w = foolsgold_weights(dists);
    let accept: Vec<bool> = w.iter().map(|&v| v > 0.0).collect();
    FilterDecision::from_mask("foolsgold", &accept, w.clone(), Some(w))
}
