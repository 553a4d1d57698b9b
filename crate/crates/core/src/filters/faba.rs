use super::FilterDecision;
use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};

/// Squared distance of each member of `set` to the mean of `set`, recovered
/// from pairwise squared distances:
/// `|x_i - m|^2 = (1/s) sum_j D_ij - (1/(2 s^2)) sum_jl D_jl`.
fn distances_to_mean(dists: &DistanceMatrix, set: &[usize]) -> Vec<f64> {
    let s = set.len() as f64;
    let row_sums: Vec<f64> = set
        .iter()
        .map(|&i| set.iter().map(|&j| dists.get(i, j)).sum())
        .collect();
    let total: f64 = row_sums.iter().sum();
    row_sums.iter().map(|r| r / s - total / (2.0 * s * s)).collect()
}

/// Removes, `f` times, the model farthest from the mean of those remaining.
pub fn faba(dists: &DistanceMatrix, f: usize) -> Result<FilterDecision> {
    let n = dists.n();
    if 2 * f >= n {
        return Err(Error::param(format!("faba needs f < n/2, got n = {n}, f = {f}")));
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut scores = vec![0.0; n];
    for _ in 0..f {
        let to_mean = distances_to_mean(dists, &remaining);
        let mut worst = 0;
        for (pos, &v) in to_mean.iter().enumerate() {
            if v > to_mean[worst] {
                worst = pos;
            }
        }
        scores[remaining[worst]] = to_mean[worst];
        remaining.remove(worst);
    }
    for (&i, v) in remaining.iter().zip(distances_to_mean(dists, &remaining)) {
        scores[i] = v;
    }
    let mut accept = vec![false; n];
    for &i in &remaining {
        accept[i] = true;
    }
    Ok(FilterDecision::from_mask("faba", &accept, scores, None))
}
