use super::{argsort, FilterDecision};
use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};

/// Krum score of every row: sum of its `n - f - 2` smallest off-diagonal entries.
pub fn krum_scores(dists: &DistanceMatrix, f: usize) -> Vec<f64> {
    let n = dists.n();
    let keep = n.saturating_sub(f + 2);
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dists.get(i, j)).collect();
            row.sort_by(f64::total_cmp);
            row.iter().take(keep).sum()
        })
        .collect()
}

/// Keeps the `m_sel` clients with the lowest Krum scores.
///
/// Requires at least one neighbour per score (`n >= f + 3`) and an honest
/// majority (`2f < n`).
pub fn multi_krum(dists: &DistanceMatrix, f: usize, m_sel: usize) -> Result<FilterDecision> {
    let n = dists.n();
    if n < f + 3 || 2 * f >= n {
        return Err(Error::param(format!("multi-krum needs n >= f + 3 and 2f < n, got n = {n}, f = {f}")));
    }
    if m_sel == 0 || m_sel > n - f {
        return Err(Error::param(format!("multi-krum m_sel = {m_sel} outside 1..={}", n - f)));
    }
    let scores = krum_scores(dists, f);
    let mut accept = vec![false; n];
    for &i in argsort(&scores).iter().take(m_sel) {
        accept[i] = true;
    }
    Ok(FilterDecision::from_mask("multi-krum", &accept, scores, None))
}
