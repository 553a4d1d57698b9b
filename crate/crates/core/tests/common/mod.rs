//! Naive reference implementations shared by integration tests.
#![allow(dead_code)]

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Multi-Krum by sorting each client's distances to every other client.
pub fn naive_multi_krum(xs: &[Vec<f64>], f: usize, m_sel: usize) -> Vec<usize> {
    let n = xs.len();
    let mut scored: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sq_dist(&xs[i], &xs[j])).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (d[..n - f - 2].iter().sum(), i)
        })
        .collect();
    scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<usize> = scored[..m_sel].iter().map(|s| s.1).collect();
    out.sort();
    out
}

/// FABA with explicit means.
pub fn naive_faba(xs: &[Vec<f64>], f: usize) -> Vec<usize> {
    let mut left: Vec<usize> = (0..xs.len()).collect();
    for _ in 0..f {
        let dim = xs[0].len();
        let mut mean = vec![0.0; dim];
        for &i in &left {
            for (m, v) in mean.iter_mut().zip(&xs[i]) {
                *m += v / left.len() as f64;
            }
        }
        let mut worst = 0;
        for p in 1..left.len() {
            if sq_dist(&xs[left[p]], &mean) > sq_dist(&xs[left[worst]], &mean) {
                worst = p;
            }
        }
        left.remove(worst);
    }
    left
}

/// FoolsGold weights following the published recurrence line by line.
pub fn naive_foolsgold(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    let mut cs = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cs[i][j] = 1.0 - cos_dist(&xs[i], &xs[j]);
            }
        }
    }
    let maxcs: Vec<f64> = cs.iter().map(|r| r.iter().cloned().fold(f64::MIN, f64::max)).collect();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if maxcs[i] < maxcs[j] {
                cs[i][j] = cs[i][j] * maxcs[i] / maxcs[j];
            }
        }
    }
    let mut wv: Vec<f64> = cs
        .iter()
        .map(|r| 1.0 - r.iter().cloned().fold(f64::MIN, f64::max))
        .map(|w| w.min(1.0).max(0.0))
        .collect();
    let mx = wv.iter().cloned().fold(f64::MIN, f64::max);
    if mx == 0.0 {
        return vec![0.0; n];
    }
    for w in wv.iter_mut() {
        *w /= mx;
        if *w == 1.0 {
            *w = 0.99;
        }
        *w = (*w / (1.0 - *w)).ln() + 0.5;
        if *w > 1.0 {
            *w = 1.0;
        }
        if !(*w >= 0.0) {
            *w = 0.0;
        }
    }
    wv
}

fn components(n: usize, adj: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = s;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if label[v] == usize::MAX && adj(u, v) {
                    label[v] = s;
                    stack.push(v);
                }
            }
        }
    }
    label
}

/// Majority-cluster extraction by thresholding the full mutual-reachability
/// matrix at every distinct value and searching the connected components.
pub fn naive_flame(xs: &[Vec<f64>]) -> Vec<usize> {
    let n = xs.len();
    let mcs = n / 2 + 1;
    let d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { cos_dist(&xs[i], &xs[j]) }).collect())
        .collect();
    let core: Vec<f64> = d
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.sort_by(|a, b| a.partial_cmp(b).unwrap());
            r[mcs - 1]
        })
        .collect();
    let mr = |i: usize, j: usize| d[i][j].max(core[i]).max(core[j]);
    let mut values: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            values.push(mr(i, j));
        }
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();

    // Keep only levels where the partition changes.
    let mut levels: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    for &t in &values {
        let lab = components(n, |u, v| u != v && mr(u, v) <= t);
        if prev.as_ref() == Some(&lab) {
            continue;
        }
        let mut best: Vec<usize> = Vec::new();
        for root in 0..n {
            let members: Vec<usize> = (0..n).filter(|&i| lab[i] == root).collect();
            if members.len() > best.len() {
                best = members;
            }
        }
        levels.push((t, best));
        prev = Some(lab);
    }
    let mut pick: Option<usize> = None;
    let mut best_gap = -1.0;
    for t in 0..levels.len().saturating_sub(1) {
        if levels[t].1.len() >= mcs {
            let gap = levels[t + 1].0 - levels[t].0;
            if gap >= best_gap {
                best_gap = gap;
                pick = Some(t);
            }
        }
    }
    match pick {
        Some(t) => levels[t].1.clone(),
        None => (0..n).collect(),
    }
}
