use super::FilterDecision;
use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};

/// Distance from each point to its `min_samples`-th nearest neighbour,
/// counting the point itself as the first.
pub fn core_distances(dists: &DistanceMatrix, min_samples: usize) -> Vec<f64> {
    let n = dists.n();
    let k = min_samples.clamp(1, n.max(1));
    (0..n)
        .map(|i| {
            let mut row = dists.row(i).to_vec();
            row.sort_by(f64::total_cmp);
            row[k - 1]
        })
        .collect()
}

/// Mutual reachability `max(core_i, core_j, d_ij)` off the diagonal.
pub fn mutual_reachability(dists: &DistanceMatrix, min_samples: usize) -> DistanceMatrix {
    let core = core_distances(dists, min_samples);
    DistanceMatrix::from_fn(dists.n(), dists.metric(), |i, j| {
        dists.get(i, j).max(core[i]).max(core[j])
    })
}

/// Single-linkage structure of the mutual-reachability graph.
#[derive(Clone, Debug)]
pub struct FlameClustering {
    pub min_cluster_size: usize,
    /// Minimum spanning tree edges `(i, j, weight)`, ascending by weight.
    pub mst: Vec<(usize, usize, f64)>,
    /// Level the accepted cluster was cut at, if a cluster qualified.
    pub cut: Option<f64>,
    pub cluster: Vec<usize>,
}

fn prim(mr: &DistanceMatrix) -> Vec<(usize, usize, f64)> {
    let n = mr.n();
    if n == 0 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    in_tree[0] = true;
    for j in 1..n {
        best[j] = mr.get(0, j);
    }
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((parent[next], next, best[next]));
        for j in 0..n {
            if !in_tree[j] && mr.get(next, j) < best[j] {
                best[j] = mr.get(next, j);
                parent[j] = next;
            }
        }
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    edges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl FlameClustering {
    /// Clusters with `min_samples = min_cluster_size = floor(n/2) + 1`.
    ///
    /// The merge levels of the MST are walked in ascending order. Every level
    /// at which some component reaches the size floor is a candidate cut; the
    /// chosen cut is the candidate followed by the widest gap to the next
    /// level (ties go to the higher level). The cluster is the largest
    /// component at that cut. The final level has no successor and is only
    /// used when nothing else qualifies.
    pub fn new(dists: &DistanceMatrix) -> Self {
        let n = dists.n();
        let mcs = n / 2 + 1;
        let mr = mutual_reachability(dists, mcs);
        let mst = prim(&mr);

        let mut parent: Vec<usize> = (0..n).collect();
        let mut size = vec![1usize; n];
        // (level, largest component members) for each distinct level.
        let mut levels: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut e = 0;
        while e < mst.len() {
            let level = mst[e].2;
            while e < mst.len() && mst[e].2 == level {
                let (a, b) = (find(&mut parent, mst[e].0), find(&mut parent, mst[e].1));
                if a != b {
                    let (big, small) = if size[a] >= size[b] { (a, b) } else { (b, a) };
                    parent[small] = big;
                    size[big] += size[small];
                }
                e += 1;
            }
            let root = (0..n)
                .map(|i| find(&mut parent, i))
                .max_by(|&a, &b| size[a].cmp(&size[b]).then(b.cmp(&a)))
                .unwrap();
            let members: Vec<usize> = (0..n).filter(|&i| find(&mut parent, i) == root).collect();
            levels.push((level, members));
        }

        let mut chosen: Option<(f64, usize)> = None;
        for t in 0..levels.len().saturating_sub(1) {
            if levels[t].1.len() < mcs {
                continue;
            }
            let gap = levels[t + 1].0 - levels[t].0;
            if chosen.is_none_or(|(g, _)| gap >= g) {
                chosen = Some((gap, t));
            }
        }
        let (cut, cluster) = match chosen {
            Some((_, t)) => (Some(levels[t].0), levels[t].1.clone()),
            None => (None, Vec::new()),
        };
        Self {
            min_cluster_size: mcs,
            mst,
            cut,
            cluster,
        }
    }
}

/// Density clustering over cosine distances; accepts the majority cluster.
pub fn flame_filter(dists: &DistanceMatrix) -> Result<FilterDecision> {
    let n = dists.n();
    if n < 3 {
        return Err(Error::param(format!("flame needs n >= 3, got {n}")));
    }
    let clustering = FlameClustering::new(dists);
    let scores = core_distances(dists, clustering.min_cluster_size);
    let mut accept = vec![false; n];
    if clustering.cluster.is_empty() {
        log::warn!("flame: no cluster reached size {}, accepting all", clustering.min_cluster_size);
        accept.iter_mut().for_each(|a| *a = true);
    }
    for &i in &clustering.cluster {
        accept[i] = true;
    }
    Ok(FilterDecision::from_mask("flame", &accept, scores, None))
}
