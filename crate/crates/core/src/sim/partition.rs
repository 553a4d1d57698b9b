//! Splitting a dataset's sample indices across clients.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How training samples are spread over clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionSpec {
    Iid,
    Dirichlet { alpha: f64 },
    Grouped { bias: f64 },
}

impl PartitionSpec {
    pub fn split(&self, labels: &[u32], classes: u32, clients: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
        match *self {
            PartitionSpec::Iid => Ok(iid_partition(labels.len(), clients, rng)),
            PartitionSpec::Dirichlet { alpha } => dirichlet_partition(labels, classes, clients, alpha, rng),
            PartitionSpec::Grouped { bias } => grouped_partition(labels, classes, clients, classes as usize, bias, rng),
        }
    }
}

/// Shuffled round-robin assignment.
pub fn iid_partition(samples: usize, clients: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..samples).collect();
    idx.shuffle(rng);
    let mut out = vec![Vec::new(); clients];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % clients].push(i);
    }
    out.iter_mut().for_each(|p| p.sort_unstable());
    out
}

fn by_class(labels: &[u32], classes: u32) -> Result<Vec<Vec<usize>>> {
    let mut per = vec![Vec::new(); classes as usize];
    for (i, &y) in labels.iter().enumerate() {
        per.get_mut(y as usize)
            .ok_or_else(|| Error::Partition(format!("label {y} outside 0..{classes}")))?
            .push(i);
    }
    if let Some(c) = per.iter().position(Vec::is_empty) {
        return Err(Error::Partition(format!("class {c} has no samples")));
    }
    Ok(per)
}

/// Per class, proportions over clients drawn from `Dirichlet(alpha, ..., alpha)`.
pub fn dirichlet_partition(
    labels: &[u32],
    classes: u32,
    clients: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    if !(alpha > 0.0 && alpha.is_finite()) || clients == 0 {
        return Err(Error::Partition(format!(
            "dirichlet needs alpha > 0 and clients >= 1, got alpha = {alpha}, clients = {clients}"
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Partition(e.to_string()))?;
    let mut out = vec![Vec::new(); clients];
    for mut members in by_class(labels, classes)? {
        members.shuffle(rng);
        let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let count = members.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (c, w) in draws.iter().enumerate() {
            cum += w;
            let end = if c + 1 == clients || total <= 0.0 {
                count
            } else {
                ((cum / total) * count as f64).round().min(count as f64) as usize
            };
            let end = end.max(start);
            out[c].extend_from_slice(&members[start..end]);
            start = end;
        }
    }
    out.iter_mut().for_each(|p| p.sort_unstable());
    Ok(out)
}

/// Clients are split round-robin into `groups`; each class `l` sample goes to
/// group `l mod groups` with probability `bias`, otherwise to a uniformly
/// chosen group, then to a uniformly chosen client of that group.
pub fn grouped_partition(
    labels: &[u32],
    classes: u32,
    clients: usize,
    groups: usize,
    bias: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    if !(0.0..=1.0).contains(&bias) || groups == 0 || clients < groups {
        return Err(Error::Partition(format!(
            "grouped partition needs bias in [0, 1] and clients >= groups, got bias = {bias}, {clients} clients, {groups} groups"
        )));
    }
    by_class(labels, classes)?;
    let members: Vec<Vec<usize>> = (0..groups)
        .map(|g| (g..clients).step_by(groups).collect())
        .collect();
    let mut out = vec![Vec::new(); clients];
    for (i, &y) in labels.iter().enumerate() {
        let g = if rng.random::<f64>() < bias {
            y as usize % groups
        } else {
            rng.random_range(0..groups)
        };
        let client = members[g][rng.random_range(0..members[g].len())];
        out[client].push(i);
    }
    Ok(out)
}
