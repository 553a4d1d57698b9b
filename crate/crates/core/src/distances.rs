//! Pairwise distances between secret-shared (usually projected) models.
//!
//! Squared Euclidean distances stay shared until the filter stage opens them
//! to the dealer functionality. Cosine distances are assembled inside the
//! functionality from shared inner products, since they need a square root
//! and a division.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::decode;
use crate::ring::FixedPoint;
use crate::stpc::{Engine, Party, ShareVector, SharedVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    SquaredEuclidean,
    Cosine,
}

/// A symmetric `n x n` matrix of plaintext distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    metric: Metric,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds from the strict upper triangle, listed row by row.
    pub fn from_upper(n: usize, metric: Metric, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::shape(format!(
                "{} upper-triangle entries for n = {n}",
                upper.len()
            )));
        }
        let mut entries = vec![0.0; n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Ok(Self { n, metric, entries })
    }

    pub fn from_fn(n: usize, metric: Metric, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(f(i, j));
            }
        }
        Self::from_upper(n, metric, &upper).expect("sized by construction")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Restricts to the given indices, in order.
    pub fn select(&self, idx: &[usize]) -> DistanceMatrix {
        DistanceMatrix::from_fn(idx.len(), self.metric, |a, b| self.get(idx[a], idx[b]))
    }
}

/// Shares of the strict upper triangle of a distance matrix.
#[derive(Clone, Debug)]
pub struct SharedDistances {
    n: usize,
    metric: Metric,
    /// One single-element sharing per pair `(i, j)`, `i < j`, row-major.
    upper: Vec<SharedVector>,
}

impl SharedDistances {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair(&self, i: usize, j: usize) -> &SharedVector {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        &self.upper[pair_index(self.n, i, j)]
    }

    /// Opens the matrix to the dealer functionality for filtering.
    pub fn open(&self, engine: &mut Engine) -> DistanceMatrix {
        let upper: Vec<f64> = self
            .upper
            .iter()
            .map(|s| engine.func_open_real(s)[0])
            .collect();
        DistanceMatrix::from_upper(self.n, self.metric, &upper).expect("sized by construction")
    }
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    // rows before i contribute (n-1) + (n-2) + ... + (n-i) entries
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn check_models(models: &[SharedVector]) -> Result<(usize, u32)> {
    let first = models
        .first()
        .ok_or_else(|| Error::shape("no models to compare"))?;
    let (k, p) = (first.dim(), first.precision());
    if models.iter().any(|m| m.dim() != k || m.precision() != p) {
        return Err(Error::shape("models differ in dimension or precision"));
    }
    Ok((k, p))
}

/// Squared Euclidean distance for every pair. Costs exactly
/// `n(n-1)/2 * k` MULs; the subtractions and the final sums are local.
pub fn pairwise_sq_euclidean(engine: &mut Engine, models: &[SharedVector]) -> Result<SharedDistances> {
    let (k, p) = check_models(models)?;
    let n = models.len();
    let pairs = n * (n - 1) / 2;
    let mut diffs = Vec::with_capacity(pairs);
    for i in 0..n {
        for j in i + 1..n {
            diffs.push(engine.sub(&models[i], &models[j])?);
        }
    }
    engine.ensure_triples(pairs * k);
    let upper = products_summed(engine, &diffs, &diffs, p)?;
    Ok(SharedDistances {
        n,
        metric: Metric::SquaredEuclidean,
        upper,
    })
}

/// Element-wise products `a[t] * b[t]` of many vector pairs in one batched
/// MUL, each product shifted right by `drop` bits, then summed per pair.
pub(crate) fn products_summed(
    engine: &mut Engine,
    a: &[SharedVector],
    b: &[SharedVector],
    drop: u32,
) -> Result<Vec<SharedVector>> {
    let Some(first) = a.first() else {
        return Ok(Vec::new());
    };
    let k = first.dim();
    let lhs = SharedVector::concat(a)?;
    let rhs = SharedVector::concat(b)?;
    let prod = engine.mul(&lhs, &rhs)?;
    let prod = engine.truncate(&prod, drop);
    let precision = prod.precision();
    let (s0, s1) = prod.into_shares();
    let mut out = Vec::with_capacity(a.len());
    for (c0, c1) in s0.values.chunks(k).zip(s1.values.chunks(k)) {
        let v = SharedVector::from_shares(
            ShareVector::new(Party::Zero, c0.to_vec(), precision),
            ShareVector::new(Party::One, c1.to_vec(), precision),
        )?;
        out.push(engine.sum_elements(&v));
    }
    Ok(out)
}

/// Shared inner products `<x_i, x_j>` for all `i <= j`, row-major.
/// Costs `n(n+1)/2 * k` MULs.
pub fn pairwise_inner_products(engine: &mut Engine, models: &[SharedVector]) -> Result<Vec<SharedVector>> {
    let (k, p) = check_models(models)?;
    let n = models.len();
    let mut lhs = Vec::with_capacity(n * (n + 1) / 2);
    let mut rhs = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            lhs.push(models[i].clone());
            rhs.push(models[j].clone());
        }
    }
    engine.ensure_triples(lhs.len() * k);
    products_summed(engine, &lhs, &rhs, p)
}

/// Cosine distance `1 - cos(x_i, x_j)` for every pair. The inner products
/// are computed under sharing; the normalization happens inside the dealer
/// functionality, which hands back only the plaintext distance matrix.
pub fn pairwise_cosine(engine: &mut Engine, models: &[SharedVector]) -> Result<DistanceMatrix> {
    let n = models.len();
    let p = check_models(models)?.1;
    let ips = pairwise_inner_products(engine, models)?;
    let opened: Vec<f64> = ips
        .iter()
        .map(|s| decode(FixedPoint::new(engine.func_open(s)[0], p)))
        .collect();
    let at = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows before i hold n + (n-1) + ... + (n-i+1) entries
        opened[i * (2 * n - i + 1) / 2 + (j - i)]
    };
    let floor = 2f64.powi(-(p as i32));
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let sq = at(i, i);
        let norm = if sq > 0.0 { sq.sqrt() } else { 0.0 };
        if norm < floor {
            return Err(Error::DegenerateNorm { client: i });
        }
        norms.push(norm);
    }
    Ok(DistanceMatrix::from_fn(n, Metric::Cosine, |i, j| {
        let cos = (at(i, j) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
        1.0 - cos
    }))
}

/// Plaintext squared Euclidean distances.
pub fn sq_euclidean_plain(models: &[Vec<f64>]) -> DistanceMatrix {
    DistanceMatrix::from_fn(models.len(), Metric::SquaredEuclidean, |i, j| {
        models[i]
            .iter()
            .zip(&models[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

/// Plaintext cosine distances.
pub fn cosine_plain(models: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let norms: Vec<f64> = models
        .iter()
        .map(|m| m.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(client) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::DegenerateNorm { client });
    }
    Ok(DistanceMatrix::from_fn(models.len(), Metric::Cosine, |i, j| {
        let dot: f64 = models[i].iter().zip(&models[j]).map(|(a, b)| a * b).sum();
        1.0 - (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
    }))
}
