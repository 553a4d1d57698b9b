//! Shared-seed ±1 random projection of secret-shared models.
//!
//! Both servers expand the same seed into a `d x k` sign matrix. Column `j`
//! is the bit stream of a ChaCha20 instance keyed by the seed on stream `j`,
//! read least-significant bit first: bit 1 is `+1`, bit 0 is `-1`. Columns
//! are generated on demand, so the matrix is never held in memory.
//!
//! Projecting a share is a signed sum of its coordinates per column, which
//! only needs local additions and subtractions.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::Ring;
use crate::stpc::{Engine, Op, Party, ShareVector, SharedVector};

/// Smallest `k` with `k >= (4 + 2 eta) / (eps^2 - eps^3) * ln(n + 1)`.
pub fn target_dimension(n: usize, epsilon: f64, eta: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(eta > 0.0) {
        return Err(Error::param(format!("eta must be positive, got {eta}")));
    }
    if n < 2 {
        return Err(Error::param(format!("need at least 2 clients, got {n}")));
    }
    let bound = (4.0 + 2.0 * eta) / (epsilon.powi(2) - epsilon.powi(3)) * ((n + 1) as f64).ln();
    Ok(bound.ceil() as usize)
}

/// A source of sign-matrix columns, packed 64 rows per word.
pub trait SignColumns {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// Writes column `j` into `buf` (resized to `ceil(rows / 64)` words).
    fn column_words(&self, j: usize, buf: &mut Vec<u64>);

    fn entry(&self, i: usize, j: usize) -> i8 {
        let mut buf = Vec::new();
        self.column_words(j, &mut buf);
        if (buf[i / 64] >> (i % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub eta: f64,
}

impl ProjectionSpec {
    /// Builds the spec for `n` clients, choosing `k` from `epsilon` and `eta`.
    pub fn for_clients(seed: u64, d: usize, n: usize, epsilon: f64, eta: f64) -> Result<Self> {
        let k = target_dimension(n, epsilon, eta)?;
        Ok(Self {
            seed,
            d,
            k,
            epsilon,
            eta,
        })
    }

    /// Materializes the matrix. Only sensible for small `d * k`.
    pub fn gen_matrix(&self) -> DenseSigns {
        let words = self.d.div_ceil(64);
        let mut packed = Vec::with_capacity(words * self.k);
        let mut buf = Vec::new();
        for j in 0..self.k {
            self.column_words(j, &mut buf);
            packed.extend_from_slice(&buf);
        }
        DenseSigns {
            rows: self.d,
            cols: self.k,
            packed,
        }
    }
}

impl SignColumns for ProjectionSpec {
    fn rows(&self) -> usize {
        self.d
    }

    fn cols(&self) -> usize {
        self.k
    }

    fn column_words(&self, j: usize, buf: &mut Vec<u64>) {
        let words = self.d.div_ceil(64);
        buf.clear();
        buf.resize(words, 0);
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(j as u64);
        for w in buf.iter_mut() {
            *w = rng.next_u64();
        }
        if self.d % 64 != 0 {
            let last = words - 1;
            buf[last] &= (1u64 << (self.d % 64)) - 1;
        }
    }
}

/// An explicit sign matrix, column-major and bit-packed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseSigns {
    rows: usize,
    cols: usize,
    packed: Vec<u64>,
}

impl DenseSigns {
    /// Builds from a row-major matrix of `+1` / `-1` entries.
    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let d = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let words = d.div_ceil(64);
        let mut packed = vec![0u64; words * k];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::shape("ragged sign matrix"));
            }
            for (j, &s) in row.iter().enumerate() {
                match s {
                    1 => packed[j * words + i / 64] |= 1 << (i % 64),
                    -1 => {}
                    other => return Err(Error::param(format!("sign entry {other} is not ±1"))),
                }
            }
        }
        Ok(Self {
            rows: d,
            cols: k,
            packed,
        })
    }

    pub fn plus_count(&self) -> u64 {
        self.packed.iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

impl SignColumns for DenseSigns {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn column_words(&self, j: usize, buf: &mut Vec<u64>) {
        let words = self.rows.div_ceil(64);
        buf.clear();
        buf.extend_from_slice(&self.packed[j * words..(j + 1) * words]);
    }
}

/// Per-column count of `+1` entries, used for ADD/SUB accounting.
struct Projected {
    out: Vec<Vec<Ring>>,
    plus: u64,
}

/// Projects a batch of ring vectors, generating each column once.
fn project_batch<M: SignColumns>(inputs: &[&[Ring]], matrix: &M) -> Projected {
    let d = matrix.rows();
    let k = matrix.cols();
    let totals: Vec<Ring> = inputs
        .iter()
        .map(|x| x.iter().fold(Ring::ZERO, |a, &b| a + b))
        .collect();
    let mut out = vec![Vec::with_capacity(k); inputs.len()];
    let mut buf = Vec::new();
    let mut plus = 0u64;
    for j in 0..k {
        matrix.column_words(j, &mut buf);
        plus += buf.iter().map(|w| u64::from(w.count_ones())).sum::<u64>();
        for (x, (o, &total)) in inputs.iter().zip(out.iter_mut().zip(&totals)) {
            // sum_{+1} x - sum_{-1} x == 2 * sum_{+1} x - sum x
            let mut pos = 0u64;
            for (w, chunk) in buf.iter().zip(x[..d].chunks(64)) {
                for (bit, &v) in chunk.iter().enumerate() {
                    let mask = 0u64.wrapping_sub((w >> bit) & 1);
                    pos = pos.wrapping_add(v.0 & mask);
                }
            }
            o.push(Ring(pos.wrapping_mul(2)) - total);
        }
    }
    Projected { out, plus }
}

/// Projects a plaintext ring vector (e.g. the public global model).
pub fn project_ring<M: SignColumns>(x: &[Ring], matrix: &M) -> Result<Vec<Ring>> {
    check_dim(x.len(), matrix)?;
    Ok(project_batch(&[x], matrix).out.pop().unwrap())
}

/// Projects a real vector without any encoding; used for plaintext reference paths.
pub fn project_real<M: SignColumns>(x: &[f64], matrix: &M) -> Result<Vec<f64>> {
    check_dim(x.len(), matrix)?;
    let mut buf = Vec::new();
    Ok((0..matrix.cols())
        .map(|j| {
            matrix.column_words(j, &mut buf);
            x.iter()
                .enumerate()
                .map(|(i, &v)| if (buf[i / 64] >> (i % 64)) & 1 == 1 { v } else { -v })
                .sum()
        })
        .collect())
}

/// One party's local projection of its own share.
pub fn project_share<M: SignColumns>(share: &ShareVector, matrix: &M) -> Result<ShareVector> {
    check_dim(share.dim(), matrix)?;
    let values = project_batch(&[&share.values], matrix).out.pop().unwrap();
    Ok(ShareVector::new(share.party, values, share.precision))
}

/// Projects every model's shares. Each party works on its own shares only;
/// nothing crosses the channel. The ledger records one ADD per `+1` entry and
/// one SUB per `-1` entry, per model.
pub fn project_shares<M: SignColumns>(
    engine: &mut Engine,
    models: &[SharedVector],
    matrix: &M,
) -> Result<Vec<SharedVector>> {
    for m in models {
        check_dim(m.dim(), matrix)?;
    }
    if models.is_empty() {
        return Ok(Vec::new());
    }
    let mut per_party = Vec::with_capacity(2);
    let mut plus = 0;
    for party in [Party::Zero, Party::One] {
        let inputs: Vec<&[Ring]> = models.iter().map(|m| m.share(party).values.as_slice()).collect();
        let projected = project_batch(&inputs, matrix);
        plus = projected.plus;
        per_party.push(projected.out);
    }
    let ones = per_party.pop().unwrap();
    let zeros = per_party.pop().unwrap();
    let precision = models[0].precision();
    let out = zeros
        .into_iter()
        .zip(ones)
        .map(|(v0, v1)| {
            SharedVector::from_shares(
                ShareVector::new(Party::Zero, v0, precision),
                ShareVector::new(Party::One, v1, precision),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let total = (matrix.rows() * matrix.cols()) as u64;
    let stage = engine.stage();
    let n = models.len() as u64;
    let ledger = engine.ledger_mut();
    ledger.record(stage, Op::Add, plus * n);
    ledger.record(stage, Op::Sub, (total - plus) * n);
    Ok(out)
}

fn check_dim<M: SignColumns>(dim: usize, matrix: &M) -> Result<()> {
    if dim != matrix.rows() {
        return Err(Error::shape(format!(
            "vector has dim {dim}, projection expects {}",
            matrix.rows()
        )));
    }
    Ok(())
}
