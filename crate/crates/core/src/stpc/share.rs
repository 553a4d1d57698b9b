use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::{decode_vec, Ring};
use crate::stpc::Party;

/// One party's additive share of a vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareVector {
    pub party: Party,
    pub values: Vec<Ring>,
    pub precision: u32,
}

impl ShareVector {
    pub fn new(party: Party, values: Vec<Ring>, precision: u32) -> Self {
        Self {
            party,
            values,
            precision,
        }
    }

    pub fn zeros(party: Party, dim: usize, precision: u32) -> Self {
        Self::new(party, vec![Ring::ZERO; dim], precision)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn check_local(&self, other: &ShareVector) -> Result<()> {
        if self.party != other.party {
            return Err(Error::shape("operands belong to different parties"));
        }
        if self.dim() != other.dim() || self.precision != other.precision {
            return Err(Error::shape(format!(
                "dim/precision {}/{} vs {}/{}",
                self.dim(),
                self.precision,
                other.dim(),
                other.precision
            )));
        }
        Ok(())
    }

    /// Local element-wise addition of two shares held by the same party.
    pub fn add(&self, other: &ShareVector) -> Result<ShareVector> {
        self.check_local(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(ShareVector::new(self.party, values, self.precision))
    }

    pub fn sub(&self, other: &ShareVector) -> Result<ShareVector> {
        self.check_local(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(ShareVector::new(self.party, values, self.precision))
    }
}

/// Element-wise modular sum of the two parties' shares.
pub fn reconstruct(a: &ShareVector, b: &ShareVector) -> Result<Vec<Ring>> {
    if a.party == b.party {
        return Err(Error::shape("both shares come from the same party"));
    }
    if a.dim() != b.dim() || a.precision != b.precision {
        return Err(Error::shape(format!(
            "cannot reconstruct dim/precision {}/{} with {}/{}",
            a.dim(),
            a.precision,
            b.dim(),
            b.precision
        )));
    }
    Ok(a.values.iter().zip(&b.values).map(|(&x, &y)| x + y).collect())
}

/// Both parties' shares of one secret vector, as held by the emulation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedVector {
    shares: [ShareVector; 2],
}

impl SharedVector {
    pub fn from_shares(s0: ShareVector, s1: ShareVector) -> Result<Self> {
        if s0.party != Party::Zero || s1.party != Party::One {
            return Err(Error::shape("shares must be ordered party 0, party 1"));
        }
        if s0.dim() != s1.dim() || s0.precision != s1.precision {
            return Err(Error::shape("party shares disagree on dim or precision"));
        }
        Ok(Self { shares: [s0, s1] })
    }

    /// A public vector embedded as a sharing: party 0 holds it, party 1 holds zeros.
    pub fn public(values: Vec<Ring>, precision: u32) -> Self {
        let dim = values.len();
        Self {
            shares: [
                ShareVector::new(Party::Zero, values, precision),
                ShareVector::zeros(Party::One, dim, precision),
            ],
        }
    }

    pub fn share(&self, party: Party) -> &ShareVector {
        &self.shares[party.index()]
    }

    pub fn into_shares(self) -> (ShareVector, ShareVector) {
        let [a, b] = self.shares;
        (a, b)
    }

    pub fn dim(&self) -> usize {
        self.shares[0].dim()
    }

    pub fn precision(&self) -> u32 {
        self.shares[0].precision
    }

    /// Recombines without accounting. Test and oracle use only; protocol
    /// code opens values through the engine so the ledger sees it.
    pub fn reconstruct(&self) -> Vec<Ring> {
        reconstruct(&self.shares[0], &self.shares[1]).expect("invariant: shares are consistent")
    }

    pub fn reconstruct_real(&self) -> Vec<f64> {
        decode_vec(&self.reconstruct(), self.precision())
    }

    /// Element `idx[t]` of this sharing at position `t`. Local, free.
    pub fn gather(&self, idx: &[usize]) -> Self {
        self.map_parties(|s| {
            ShareVector::new(s.party, idx.iter().map(|&i| s.values[i]).collect(), s.precision)
        })
    }

    /// Concatenation of same-precision sharings. Local, free.
    pub fn concat(parts: &[SharedVector]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat of no sharings"));
        };
        let p = first.precision();
        let mut v = [Vec::new(), Vec::new()];
        for part in parts {
            if part.precision() != p {
                return Err(Error::shape("concat of sharings at different precisions"));
            }
            for (buf, s) in v.iter_mut().zip(&part.shares) {
                buf.extend_from_slice(&s.values);
            }
        }
        let [v0, v1] = v;
        Self::from_shares(
            ShareVector::new(Party::Zero, v0, p),
            ShareVector::new(Party::One, v1, p),
        )
    }

    pub(crate) fn map_parties(&self, mut f: impl FnMut(&ShareVector) -> ShareVector) -> Self {
        Self {
            shares: [f(&self.shares[0]), f(&self.shares[1])],
        }
    }

    pub(crate) fn zip_parties(
        &self,
        other: &SharedVector,
        mut f: impl FnMut(&ShareVector, &ShareVector) -> Result<ShareVector>,
    ) -> Result<Self> {
        Ok(Self {
            shares: [
                f(&self.shares[0], &other.shares[0])?,
                f(&self.shares[1], &other.shares[1])?,
            ],
        })
    }

    pub(crate) fn with_precision(mut self, precision: u32) -> Self {
        for s in &mut self.shares {
            s.precision = precision;
        }
        self
    }
}

/// XOR-shared bits, one per element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedBits {
    pub(crate) shares: [Vec<u8>; 2],
}

impl SharedBits {
    pub fn len(&self) -> usize {
        self.shares[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn share(&self, party: Party) -> &[u8] {
        &self.shares[party.index()]
    }

    pub fn reconstruct(&self) -> Vec<bool> {
        self.shares[0]
            .iter()
            .zip(&self.shares[1])
            .map(|(a, b)| (a ^ b) & 1 == 1)
            .collect()
    }
}

/// Splits `x` with party 0's share drawn from a PRG seeded with `seed`.
pub fn share_with_seed(x: &[Ring], precision: u32, seed: u64) -> (ShareVector, ShareVector) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    split(x, precision, &mut rng)
}

pub(crate) fn split<R: Rng>(x: &[Ring], precision: u32, rng: &mut R) -> (ShareVector, ShareVector) {
    let r: Vec<Ring> = x.iter().map(|_| Ring(rng.random())).collect();
    let other = x.iter().zip(&r).map(|(&v, &ri)| v - ri).collect();
    (
        ShareVector::new(Party::Zero, r, precision),
        ShareVector::new(Party::One, other, precision),
    )
}
