//! Trusted-dealer emulation: correlated randomness for the setup phase.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::Ring;

/// A Beaver triple, with both parties' additive shares of `a`, `b` and `c = a*b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeaverTriple {
    pub a: [Ring; 2],
    pub b: [Ring; 2],
    pub c: [Ring; 2],
}

impl BeaverTriple {
    pub fn is_consistent(&self) -> bool {
        let a = self.a[0] + self.a[1];
        let b = self.b[0] + self.b[1];
        self.c[0] + self.c[1] == a * b
    }
}

/// A FIFO of preprocessed triples. Consumption past the end is an error.
#[derive(Clone, Debug, Default)]
pub struct TripleStream {
    triples: VecDeque<BeaverTriple>,
}

impl TripleStream {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn extend(&mut self, batch: impl IntoIterator<Item = BeaverTriple>) {
        self.triples.extend(batch);
    }

    pub fn take(&mut self, needed: usize) -> Result<Vec<BeaverTriple>> {
        if needed > self.triples.len() {
            return Err(Error::DealerUnderflow {
                needed,
                available: self.triples.len(),
            });
        }
        Ok(self.triples.drain(..needed).collect())
    }
}

#[derive(Debug)]
pub struct Dealer {
    rng: ChaCha20Rng,
}

impl Dealer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn triple(&mut self) -> BeaverTriple {
        let a = Ring(self.rng.random());
        let b = Ring(self.rng.random());
        let c = a * b;
        let (a0, b0, c0) = (
            Ring(self.rng.random()),
            Ring(self.rng.random()),
            Ring(self.rng.random()),
        );
        BeaverTriple {
            a: [a0, a - a0],
            b: [b0, b - b0],
            c: [c0, c - c0],
        }
    }

    pub fn triples(&mut self, count: usize) -> Vec<BeaverTriple> {
        (0..count).map(|_| self.triple()).collect()
    }

    pub fn ring(&mut self) -> Ring {
        Ring(self.rng.random())
    }

    pub fn bit(&mut self) -> u8 {
        self.rng.random::<u8>() & 1
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}
