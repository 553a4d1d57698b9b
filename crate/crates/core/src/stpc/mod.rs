//! Two-party additive secret sharing over Z_{2^64} with a trusted dealer.

pub mod channel;
pub mod dealer;
pub mod engine;
pub mod ledger;
pub mod share;

use serde::{Deserialize, Serialize};

pub use channel::{Message, PartyChannel, Payload};
pub use dealer::{BeaverTriple, Dealer, TripleStream};
pub use engine::Engine;
pub use ledger::{CostLedger, CostTable, Op, OpCounts, Phase, Stage, ALL_OPS};
pub use share::{reconstruct, share_with_seed, ShareVector, SharedBits, SharedVector};

/// One of the two computing servers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Zero,
    One,
}

impl Party {
    pub fn index(self) -> usize {
        match self {
            Party::Zero => 0,
            Party::One => 1,
        }
    }
}
