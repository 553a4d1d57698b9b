//! In-process message channel between the two computing parties.

use std::collections::VecDeque;

use crate::ring::{Ring, RING_BYTES};
use crate::stpc::ledger::{PartyBytes, Phase};
use crate::stpc::Party;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Ring(Vec<Ring>),
    /// Traffic whose content the emulation does not model (OT / garbled
    /// circuit material); only its size is carried.
    Opaque(u64),
}

impl Payload {
    pub fn byte_len(&self) -> u64 {
        match self {
            Payload::Ring(v) => (v.len() * RING_BYTES) as u64,
            Payload::Opaque(n) => *n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub from: Party,
    pub phase: Phase,
    pub payload: Payload,
}

/// FIFO queues, one per direction, plus counters of every byte sent.
#[derive(Debug, Default)]
pub struct PartyChannel {
    queues: [VecDeque<Message>; 2],
    setup: PartyBytes,
    online: PartyBytes,
}

impl PartyChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, from: Party, phase: Phase, payload: Payload) {
        let n = payload.byte_len();
        let counter = match phase {
            Phase::Setup => &mut self.setup,
            Phase::Online => &mut self.online,
        };
        match from {
            Party::Zero => counter.party0 += n,
            Party::One => counter.party1 += n,
        }
        self.queues[from.index()].push_back(Message {
            from,
            phase,
            payload,
        });
    }

    /// Pops the oldest message sent by `from`.
    pub fn recv(&mut self, from: Party) -> Option<Message> {
        self.queues[from.index()].pop_front()
    }

    pub fn observed(&self, phase: Phase) -> PartyBytes {
        match phase {
            Phase::Setup => self.setup,
            Phase::Online => self.online,
        }
    }

    pub fn pending(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }
}
