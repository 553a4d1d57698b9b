//! Operation and byte accounting for the two-party engine.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::RING_BYTES;
use crate::stpc::Party;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Setup,
    Online,
}

/// Operator kinds tracked by the ledger.
///
/// `Shr`..`Mux` are the protocol operators. `Scale` is multiplication by a
/// public constant, `Trunc` a fixed-point truncation, `Reveal` an opening
/// between the parties and `Func` an evaluation routed through the dealer
/// functionality (division, square root, filtering on revealed distances).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Shr,
    Add,
    Sub,
    Mul,
    Cmp,
    Mux,
    Scale,
    Trunc,
    Reveal,
    Func,
}

/// Pipeline stage an operation is attributed to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[default]
    Other,
    Sharing,
    Projection,
    Distance,
    Filter,
    Tuning,
    Aggregation,
}

/// Declared per-operator communication, in bytes sent by each party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostTable {
    pub mul_setup_bytes: u64,
    pub mul_online_bytes: u64,
    pub cmp_setup_bytes: u64,
    pub cmp_online_bytes: u64,
    pub mux_setup_bytes: u64,
    pub mux_online_bytes: u64,
    pub reveal_bytes: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        let ring = RING_BYTES as u64;
        Self {
            mul_setup_bytes: 3 * ring,
            mul_online_bytes: 2 * ring,
            cmp_setup_bytes: 128 * 64 / 8,
            cmp_online_bytes: 2 * 64 / 8,
            mux_setup_bytes: 128 * 64 / 16,
            mux_online_bytes: 64 / 8,
            reveal_bytes: ring,
        }
    }
}

impl CostTable {
    /// Beaver openings and reveals put real ring elements on the wire, so the
    /// table may not declare less than those messages occupy.
    pub fn validate(&self) -> Result<()> {
        let ring = RING_BYTES as u64;
        if self.mul_online_bytes < 2 * ring {
            return Err(Error::config(
                "cost_table.mul_online_bytes",
                format!("must be at least {} (two masked ring elements)", 2 * ring),
            ));
        }
        if self.reveal_bytes < ring {
            return Err(Error::config(
                "cost_table.reveal_bytes",
                format!("must be at least {ring} (one ring element)"),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub shr: u64,
    pub add: u64,
    pub sub: u64,
    pub mul: u64,
    pub cmp: u64,
    pub mux: u64,
    pub scale: u64,
    pub trunc: u64,
    pub reveal: u64,
    pub func: u64,
}

impl OpCounts {
    pub fn get(&self, op: Op) -> u64 {
        match op {
            Op::Shr => self.shr,
            Op::Add => self.add,
            Op::Sub => self.sub,
            Op::Mul => self.mul,
            Op::Cmp => self.cmp,
            Op::Mux => self.mux,
            Op::Scale => self.scale,
            Op::Trunc => self.trunc,
            Op::Reveal => self.reveal,
            Op::Func => self.func,
        }
    }

    fn slot(&mut self, op: Op) -> &mut u64 {
        match op {
            Op::Shr => &mut self.shr,
            Op::Add => &mut self.add,
            Op::Sub => &mut self.sub,
            Op::Mul => &mut self.mul,
            Op::Cmp => &mut self.cmp,
            Op::Mux => &mut self.mux,
            Op::Scale => &mut self.scale,
            Op::Trunc => &mut self.trunc,
            Op::Reveal => &mut self.reveal,
            Op::Func => &mut self.func,
        }
    }

    pub fn merge(&mut self, other: &OpCounts) {
        for op in ALL_OPS {
            *self.slot(op) += other.get(op);
        }
    }
}

pub const ALL_OPS: [Op; 10] = [
    Op::Shr,
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::Cmp,
    Op::Mux,
    Op::Scale,
    Op::Trunc,
    Op::Reveal,
    Op::Func,
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyBytes {
    pub party0: u64,
    pub party1: u64,
}

impl PartyBytes {
    pub fn get(&self, party: Party) -> u64 {
        match party {
            Party::Zero => self.party0,
            Party::One => self.party1,
        }
    }

    fn add(&mut self, party: Party, bytes: u64) {
        match party {
            Party::Zero => self.party0 += bytes,
            Party::One => self.party1 += bytes,
        }
    }

    pub fn total(&self) -> u64 {
        self.party0 + self.party1
    }
}

/// Counts of operators and bytes, split by phase and by pipeline stage.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub ops: OpCounts,
    pub setup_bytes: PartyBytes,
    pub online_bytes: PartyBytes,
    pub stages: BTreeMap<Stage, OpCounts>,
}

impl CostLedger {
    pub fn record(&mut self, stage: Stage, op: Op, count: u64) {
        if count == 0 {
            return;
        }
        *self.ops.slot(op) += count;
        *self.stages.entry(stage).or_default().slot(op) += count;
    }

    pub fn charge(&mut self, phase: Phase, party: Party, bytes: u64) {
        match phase {
            Phase::Setup => self.setup_bytes.add(party, bytes),
            Phase::Online => self.online_bytes.add(party, bytes),
        }
    }

    pub fn bytes(&self, phase: Phase, party: Party) -> u64 {
        match phase {
            Phase::Setup => self.setup_bytes.get(party),
            Phase::Online => self.online_bytes.get(party),
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.setup_bytes.total() + self.online_bytes.total()
    }

    pub fn stage(&self, stage: Stage) -> OpCounts {
        self.stages.get(&stage).copied().unwrap_or_default()
    }

    /// True when at least one communicating operator ran.
    pub fn has_interactive_ops(&self) -> bool {
        self.ops.mul + self.ops.cmp + self.ops.mux > 0
    }

    pub fn merge(&mut self, other: &CostLedger) {
        self.ops.merge(&other.ops);
        for party in [Party::Zero, Party::One] {
            self.setup_bytes.add(party, other.setup_bytes.get(party));
            self.online_bytes.add(party, other.online_bytes.get(party));
        }
        for (stage, counts) in &other.stages {
            self.stages.entry(*stage).or_default().merge(counts);
        }
    }
}
