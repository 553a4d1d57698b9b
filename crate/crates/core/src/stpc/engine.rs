//! The two-party engine: every protocol operator runs through here so that
//! the ledger and the channel see it.
//!
//! The two parties advance in lockstep in one thread. Linear operators are
//! computed independently on each party's share. MUL is a real Beaver
//! multiplication whose masked openings travel over [`PartyChannel`].
//! Comparison, selection, truncation and the non-linear helpers are computed
//! by the dealer functionality on reconstructed values and re-shared, while
//! the ledger charges the declared [`CostTable`] rows.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::{decode_vec, encode_vec, truncate, Ring, RING_BYTES};
use crate::stpc::channel::{Payload, PartyChannel};
use crate::stpc::dealer::{Dealer, TripleStream};
use crate::stpc::ledger::{CostLedger, CostTable, Op, Phase, Stage};
use crate::stpc::share::{split, ShareVector, SharedBits, SharedVector};
use crate::stpc::Party;

const PARTIES: [Party; 2] = [Party::Zero, Party::One];

#[derive(Debug)]
pub struct Engine {
    dealer: Dealer,
    client_rng: ChaCha20Rng,
    channel: PartyChannel,
    ledger: CostLedger,
    costs: CostTable,
    triples: TripleStream,
    stage: Stage,
}

impl Engine {
    pub fn new(seed: u64, costs: CostTable) -> Self {
        let mut client_rng = ChaCha20Rng::seed_from_u64(seed);
        client_rng.set_stream(1);
        Self {
            dealer: Dealer::new(seed),
            client_rng,
            channel: PartyChannel::new(),
            ledger: CostLedger::default(),
            costs,
            triples: TripleStream::default(),
            stage: Stage::Other,
        }
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub(crate) fn ledger_mut(&mut self) -> &mut CostLedger {
        &mut self.ledger
    }

    /// Returns the ledger accumulated so far and starts a fresh one.
    pub fn take_ledger(&mut self) -> CostLedger {
        std::mem::take(&mut self.ledger)
    }

    pub fn channel(&self) -> &PartyChannel {
        &self.channel
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// Attributes subsequent operators to `stage`; returns the previous one.
    pub fn set_stage(&mut self, stage: Stage) -> Stage {
        std::mem::replace(&mut self.stage, stage)
    }

    pub fn triples_available(&self) -> usize {
        self.triples.len()
    }

    /// Setup phase: the dealer issues `count` Beaver triples.
    pub fn preprocess_triples(&mut self, count: usize) {
        if count == 0 {
            return;
        }
        let batch = self.dealer.triples(count);
        self.triples.extend(batch);
        let per_party = self.costs.mul_setup_bytes * count as u64;
        self.opaque_traffic(Phase::Setup, per_party);
        for party in PARTIES {
            self.ledger.charge(Phase::Setup, party, per_party);
        }
    }

    /// Tops the triple pool up to at least `count`.
    pub fn ensure_triples(&mut self, count: usize) {
        let have = self.triples.len();
        if have < count {
            self.preprocess_triples(count - have);
        }
    }

    // ---- sharing ----------------------------------------------------------

    /// Client-side SHR: splits a plaintext ring vector into two shares.
    pub fn share(&mut self, x: &[Ring], precision: u32) -> SharedVector {
        let (s0, s1) = split(x, precision, &mut self.client_rng);
        self.ledger.record(self.stage, Op::Shr, x.len() as u64);
        SharedVector::from_shares(s0, s1).expect("split yields consistent shares")
    }

    pub fn share_real(&mut self, x: &[f64], precision: u32) -> Result<SharedVector> {
        let encoded = encode_vec(x, precision)?;
        Ok(self.share(&encoded, precision))
    }

    // ---- free operators ---------------------------------------------------

    pub fn add(&mut self, u: &SharedVector, v: &SharedVector) -> Result<SharedVector> {
        let out = u.zip_parties(v, |a, b| a.add(b))?;
        self.ledger.record(self.stage, Op::Add, u.dim() as u64);
        Ok(out)
    }

    pub fn sub(&mut self, u: &SharedVector, v: &SharedVector) -> Result<SharedVector> {
        let out = u.zip_parties(v, |a, b| a.sub(b))?;
        self.ledger.record(self.stage, Op::Sub, u.dim() as u64);
        Ok(out)
    }

    /// Adds a public vector (party 0 absorbs it).
    pub fn add_public(&mut self, u: &SharedVector, public: &[Ring]) -> Result<SharedVector> {
        self.public_linear(u, public, Op::Add)
    }

    pub fn sub_public(&mut self, u: &SharedVector, public: &[Ring]) -> Result<SharedVector> {
        self.public_linear(u, public, Op::Sub)
    }

    fn public_linear(&mut self, u: &SharedVector, public: &[Ring], op: Op) -> Result<SharedVector> {
        if public.len() != u.dim() {
            return Err(Error::shape(format!(
                "public operand has dim {}, sharing has {}",
                public.len(),
                u.dim()
            )));
        }
        let out = u.map_parties(|s| {
            if s.party != Party::Zero {
                return s.clone();
            }
            let values = s
                .values
                .iter()
                .zip(public)
                .map(|(&a, &b)| if op == Op::Add { a + b } else { a - b })
                .collect();
            ShareVector::new(s.party, values, s.precision)
        });
        self.ledger.record(self.stage, op, u.dim() as u64);
        Ok(out)
    }

    /// Multiplies by a public ring constant encoded with `scalar_precision`
    /// fractional bits. The result sits at `u.precision + scalar_precision`;
    /// no truncation, no communication.
    pub fn scale_public(&mut self, u: &SharedVector, scalar: Ring, scalar_precision: u32) -> SharedVector {
        let out = u
            .map_parties(|s| {
                ShareVector::new(
                    s.party,
                    s.values.iter().map(|&a| a * scalar).collect(),
                    s.precision,
                )
            })
            .with_precision(u.precision() + scalar_precision);
        self.ledger.record(self.stage, Op::Scale, u.dim() as u64);
        out
    }

    /// Sums each party's shares into a single element.
    pub fn sum_elements(&mut self, u: &SharedVector) -> SharedVector {
        let out = u.map_parties(|s| {
            let total = s.values.iter().fold(Ring::ZERO, |acc, &v| acc + v);
            ShareVector::new(s.party, vec![total], s.precision)
        });
        self.ledger
            .record(self.stage, Op::Add, u.dim().saturating_sub(1) as u64);
        out
    }

    // ---- MUL ---------------------------------------------------------------

    /// Element-wise Beaver multiplication. Output precision is the sum of the
    /// operands' precisions (no truncation).
    pub fn mul(&mut self, u: &SharedVector, v: &SharedVector) -> Result<SharedVector> {
        if u.dim() != v.dim() {
            return Err(Error::shape(format!("mul of dims {} and {}", u.dim(), v.dim())));
        }
        let n = u.dim();
        let triples = self.triples.take(n)?;

        // Each party masks its shares with its triple shares and sends them.
        let mut masked: [Vec<Ring>; 2] = [Vec::with_capacity(2 * n), Vec::with_capacity(2 * n)];
        for party in PARTIES {
            let p = party.index();
            let (x, y) = (&u.share(party).values, &v.share(party).values);
            let buf = &mut masked[p];
            buf.extend(x.iter().zip(&triples).map(|(&xi, t)| xi - t.a[p]));
            buf.extend(y.iter().zip(&triples).map(|(&yi, t)| yi - t.b[p]));
        }
        for party in PARTIES {
            let payload = std::mem::take(&mut masked[party.index()]);
            self.channel.send(party, Phase::Online, Payload::Ring(payload));
        }
        let pad = self.costs.mul_online_bytes - 2 * RING_BYTES as u64;
        if pad > 0 {
            for party in PARTIES {
                self.channel
                    .send(party, Phase::Online, Payload::Opaque(pad * n as u64));
            }
        }
        let mut received = [Vec::new(), Vec::new()];
        for party in PARTIES {
            match self.channel.recv(party).map(|m| m.payload) {
                Some(Payload::Ring(v)) => received[party.index()] = v,
                other => unreachable!("expected masked openings, got {other:?}"),
            }
            if pad > 0 {
                self.channel.recv(party);
            }
        }

        // Both parties open d = x - a and e = y - b.
        let opened: Vec<(Ring, Ring)> = (0..n)
            .map(|i| {
                (
                    received[0][i] + received[1][i],
                    received[0][n + i] + received[1][n + i],
                )
            })
            .collect();
        let precision = u.precision() + v.precision();
        let mut out = Vec::with_capacity(2);
        for party in PARTIES {
            let p = party.index();
            let values = opened
                .iter()
                .zip(&triples)
                .map(|(&(d, e), t)| {
                    let mut z = t.c[p] + d * t.b[p] + e * t.a[p];
                    if party == Party::Zero {
                        z += d * e;
                    }
                    z
                })
                .collect();
            out.push(ShareVector::new(party, values, precision));
        }
        let s1 = out.pop().unwrap();
        let s0 = out.pop().unwrap();

        self.ledger.record(self.stage, Op::Mul, n as u64);
        for party in PARTIES {
            self.ledger
                .charge(Phase::Online, party, self.costs.mul_online_bytes * n as u64);
        }
        SharedVector::from_shares(s0, s1)
    }

    /// Fixed-point product: Beaver multiplication followed by truncation back
    /// to `u`'s precision.
    pub fn mul_fixed(&mut self, u: &SharedVector, v: &SharedVector) -> Result<SharedVector> {
        let prod = self.mul(u, v)?;
        Ok(self.truncate(&prod, v.precision()))
    }

    /// Drops `bits` fractional bits (arithmetic shift of the signed value),
    /// evaluated by the dealer functionality.
    pub fn truncate(&mut self, u: &SharedVector, bits: u32) -> SharedVector {
        if bits == 0 {
            return u.clone();
        }
        let opened = u.reconstruct();
        let shifted: Vec<Ring> = opened.iter().map(|&r| truncate(r, bits)).collect();
        self.ledger.record(self.stage, Op::Trunc, u.dim() as u64);
        self.reshare(&shifted, u.precision() - bits)
    }

    // ---- CMP / MUX ---------------------------------------------------------

    /// Boolean sharing of `[x_i > y_i]` under the signed interpretation.
    pub fn cmp(&mut self, x: &SharedVector, y: &SharedVector) -> Result<SharedBits> {
        if x.dim() != y.dim() || x.precision() != y.precision() {
            return Err(Error::shape("cmp operands differ in dim or precision"));
        }
        let n = x.dim();
        let (xs, ys) = (x.reconstruct(), y.reconstruct());
        let mut shares = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for (a, b) in xs.iter().zip(&ys) {
            let bit = u8::from(a.signed() > b.signed());
            let mask = self.dealer.bit();
            shares[0].push(mask);
            shares[1].push(bit ^ mask);
        }
        self.charge_table(Op::Cmp, n, self.costs.cmp_setup_bytes, self.costs.cmp_online_bytes);
        Ok(SharedBits { shares })
    }

    /// Selects `x` where the shared bit is 1 and `y` where it is 0. A
    /// single-bit selector is broadcast over the whole vector.
    pub fn mux(&mut self, x: &SharedVector, y: &SharedVector, s: &SharedBits) -> Result<SharedVector> {
        if x.dim() != y.dim() || x.precision() != y.precision() {
            return Err(Error::shape("mux operands differ in dim or precision"));
        }
        if s.len() != 1 && s.len() != x.dim() {
            return Err(Error::shape(format!(
                "selector has {} bits for {} elements",
                s.len(),
                x.dim()
            )));
        }
        let bits = s.reconstruct();
        let (xs, ys) = (x.reconstruct(), y.reconstruct());
        let chosen: Vec<Ring> = (0..x.dim())
            .map(|i| {
                let b = if bits.len() == 1 { bits[0] } else { bits[i] };
                if b {
                    xs[i]
                } else {
                    ys[i]
                }
            })
            .collect();
        let n = x.dim();
        self.charge_table(Op::Mux, n, self.costs.mux_setup_bytes, self.costs.mux_online_bytes);
        Ok(self.reshare(&chosen, x.precision()))
    }

    // ---- opening -----------------------------------------------------------

    /// Opens a sharing to both parties.
    pub fn reveal(&mut self, u: &SharedVector) -> Vec<Ring> {
        let n = u.dim() as u64;
        for party in PARTIES {
            self.channel.send(
                party,
                Phase::Online,
                Payload::Ring(u.share(party).values.clone()),
            );
        }
        let pad = self.costs.reveal_bytes - RING_BYTES as u64;
        if pad > 0 {
            for party in PARTIES {
                self.channel.send(party, Phase::Online, Payload::Opaque(pad * n));
            }
        }
        let mut got = [Vec::new(), Vec::new()];
        for party in PARTIES {
            if let Some(Payload::Ring(v)) = self.channel.recv(party).map(|m| m.payload) {
                got[party.index()] = v;
            }
            if pad > 0 {
                self.channel.recv(party);
            }
        }
        self.ledger.record(self.stage, Op::Reveal, n);
        for party in PARTIES {
            self.ledger
                .charge(Phase::Online, party, self.costs.reveal_bytes * n);
        }
        got[0].iter().zip(&got[1]).map(|(&a, &b)| a + b).collect()
    }

    pub fn reveal_real(&mut self, u: &SharedVector) -> Vec<f64> {
        let p = u.precision();
        decode_vec(&self.reveal(u), p)
    }

    /// Opens a sharing to the dealer functionality only (not to the parties).
    pub fn func_open(&mut self, u: &SharedVector) -> Vec<Ring> {
        self.ledger.record(self.stage, Op::Func, u.dim() as u64);
        u.reconstruct()
    }

    pub fn func_open_real(&mut self, u: &SharedVector) -> Vec<f64> {
        let p = u.precision();
        decode_vec(&self.func_open(u), p)
    }

    /// The dealer functionality hands a computed value back as fresh shares.
    pub fn func_share(&mut self, values: &[Ring], precision: u32) -> SharedVector {
        self.ledger.record(self.stage, Op::Func, values.len() as u64);
        self.reshare(values, precision)
    }

    fn reshare(&mut self, values: &[Ring], precision: u32) -> SharedVector {
        let (s0, s1) = split(values, precision, self.dealer.rng());
        SharedVector::from_shares(s0, s1).expect("split yields consistent shares")
    }

    fn charge_table(&mut self, op: Op, n: usize, setup: u64, online: u64) {
        let n = n as u64;
        self.opaque_traffic(Phase::Setup, setup * n);
        self.opaque_traffic(Phase::Online, online * n);
        self.ledger.record(self.stage, op, n);
        for party in PARTIES {
            self.ledger.charge(Phase::Setup, party, setup * n);
            self.ledger.charge(Phase::Online, party, online * n);
        }
    }

    fn opaque_traffic(&mut self, phase: Phase, per_party: u64) {
        if per_party == 0 {
            return;
        }
        for party in PARTIES {
            self.channel.send(party, phase, Payload::Opaque(per_party));
        }
        for party in PARTIES {
            self.channel.recv(party);
        }
    }
}
