//! Server-side aggregation for one round, in each of the three modes.

use std::collections::BTreeMap;


use crate::config::Mode;
use crate::distances::{
    cosine_plain, pairwise_cosine, pairwise_sq_euclidean, sq_euclidean_plain, DistanceMatrix, Metric,
};
use crate::error::{Error, Result};
use crate::filters::{FilterDecision, FilterRule};
use crate::projection::{project_ring, project_shares, ProjectionSpec};
use crate::ring::encode_vec;
use crate::stpc::{CostLedger, CostTable, Engine, SharedVector, Stage};
use crate::tuning::{aggregate_clipped, plan_clipping, plan_clipping_plain, ClippingPlan};

/// Accumulated per-client updates for FoolsGold, keyed by client id.
#[derive(Clone, Debug, Default)]
pub struct History {
    /// Full-dimension plaintext sums (mirror mode, attacker oracle).
    pub plain: BTreeMap<usize, Vec<f64>>,
    /// Shared sums as the servers hold them (projected under ABBR).
    pub shared: BTreeMap<usize, SharedVector>,
}

impl History {
    /// Adds `models[i] - global` to the plaintext sum of `clients[i]`.
    pub fn record_plain(&mut self, clients: &[usize], models: &[Vec<f64>], global: &[f64]) {
        for (&c, m) in clients.iter().zip(models) {
            let h = self.plain.entry(c).or_insert_with(|| vec![0.0; global.len()]);
            for ((h, v), g) in h.iter_mut().zip(m).zip(global) {
                *h += v - g;
            }
        }
    }
}

/// What the servers did with one round's submissions.
#[derive(Clone, Debug)]
pub struct Aggregation {
    pub params: Vec<f64>,
    /// Indexed by position in the submitted list.
    pub decision: FilterDecision,
    pub clipping: Option<ClippingPlan>,
    pub ledger: CostLedger,
    /// Positions dropped before filtering because their update had zero norm.
    pub degenerate: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub mode: Mode,
    pub rule: FilterRule,
    pub clipping: bool,
    pub precision: u32,
    pub costs: CostTable,
    /// Present under ABBR.
    pub projection: Option<ProjectionSpec>,
}

impl Pipeline {
    /// Dimension the distances and norms are computed in.
    pub fn working_dim(&self, d: usize) -> usize {
        self.projection.as_ref().map_or(d, |p| p.k)
    }

    /// Aggregates `models` (one per entry of `clients`) around `global`.
    pub fn aggregate(
        &self,
        seed: u64,
        global: &[f64],
        models: &[Vec<f64>],
        clients: &[usize],
        history: &mut History,
    ) -> Result<Aggregation> {
        if models.is_empty() || models.len() != clients.len() {
            return Err(Error::shape("one model per sampled client is required"));
        }
        if let Some(m) = models.iter().find(|m| m.len() != global.len()) {
            return Err(Error::shape(format!("model of dim {} against global of dim {}", m.len(), global.len())));
        }
        match self.mode {
            Mode::PlaintextMirror => self.aggregate_plain(global, models, clients, history),
            Mode::Abbr | Mode::BaselineFullDim => self.aggregate_secure(seed, global, models, clients, history),
        }
    }

    /// The plain defense at full dimension. Reads the history but leaves it
    /// untouched; callers record the round themselves.
    pub fn aggregate_plain(
        &self,
        global: &[f64],
        models: &[Vec<f64>],
        clients: &[usize],
        history: &History,
    ) -> Result<Aggregation> {
        let n = models.len();
        let updates = || -> Vec<Vec<f64>> {
            models
                .iter()
                .map(|m| m.iter().zip(global).map(|(a, b)| a - b).collect())
                .collect()
        };
        let (decision, degenerate) = match (&self.rule, self.rule.metric()) {
            (_, None) => (self.rule.apply(&DistanceMatrix::from_fn(n, Metric::SquaredEuclidean, |_, _| 0.0))?, vec![]),
            (_, Some(Metric::SquaredEuclidean)) => (self.rule.apply(&sq_euclidean_plain(models))?, vec![]),
            (FilterRule::FoolsGold, _) => {
                let mut hist = updates();
                for (h, c) in hist.iter_mut().zip(clients) {
                    if let Some(prev) = history.plain.get(c) {
                        h.iter_mut().zip(prev).for_each(|(a, b)| *a += b);
                    }
                }
                self.filter_cosine(n, |idx| cosine_plain(&pick(&hist, idx)))?
            }
            _ => {
                let u = updates();
                self.filter_cosine(n, |idx| cosine_plain(&pick(&u, idx)))?
            }
        };

        let clipping = if self.clipping {
            Some(plan_clipping_plain(models, global, &decision.accepted)?)
        } else {
            None
        };
        let coeffs = coefficients(&decision, clipping.as_ref());
        let mut params = global.to_vec();
        for (&i, c) in decision.accepted.iter().zip(coeffs) {
            for ((p, m), g) in params.iter_mut().zip(&models[i]).zip(global) {
                *p += c * (m - g);
            }
        }
        Ok(Aggregation {
            params,
            decision,
            clipping,
            ledger: CostLedger::default(),
            degenerate,
        })
    }

    fn aggregate_secure(
        &self,
        seed: u64,
        global: &[f64],
        models: &[Vec<f64>],
        clients: &[usize],
        history: &mut History,
    ) -> Result<Aggregation> {
        let n = models.len();
        let p = self.precision;
        let mut engine = Engine::new(seed, self.costs);
        let g = encode_vec(global, p)?;

        engine.set_stage(Stage::Sharing);
        let shares = models
            .iter()
            .map(|m| engine.share_real(m, p))
            .collect::<Result<Vec<_>>>()?;

        engine.set_stage(Stage::Projection);
        let (low, g_low) = match &self.projection {
            Some(spec) => (project_shares(&mut engine, &shares, spec)?, project_ring(&g, spec)?),
            None => (shares.clone(), g.clone()),
        };

        let (decision, degenerate) = match self.rule.metric() {
            None => (FilterDecision::accept_all(self.rule.name(), n), vec![]),
            Some(Metric::SquaredEuclidean) => {
                engine.set_stage(Stage::Distance);
                let shared = pairwise_sq_euclidean(&mut engine, &low)?;
                engine.set_stage(Stage::Filter);
                let dists = shared.open(&mut engine);
                (self.rule.apply(&dists)?, vec![])
            }
            Some(Metric::Cosine) => {
                engine.set_stage(Stage::Distance);
                let mut vecs = low
                    .iter()
                    .map(|m| engine.sub_public(m, &g_low))
                    .collect::<Result<Vec<_>>>()?;
                if self.rule == FilterRule::FoolsGold {
                    for (v, c) in vecs.iter_mut().zip(clients) {
                        if let Some(prev) = history.shared.get(c) {
                            *v = engine.add(v, prev)?;
                        }
                    }
                    for (v, c) in vecs.iter().zip(clients) {
                        history.shared.insert(*c, v.clone());
                    }
                }
                self.filter_cosine(n, |idx| {
                    let subset: Vec<SharedVector> = idx.iter().map(|&i| vecs[i].clone()).collect();
                    engine.set_stage(Stage::Distance);
                    pairwise_cosine(&mut engine, &subset)
                })?
            }
        };

        let clipping = if self.clipping {
            engine.set_stage(Stage::Tuning);
            Some(plan_clipping(&mut engine, &low, &g_low, &decision.accepted)?)
        } else {
            None
        };

        engine.set_stage(Stage::Aggregation);
        let coeffs = coefficients(&decision, clipping.as_ref());
        let params = aggregate_clipped(&mut engine, &shares, &g, &decision.accepted, &coeffs)?;
        Ok(Aggregation {
            params,
            decision,
            clipping,
            ledger: engine.take_ledger(),
            degenerate,
        })
    }

    /// Runs a cosine-based rule, dropping clients whose update has zero norm
    /// (they are rejected) and retrying on the rest.
    fn filter_cosine(
        &self,
        n: usize,
        mut dists: impl FnMut(&[usize]) -> Result<DistanceMatrix>,
    ) -> Result<(FilterDecision, Vec<usize>)> {
        let mut live: Vec<usize> = (0..n).collect();
        let mut dropped = Vec::new();
        let sub = loop {
            if live.len() < 3 {
                log::warn!("{}: fewer than three usable updates, failing open", self.rule.name());
                return Ok((FilterDecision::from_mask(self.rule.name(), &vec![false; n], vec![0.0; n], None), dropped));
            }
            match dists(&live) {
                Ok(d) => break self.rule.apply(&d)?,
                Err(Error::DegenerateNorm { client }) => {
                    log::warn!("{}: update at position {} has zero norm, rejecting it", self.rule.name(), live[client]);
                    dropped.push(live.remove(client));
                }
                Err(e) => return Err(e),
            }
        };
        let mut mask = vec![false; n];
        let mut scores = vec![0.0; n];
        let mut weights = sub.weights.as_ref().map(|_| vec![0.0; n]);
        for (pos, &i) in live.iter().enumerate() {
            mask[i] = sub.is_accepted(pos);
            scores[i] = sub.scores[pos];
            if let Some(w) = weights.as_mut() {
                w[i] = sub.weight(pos);
            }
        }
        let mut decision = FilterDecision::from_mask(self.rule.name(), &mask, scores, weights);
        decision.fail_open |= sub.fail_open;
        dropped.sort_unstable();
        Ok((decision, dropped))
    }
}

fn pick(v: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// `c_i = w_i * gamma_i / sum(w)` over the accepted clients, in order.
fn coefficients(decision: &FilterDecision, clipping: Option<&ClippingPlan>) -> Vec<f64> {
    let w: Vec<f64> = decision.accepted.iter().map(|&i| decision.weight(i)).collect();
    let total: f64 = w.iter().sum();
    let m = decision.accepted.len() as f64;
    decision
        .accepted
        .iter()
        .zip(&w)
        .map(|(&i, &wi)| {
            let gamma = clipping.map_or(1.0, |c| c.factor(i));
            // all-zero weights cannot happen after fail-open, but stay safe
            let share = if total > 0.0 { wi / total } else { 1.0 / m };
            share * gamma
        })
        .collect()
}
