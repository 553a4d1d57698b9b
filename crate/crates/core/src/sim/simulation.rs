//! The federated loop: sampling, local work, attacks, aggregation, metrics.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::{load_csv, load_idx, synthetic, Dataset};
use super::metrics::{accuracy, backdoor_accuracy, tnr, tpr};
use super::model::Model;
use super::pipeline::{History, Pipeline};
use super::train::{local_train, TrainConfig};
use crate::attacks::{
    adaptive_at, adaptive_md, gaussian_attack, label_flip, scale_update, AttackKind, Trigger,
};
use crate::config::{DataSource, ExperimentConfig, Mode, VectorSpec};
use crate::error::{Error, Result};
use crate::filters::FilterRule;
use crate::projection::ProjectionSpec;
use crate::stpc::CostLedger;
use crate::tuning::ClippingPlan;

/// Public model both servers and all clients see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalModel {
    pub params: Vec<f64>,
    /// Rounds completed so far.
    pub round: usize,
}

/// What the attackers settled on in a round with an adaptive attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub gamma: f64,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub mode: Mode,
    pub rule: String,
    /// Dimension distances and norms were computed in.
    pub k: usize,
    pub d: usize,
    /// Client ids, ascending; every per-position field below follows this order.
    pub sampled: Vec<usize>,
    pub byzantine: Vec<usize>,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    /// Clients rejected up front for a zero-norm update.
    pub degenerate: Vec<usize>,
    pub fail_open: bool,
    pub weights: Option<Vec<f64>>,
    /// Byzantine share of the rejected clients (1 if none rejected).
    pub tpr: f64,
    /// Benign share of the accepted clients (1 if none accepted).
    pub tnr: f64,
    pub ma: Option<f64>,
    pub ba: Option<f64>,
    pub clipping: Option<ClippingPlan>,
    pub attack: Option<AttackTrace>,
    pub ledger: CostLedger,
}

enum Workload {
    Training {
        model: Box<dyn Model>,
        train: Dataset,
        test: Dataset,
        parts: Vec<Vec<usize>>,
        sgd: TrainConfig,
    },
    Vectors {
        center: Vec<f64>,
        shift: Vec<f64>,
        noise: f64,
    },
}

// Stream tags keep every random draw independent of the others.
const TAG_SETUP: u64 = 1;
const TAG_SAMPLE: u64 = 2;
const TAG_CLIENT: u64 = 3;
const TAG_ATTACK: u64 = 4;
const TAG_ENGINE: u64 = 5;

fn stream(seed: u64, tag: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed.rotate_left(8) ^ tag);
    rng.set_stream(index);
    rng
}

pub struct Simulation {
    cfg: ExperimentConfig,
    workload: Workload,
    pipeline: Pipeline,
    /// Attacker oracle: the plain defense at full dimension.
    oracle: Pipeline,
    history: History,
    global: GlobalModel,
    byzantine_pool: usize,
}

impl Simulation {
    /// Validates the config, loads data and partitions it.
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut setup = stream(cfg.seed, TAG_SETUP, 0);
        let (workload, global) = match &cfg.data.source {
            DataSource::Vectors(spec) => vector_workload(spec, &mut setup),
            source => {
                let (train, test) = load_source(source, cfg.seed)?;
                let parts = cfg
                    .data
                    .partition
                    .split(&train.labels, train.classes, cfg.clients, &mut setup)?;
                let model = cfg.training.model.build(train.feature_dim(), train.classes as usize);
                let params = model.init(&mut setup);
                (
                    Workload::Training {
                        model,
                        train,
                        test,
                        parts,
                        sgd: cfg.training.sgd(),
                    },
                    params,
                )
            }
        };
        let d = global.len();
        let projection = match cfg.mode {
            Mode::Abbr => Some(ProjectionSpec::for_clients(
                cfg.projection_seed(),
                d,
                cfg.per_round,
                cfg.projection.epsilon,
                cfg.projection.eta,
            )?),
            _ => None,
        };
        let pipeline = Pipeline {
            mode: cfg.mode,
            rule: cfg.defense.filter.clone(),
            clipping: cfg.defense.clipping,
            precision: cfg.precision,
            costs: cfg.costs,
            projection,
        };
        let oracle = Pipeline {
            mode: Mode::PlaintextMirror,
            projection: None,
            ..pipeline.clone()
        };
        let byzantine_pool = cfg.byzantine_counts().0;
        log::info!(
            "simulation: mode {}, rule {}, d = {d}, k = {}",
            cfg.mode.name(),
            cfg.defense.filter.name(),
            pipeline.working_dim(d)
        );
        Ok(Self {
            cfg,
            workload,
            pipeline,
            oracle,
            history: History::default(),
            global: GlobalModel { params: global, round: 0 },
            byzantine_pool,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn global(&self) -> &GlobalModel {
        &self.global
    }

    pub fn dim(&self) -> usize {
        self.global.params.len()
    }

    /// Dimension distances are computed in.
    pub fn working_dim(&self) -> usize {
        self.pipeline.working_dim(self.dim())
    }

    pub fn is_byzantine(&self, client: usize) -> bool {
        client < self.byzantine_pool
    }

    /// Clean and backdoor accuracy of the current global model.
    pub fn evaluate(&self) -> (Option<f64>, Option<f64>) {
        match &self.workload {
            Workload::Training { model, test, .. } => {
                let ma = accuracy(model.as_ref(), &self.global.params, test);
                let ba = self
                    .trigger()
                    .map(|t| backdoor_accuracy(model.as_ref(), &self.global.params, test, t));
                (Some(ma), ba)
            }
            Workload::Vectors { .. } => (None, None),
        }
    }

    fn trigger(&self) -> Option<&Trigger> {
        match &self.cfg.attack.behavior {
            AttackKind::TriggerBackdoor { trigger, .. } => Some(trigger),
            _ => None,
        }
    }

    /// `round(frac * n)` attackers from the byzantine pool, the rest from
    /// the benign clients, uniformly without replacement.
    fn sample_clients(&self, round: usize) -> Vec<usize> {
        let mut rng = stream(self.cfg.seed, TAG_SAMPLE, round as u64);
        let per = self.cfg.byzantine_counts().1;
        let pool = self.byzantine_pool;
        let mut ids: Vec<usize> = sample(&mut rng, pool, per).into_iter().collect();
        let benign = self.cfg.clients - pool;
        ids.extend(sample(&mut rng, benign, self.cfg.per_round - per).into_iter().map(|i| i + pool));
        ids.sort_unstable();
        ids
    }

    /// Honest (or data-poisoned) local model of `client`.
    fn local_model(&self, round: usize, client: usize) -> Result<Vec<f64>> {
        let g = &self.global.params;
        let mut rng = stream(self.cfg.seed ^ round as u64, TAG_CLIENT, client as u64);
        let byz = self.is_byzantine(client);
        match &self.workload {
            Workload::Vectors { center, shift, noise } => Ok(g
                .iter()
                .zip(center)
                .zip(shift)
                .map(|((g, c), s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    g + c + noise * z + if byz { *s } else { 0.0 }
                })
                .collect()),
            Workload::Training {
                model,
                train,
                parts,
                sgd,
                ..
            } => {
                let idx = &parts[client];
                match (&self.cfg.attack.behavior, byz) {
                    (AttackKind::LabelFlip, true) => {
                        let mut local = train.subset(idx);
                        label_flip(&mut local.labels, local.classes)?;
                        let all: Vec<usize> = (0..local.len()).collect();
                        local_train(model.as_ref(), g, &local, &all, sgd, &mut rng, client)
                    }
                    (
                        AttackKind::TriggerBackdoor {
                            trigger,
                            poison_fraction,
                            scale,
                        },
                        true,
                    ) => {
                        let mut local = train.subset(idx);
                        trigger.poison(&mut local.features, &mut local.labels, *poison_fraction, &mut rng)?;
                        let all: Vec<usize> = (0..local.len()).collect();
                        let trained = local_train(model.as_ref(), g, &local, &all, sgd, &mut rng, client)?;
                        Ok(scale_update(g, &trained, *scale))
                    }
                    _ => local_train(model.as_ref(), g, train, idx, sgd, &mut rng, client),
                }
            }
        }
    }

    /// Replaces the attackers' models for model-level attacks.
    fn apply_attack(
        &self,
        round: usize,
        sampled: &[usize],
        models: &mut [Vec<f64>],
    ) -> Result<Option<AttackTrace>> {
        let byz_pos: Vec<usize> = (0..sampled.len()).filter(|&i| self.is_byzantine(sampled[i])).collect();
        if byz_pos.is_empty() {
            return Ok(None);
        }
        let g = &self.global.params;
        let mut rng = stream(self.cfg.seed, TAG_ATTACK, round as u64);
        let benign_updates = || -> Vec<Vec<f64>> {
            (0..sampled.len())
                .filter(|i| !byz_pos.contains(i))
                .map(|i| models[i].iter().zip(g).map(|(a, b)| a - b).collect())
                .collect()
        };
        let outcome = match &self.cfg.attack.behavior {
            AttackKind::Gaussian => {
                let honest: Vec<Vec<f64>> = byz_pos.iter().map(|&i| models[i].clone()).collect();
                for (&i, m) in byz_pos.iter().zip(gaussian_attack(&honest, &mut rng)?) {
                    models[i] = m;
                }
                return Ok(None);
            }
            AttackKind::AdaptiveMd {
                gamma0,
                step,
                loss_threshold,
                iterations,
            } => {
                let benign = benign_updates();
                let base: Vec<Vec<f64>> = models.to_vec();
                adaptive_md(&benign, *gamma0, *step, *loss_threshold, *iterations, |byz| {
                    let mut trial = base.clone();
                    let poisoned: Vec<f64> = g.iter().zip(byz).map(|(a, b)| a + b).collect();
                    for &i in &byz_pos {
                        trial[i] = poisoned.clone();
                    }
                    let agg = self.oracle.aggregate_plain(g, &trial, sampled, &self.history)?;
                    Ok(agg.params.iter().zip(g).map(|(a, b)| a - b).collect())
                })?
            }
            AttackKind::AdaptiveAt { gamma0, iterations } => {
                adaptive_at(&benign_updates(), byz_pos.len(), *gamma0, *iterations, self.cfg.precision)?
            }
            _ => return Ok(None),
        };
        let poisoned: Vec<f64> = g.iter().zip(&outcome.update).map(|(a, b)| a + b).collect();
        for &i in &byz_pos {
            models[i] = poisoned.clone();
        }
        Ok(Some(AttackTrace {
            gamma: outcome.gamma,
            fallback: outcome.fallback,
        }))
    }

    /// Runs one round and advances the global model.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let round = self.global.round + 1;
        let sampled = self.sample_clients(round);
        let mut models = sampled
            .iter()
            .map(|&c| self.local_model(round, c))
            .collect::<Result<Vec<_>>>()?;
        let attack = self.apply_attack(round, &sampled, &mut models)?;

        let seed = stream(self.cfg.seed, TAG_ENGINE, round as u64).random();
        let agg = self
            .pipeline
            .aggregate(seed, &self.global.params, &models, &sampled, &mut self.history)?;
        if self.cfg.defense.filter == FilterRule::FoolsGold {
            self.history.record_plain(&sampled, &models, &self.global.params);
        }
        if let Some(bad) = agg.params.iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!("aggregate has non-finite entry {bad}")));
        }
        self.global = GlobalModel {
            params: agg.params,
            round,
        };

        let flags: Vec<bool> = sampled.iter().map(|&c| self.is_byzantine(c)).collect();
        let ids = |pos: &[usize]| pos.iter().map(|&i| sampled[i]).collect::<Vec<_>>();
        let (ma, ba) = self.evaluate();
        Ok(RoundReport {
            round,
            mode: self.cfg.mode,
            rule: agg.decision.rule.clone(),
            k: self.working_dim(),
            d: self.dim(),
            byzantine: sampled.iter().copied().filter(|&c| self.is_byzantine(c)).collect(),
            accepted: ids(&agg.decision.accepted),
            rejected: ids(&agg.decision.rejected),
            degenerate: ids(&agg.degenerate),
            fail_open: agg.decision.fail_open,
            weights: agg.decision.weights.clone(),
            tpr: tpr(&agg.decision.rejected, &flags),
            tnr: tnr(&agg.decision.accepted, &flags),
            ma,
            ba,
            clipping: agg.clipping,
            attack,
            ledger: agg.ledger,
            sampled,
        })
    }

    /// Runs the configured number of rounds.
    pub fn run(&mut self) -> Result<Vec<RoundReport>> {
        (0..self.cfg.rounds).map(|_| self.run_round()).collect()
    }
}

fn vector_workload(spec: &VectorSpec, rng: &mut ChaCha20Rng) -> (Workload, Vec<f64>) {
    let mut signs = |scale: f64| -> Vec<f64> {
        (0..spec.dim)
            .map(|_| if rng.random::<bool>() { scale } else { -scale })
            .collect()
    };
    let center = signs(spec.center);
    let shift = signs(spec.attacker_offset);
    (
        Workload::Vectors {
            center,
            shift,
            noise: spec.noise,
        },
        vec![0.0; spec.dim],
    )
}

fn load_source(source: &DataSource, seed: u64) -> Result<(Dataset, Dataset)> {
    match source {
        DataSource::Synthetic(spec) => synthetic(spec, seed),
        DataSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            classes,
        } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            Ok(match classes {
                Some(keep) => (train.restrict_classes(keep), test.restrict_classes(keep)),
                None => (train, test),
            })
        }
        DataSource::Csv { train, test } => {
            let train = load_csv(train)?;
            let test = load_csv(test)?;
            if train.feature_dim() != test.feature_dim() {
                return Err(Error::Dataset(format!(
                    "train has {} features, test has {}",
                    train.feature_dim(),
                    test.feature_dim()
                )));
            }
            let classes = train.classes.max(test.classes);
            Ok((
                Dataset::new(train.features, train.labels, classes)?,
                Dataset::new(test.features, test.labels, classes)?,
            ))
        }
        DataSource::Vectors(_) => unreachable!("vector workloads have no dataset"),
    }
}
