//! Local SGD.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::Model;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 64,
            learning_rate: 0.1,
        }
    }
}

/// Minibatch SGD from `init` over the samples `idx` of `data`, reshuffled
/// every epoch.
pub fn local_train(
    model: &dyn Model,
    init: &[f64],
    data: &Dataset,
    idx: &[usize],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    client: usize,
) -> Result<Vec<f64>> {
    let mut params = init.to_vec();
    if idx.is_empty() {
        return Ok(params);
    }
    let mut order = idx.to_vec();
    let mut grad = vec![0.0; params.len()];
    let batch = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| data.features[i].as_slice()).collect();
            let ys: Vec<u32> = chunk.iter().map(|&i| data.labels[i]).collect();
            let loss = model.loss_grad(&params, &xs, &ys, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Divergence { client });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence { client });
    }
    Ok(params)
}
