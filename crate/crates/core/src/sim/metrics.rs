//! Detection ratios and accuracies.

use super::data::Dataset;
use super::model::Model;
use crate::attacks::Trigger;

/// Byzantine share of the filtered-out models; 1 when nothing was filtered.
pub fn tpr(rejected: &[usize], byzantine: &[bool]) -> f64 {
    if rejected.is_empty() {
        return 1.0;
    }
    rejected.iter().filter(|&&i| byzantine[i]).count() as f64 / rejected.len() as f64
}

/// Benign share of the accepted models; 1 when nothing was accepted.
pub fn tnr(accepted: &[usize], byzantine: &[bool]) -> f64 {
    if accepted.is_empty() {
        return 1.0;
    }
    accepted.iter().filter(|&&i| !byzantine[i]).count() as f64 / accepted.len() as f64
}

/// Clean test accuracy.
pub fn accuracy(model: &dyn Model, params: &[f64], test: &Dataset) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let hits = test
        .features
        .iter()
        .zip(&test.labels)
        .filter(|(x, &y)| model.predict(params, x) == y)
        .count();
    hits as f64 / test.len() as f64
}

/// Share of triggered test samples (true label not the target) classified
/// as the target.
pub fn backdoor_accuracy(model: &dyn Model, params: &[f64], test: &Dataset, trigger: &Trigger) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    let mut x = Vec::new();
    for (row, &y) in test.features.iter().zip(&test.labels) {
        if y == trigger.target {
            continue;
        }
        x.clear();
        x.extend_from_slice(row);
        if trigger.stamp(&mut x).is_err() {
            return 0.0;
        }
        total += 1;
        if model.predict(params, &x) == trigger.target {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
