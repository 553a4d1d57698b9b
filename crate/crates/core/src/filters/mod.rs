//! Vector-wise filtering rules. Each consumes a plaintext distance matrix
//! (opened to the dealer functionality) and returns the accepted index set.

mod faba;
mod flame;
mod foolsgold;
mod multi_krum;

use serde::{Deserialize, Serialize};

pub use faba::faba;
pub use flame::{core_distances, flame_filter, mutual_reachability, FlameClustering};
pub use foolsgold::{foolsgold, foolsgold_weights};
pub use multi_krum::{krum_scores, multi_krum};

use crate::distances::Metric;
use crate::error::Result;
use crate::distances::DistanceMatrix;

/// Which filter runs, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FilterRule {
    /// Plain mean of every submitted model.
    None,
    MultiKrum { f: usize, m_sel: usize },
    #[serde(rename = "foolsgold")]
    FoolsGold,
    Faba { f: usize },
    Flame,
}

impl FilterRule {
    pub fn name(&self) -> &'static str {
        match self {
            FilterRule::None => "none",
            FilterRule::MultiKrum { .. } => "multi-krum",
            FilterRule::FoolsGold => "foolsgold",
            FilterRule::Faba { .. } => "faba",
            FilterRule::Flame => "flame",
        }
    }

    /// Distance the rule consumes, if any.
    pub fn metric(&self) -> Option<Metric> {
        match self {
            FilterRule::None => None,
            FilterRule::MultiKrum { .. } | FilterRule::Faba { .. } => Some(Metric::SquaredEuclidean),
            FilterRule::FoolsGold | FilterRule::Flame => Some(Metric::Cosine),
        }
    }

    /// Runs the rule on a distance matrix of the right metric.
    pub fn apply(&self, dists: &DistanceMatrix) -> Result<FilterDecision> {
        match *self {
            FilterRule::None => Ok(FilterDecision::accept_all(self.name(), dists.n())),
            FilterRule::MultiKrum { f, m_sel } => multi_krum(dists, f, m_sel),
            FilterRule::FoolsGold => Ok(foolsgold(dists)),
            FilterRule::Faba { f } => faba(dists, f),
            FilterRule::Flame => flame_filter(dists),
        }
    }
}

/// Outcome of one filter over `n` clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub rule: String,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    /// Rule-specific per-client score (Krum score, distance to mean, ...).
    pub scores: Vec<f64>,
    /// Aggregation weights, for rules that produce them.
    pub weights: Option<Vec<f64>>,
    /// Set when the rule produced no usable accepted set and every client was
    /// let through instead.
    pub fail_open: bool,
}

impl FilterDecision {
    /// Builds a decision from an accept mask. An empty accepted set fails open.
    pub fn from_mask(rule: &str, accept: &[bool], scores: Vec<f64>, weights: Option<Vec<f64>>) -> Self {
        let n = accept.len();
        let mut accepted: Vec<usize> = (0..n).filter(|&i| accept[i]).collect();
        let mut rejected: Vec<usize> = (0..n).filter(|&i| !accept[i]).collect();
        let mut fail_open = false;
        let mut weights = weights;
        if accepted.is_empty() && n > 0 {
            log::warn!("{rule}: no client accepted, failing open");
            accepted = (0..n).collect();
            rejected.clear();
            fail_open = true;
            weights = weights.map(|w| vec![1.0; w.len()]);
        }
        Self {
            rule: rule.to_string(),
            accepted,
            rejected,
            scores,
            weights,
            fail_open,
        }
    }

    pub fn accept_all(rule: &str, n: usize) -> Self {
        Self::from_mask(rule, &vec![true; n], vec![0.0; n], None)
    }

    pub fn n(&self) -> usize {
        self.accepted.len() + self.rejected.len()
    }

    pub fn is_accepted(&self, i: usize) -> bool {
        self.accepted.binary_search(&i).is_ok()
    }

    /// Weight of client `i` in the aggregate (1 for unweighted rules).
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }
}

/// Indices of `values` sorted ascending, ties by lower index.
pub(crate) fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}
