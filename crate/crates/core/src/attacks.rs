//! Byzantine client behaviours. Model-level attacks work on updates
//! (`L - G`); data-level attacks rewrite a client's training partition.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attacker share of the population and what the attackers do.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub byzantine_fraction: f64,
    pub behavior: AttackKind,
}

impl AttackConfig {
    pub fn none() -> Self {
        Self {
            byzantine_fraction: 0.0,
            behavior: AttackKind::None,
        }
    }

    /// Number of byzantine clients among `n` (rounded to nearest). With
    /// behaviour `none` they are designated but act honestly.
    pub fn byzantine_count(&self, n: usize) -> usize {
        (self.byzantine_fraction * n as f64).round() as usize
    }

    /// Attackers must stay a strict minority.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.byzantine_fraction) {
            return Err(Error::param(format!(
                "byzantine_fraction {} outside [0, 1)",
                self.byzantine_fraction
            )));
        }
        let c = self.byzantine_count(n);
        if 2 * c >= n {
            return Err(Error::param(format!("{c} byzantine of {n} clients is not a minority")));
        }
        self.behavior.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttackKind {
    None,
    LabelFlip,
    Gaussian,
    TriggerBackdoor {
        trigger: Trigger,
        /// Fraction of the attacker's samples that get stamped.
        #[serde(default = "default_poison_fraction")]
        poison_fraction: f64,
        /// Update scale applied after training.
        #[serde(default = "one")]
        scale: f64,
    },
    AdaptiveMd {
        #[serde(default = "default_md_gamma")]
        gamma0: f64,
        #[serde(default = "default_md_step")]
        step: f64,
        /// Required: deviation an iteration must exceed to count as a success.
        loss_threshold: f64,
        #[serde(default = "default_md_iterations")]
        iterations: usize,
    },
    AdaptiveAt {
        #[serde(default = "default_at_gamma")]
        gamma0: f64,
        #[serde(default = "default_at_iterations")]
        iterations: usize,
    },
}

fn default_poison_fraction() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn default_md_gamma() -> f64 {
    10.0
}
fn default_md_step() -> f64 {
    5.0
}
fn default_md_iterations() -> usize {
    10
}
fn default_at_gamma() -> f64 {
    50.0
}
fn default_at_iterations() -> usize {
    64
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::LabelFlip => "label-flip",
            AttackKind::Gaussian => "gaussian",
            AttackKind::TriggerBackdoor { .. } => "trigger-backdoor",
            AttackKind::AdaptiveMd { .. } => "adaptive-md",
            AttackKind::AdaptiveAt { .. } => "adaptive-at",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AttackKind::TriggerBackdoor {
                trigger,
                poison_fraction,
                scale,
            } => {
                if !(0.0..=1.0).contains(poison_fraction) || !scale.is_finite() || *scale < 0.0 {
                    return Err(Error::param("trigger backdoor needs poison_fraction in [0, 1] and scale >= 0"));
                }
                if trigger.features.is_empty() {
                    return Err(Error::param("trigger has no features"));
                }
            }
            AttackKind::AdaptiveMd {
                gamma0,
                step,
                loss_threshold,
                iterations,
            } => {
                if !gamma0.is_finite() || !step.is_finite() || !loss_threshold.is_finite() || *iterations == 0 {
                    return Err(Error::param("adaptive-md needs finite gamma0, step, loss_threshold and iterations > 0"));
                }
            }
            AttackKind::AdaptiveAt { gamma0, iterations } => {
                if !(gamma0.is_finite() && *gamma0 > 0.0) || *iterations == 0 {
                    return Err(Error::param("adaptive-at needs gamma0 > 0 and iterations > 0"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether the attack rewrites training data rather than models.
    pub fn is_data_attack(&self) -> bool {
        matches!(self, AttackKind::LabelFlip | AttackKind::TriggerBackdoor { .. })
    }
}

/// `y -> C - 1 - y`.
pub fn label_flip(labels: &mut [u32], classes: u32) -> Result<()> {
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::param(format!("label {y} outside 0..{classes}")));
    }
    for y in labels.iter_mut() {
        *y = classes - 1 - *y;
    }
    Ok(())
}

/// Per-coordinate mean and population standard deviation.
pub fn fit_gaussian(models: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let Some(first) = models.first() else {
        return Err(Error::param("gaussian fit needs at least one model"));
    };
    let n = models.len() as f64;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for m in models {
        for (acc, v) in mean.iter_mut().zip(m) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; d];
    for m in models {
        for ((acc, v), mu) in var.iter_mut().zip(m).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    Ok((mean, var.into_iter().map(|v| (v / n).sqrt()).collect()))
}

/// Replaces each model by an independent draw from the Gaussian fitted to all of them.
pub fn gaussian_attack(models: &[Vec<f64>], rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    let (mean, std) = fit_gaussian(models)?;
    Ok(models
        .iter()
        .map(|_| {
            mean.iter()
                .zip(&std)
                .map(|(&mu, &sd)| mu + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect())
}

/// Pixel pattern written into selected input features, plus the label it maps to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub features: Vec<usize>,
    pub value: f64,
    pub target: u32,
}

impl Trigger {
    pub fn stamp(&self, x: &mut [f64]) -> Result<()> {
        let len = x.len();
        for &f in &self.features {
            *x.get_mut(f)
                .ok_or_else(|| Error::param(format!("trigger feature {f} outside input of {len}")))? = self.value;
        }
        Ok(())
    }

    /// Stamps and relabels a `fraction` of the samples, chosen at random.
    pub fn poison(
        &self,
        features: &mut [Vec<f64>],
        labels: &mut [u32],
        fraction: f64,
        rng: &mut impl Rng,
    ) -> Result<usize> {
        let mut count = 0;
        for (x, y) in features.iter_mut().zip(labels.iter_mut()) {
            if rng.random::<f64>() < fraction {
                self.stamp(x)?;
                *y = self.target;
                count += 1;
            }
        }
        Ok(count)
    }
}

/// `G + scale * (L - G)`.
pub fn scale_update(global: &[f64], local: &[f64], scale: f64) -> Vec<f64> {
    global.iter().zip(local).map(|(g, l)| g + scale * (l - g)).collect()
}

pub fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; vectors.first().map_or(0, Vec::len)];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

fn sign(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn deviate(ben: &[f64], sgn: &[f64], gamma: f64) -> Vec<f64> {
    ben.iter().zip(sgn).map(|(b, s)| b - gamma * s).collect()
}

/// What an adaptive attack settled on.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveOutcome {
    pub update: Vec<f64>,
    pub gamma: f64,
    /// The search never certified a scale and fell back.
    pub fallback: bool,
    /// Every scale tried, with whether it succeeded.
    pub trace: Vec<(f64, bool)>,
}

/// Maximum-deviation binary search over the scale of `mean - gamma * sign(mean)`.
///
/// `aggregate` plays the defense: given the byzantine update (submitted by
/// every attacker) it returns the aggregated update. A scale succeeds when
/// `|agg - byz| > loss_threshold`. With no success the attack falls back to
/// `gamma0`.
pub fn adaptive_md(
    benign: &[Vec<f64>],
    gamma0: f64,
    step: f64,
    loss_threshold: f64,
    iterations: usize,
    mut aggregate: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<AdaptiveOutcome> {
    if benign.is_empty() {
        return Err(Error::param("adaptive-md needs benign updates"));
    }
    let ben = mean(benign);
    let sgn = sign(&ben);
    let mut gamma = gamma0;
    let mut s = step;
    let mut succ = None;
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let byz = deviate(&ben, &sgn, gamma);
        let agg = aggregate(&byz)?;
        let l = agg.iter().zip(&byz).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let ok = l > loss_threshold;
        trace.push((gamma, ok));
        if ok {
            succ = Some(gamma);
            gamma += s / 2.0;
        } else {
            gamma -= s / 2.0;
        }
        s /= 2.0;
    }
    let (gamma, fallback) = match succ {
        Some(g) => (g, false),
        None => {
            log::info!("adaptive-md: no scale succeeded, using gamma0 = {gamma0}");
            (gamma0, true)
        }
    };
    Ok(AdaptiveOutcome {
        update: deviate(&ben, &sgn, gamma),
        gamma,
        fallback,
        trace,
    })
}

/// Lower median of the norms of `c` byzantine copies and the benign updates.
pub fn median_norm(byz: &[f64], c: usize, benign: &[Vec<f64>]) -> f64 {
    let mut norms: Vec<f64> = benign.iter().map(|b| norm(b)).collect();
    norms.extend(std::iter::repeat_n(norm(byz), c));
    norms.sort_by(f64::total_cmp);
    norms[(norms.len() - 1) / 2]
}

/// Halves the scale of `mean - gamma * sign(mean)` until its norm fits under
/// the median norm (recomputed each iteration by `tau`). Returns the last
/// in-loop update. If the scale underflows `min_gamma` or the iterations run
/// out first, the benign mean is returned instead.
pub fn adaptive_at_with(
    benign: &[Vec<f64>],
    gamma0: f64,
    iterations: usize,
    min_gamma: f64,
    mut tau: impl FnMut(&[f64]) -> f64,
) -> Result<AdaptiveOutcome> {
    if benign.is_empty() {
        return Err(Error::param("adaptive-at needs benign updates"));
    }
    let ben = mean(benign);
    let sgn = sign(&ben);
    let mut gamma = gamma0;
    let mut trace = Vec::new();
    for _ in 0..iterations {
        let byz = deviate(&ben, &sgn, gamma);
        let fits = norm(&byz) <= tau(&byz);
        trace.push((gamma, fits));
        if fits {
            return Ok(AdaptiveOutcome {
                update: byz,
                gamma,
                fallback: false,
                trace,
            });
        }
        gamma /= 2.0;
        if gamma < min_gamma {
            break;
        }
    }
    log::info!("adaptive-at: norm bound never met, submitting the benign mean");
    Ok(AdaptiveOutcome {
        update: ben,
        gamma: 0.0,
        fallback: true,
        trace,
    })
}

/// Adaptive-AT with the median over `c` byzantine copies and the benign updates.
pub fn adaptive_at(
    benign: &[Vec<f64>],
    c: usize,
    gamma0: f64,
    iterations: usize,
    precision: u32,
) -> Result<AdaptiveOutcome> {
    let min_gamma = (-(precision as f64)).exp2();
    adaptive_at_with(benign, gamma0, iterations, min_gamma, |byz| median_norm(byz, c, benign))
}
