//! Tiny classifiers trained by the simulated clients.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// A differentiable model over a flat parameter vector.
pub trait Model: Send + Sync {
    fn param_count(&self) -> usize;

    fn init(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Mean loss over the batch; writes the mean gradient into `grad`.
    fn loss_grad(&self, params: &[f64], xs: &[&[f64]], ys: &[u32], grad: &mut [f64]) -> f64;

    fn predict(&self, params: &[f64], x: &[f64]) -> u32;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic,
    Mlp { hidden: usize },
}

impl ModelSpec {
    pub fn build(&self, features: usize, classes: usize) -> Box<dyn Model> {
        match *self {
            ModelSpec::Logistic => Box::new(Logistic { features, classes }),
            ModelSpec::Mlp { hidden } => Box::new(Mlp {
                features,
                hidden,
                classes,
            }),
        }
    }
}

/// Softmax cross-entropy in place: turns logits into probabilities and
/// returns `-ln p[y]`.
fn softmax_xent(logits: &mut [f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    logits.iter_mut().for_each(|z| *z /= sum);
    -logits[y].max(f64::MIN_POSITIVE).ln()
}

fn argmax(v: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as u32
}

/// Multinomial logistic regression. Layout: weights `classes x features`
/// row-major, then `classes` biases.
#[derive(Clone, Debug)]
pub struct Logistic {
    pub features: usize,
    pub classes: usize,
}

impl Logistic {
    fn logits(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        let (w, b) = params.split_at(self.classes * self.features);
        for (c, o) in out.iter_mut().enumerate() {
            let row = &w[c * self.features..(c + 1) * self.features];
            *o = b[c] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        }
    }
}

impl Model for Logistic {
    fn param_count(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn init(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0; self.param_count()]
    }

    fn loss_grad(&self, params: &[f64], xs: &[&[f64]], ys: &[u32], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut p = vec![0.0; self.classes];
        let mut loss = 0.0;
        let scale = 1.0 / xs.len().max(1) as f64;
        let wlen = self.classes * self.features;
        for (x, &y) in xs.iter().zip(ys) {
            self.logits(params, x, &mut p);
            loss += softmax_xent(&mut p, y as usize);
            p[y as usize] -= 1.0;
            for c in 0..self.classes {
                let d = p[c] * scale;
                let row = &mut grad[c * self.features..(c + 1) * self.features];
                row.iter_mut().zip(x.iter()).for_each(|(g, v)| *g += d * v);
                grad[wlen + c] += d;
            }
        }
        loss * scale
    }

    fn predict(&self, params: &[f64], x: &[f64]) -> u32 {
        let mut out = vec![0.0; self.classes];
        self.logits(params, x, &mut out);
        argmax(&out)
    }
}

/// One hidden ReLU layer. Layout: `W1 (hidden x features)`, `b1`,
/// `W2 (classes x hidden)`, `b2`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub features: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Mlp {
    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden * self.features;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.classes * self.hidden;
        (w1, b1, w2)
    }

    fn forward(&self, params: &[f64], x: &[f64], h: &mut [f64], out: &mut [f64]) {
        let (o_b1, o_w2, o_b2) = self.offsets();
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &params[j * self.features..(j + 1) * self.features];
            let z = params[o_b1 + j] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            *hj = z.max(0.0);
        }
        for (c, o) in out.iter_mut().enumerate() {
            let row = &params[o_w2 + c * self.hidden..o_w2 + (c + 1) * self.hidden];
            *o = params[o_b2 + c] + row.iter().zip(h.iter()).map(|(a, v)| a * v).sum::<f64>();
        }
    }
}

impl Model for Mlp {
    fn param_count(&self) -> usize {
        self.hidden * (self.features + 1) + self.classes * (self.hidden + 1)
    }

    fn init(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let (o_b1, o_w2, o_b2) = self.offsets();
        let s1 = 1.0 / (self.features as f64).sqrt();
        let s2 = 1.0 / (self.hidden as f64).sqrt();
        let mut p = vec![0.0; self.param_count()];
        p[..o_b1].iter_mut().for_each(|w| *w = rng.random_range(-s1..s1));
        p[o_w2..o_b2].iter_mut().for_each(|w| *w = rng.random_range(-s2..s2));
        p
    }

    fn loss_grad(&self, params: &[f64], xs: &[&[f64]], ys: &[u32], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (o_b1, o_w2, o_b2) = self.offsets();
        let scale = 1.0 / xs.len().max(1) as f64;
        let mut h = vec![0.0; self.hidden];
        let mut p = vec![0.0; self.classes];
        let mut dh = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            self.forward(params, x, &mut h, &mut p);
            loss += softmax_xent(&mut p, y as usize);
            p[y as usize] -= 1.0;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..self.classes {
                let d = p[c] * scale;
                grad[o_b2 + c] += d;
                for j in 0..self.hidden {
                    grad[o_w2 + c * self.hidden + j] += d * h[j];
                    dh[j] += d * params[o_w2 + c * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                if h[j] <= 0.0 {
                    continue;
                }
                grad[o_b1 + j] += dh[j];
                let row = &mut grad[j * self.features..(j + 1) * self.features];
                row.iter_mut().zip(x.iter()).for_each(|(g, v)| *g += dh[j] * v);
            }
        }
        loss * scale
    }

    fn predict(&self, params: &[f64], x: &[f64]) -> u32 {
        let mut h = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.classes];
        self.forward(params, x, &mut h, &mut out);
        argmax(&out)
    }
}
