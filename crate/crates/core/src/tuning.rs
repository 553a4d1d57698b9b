//! Adaptive norm clipping: update norms measured in the projected space,
//! median/min bounds via a comparison network, per-client clipping factors,
//! and clipping plus aggregation of the full-dimension shares.

use serde::{Deserialize, Serialize};

use crate::distances::products_summed;
use crate::error::{Error, Result};
use crate::ring::{decode_vec, encode, Ring};
use crate::stpc::{Engine, SharedVector};

/// Bounds and factors of one round. `e`, `s1` and `s2` are audit copies for
/// reports; the protocol itself only reveals `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClippingPlan {
    pub e: Vec<f64>,
    pub s1: f64,
    pub s2: f64,
    /// Indexed by client; `None` for clients the filter rejected.
    pub gamma: Vec<Option<f64>>,
}

impl ClippingPlan {
    /// Factor for client `i`, 1 if it has none.
    pub fn factor(&self, i: usize) -> f64 {
        self.gamma.get(i).copied().flatten().unwrap_or(1.0)
    }

    pub fn clipped_count(&self) -> usize {
        self.gamma.iter().flatten().filter(|&&g| g < 1.0).count()
    }
}

/// `e_i = |L'_i - G'|` for every client, as one `n`-element sharing at the
/// models' precision. Costs `n * k` MULs; the square root is taken by the
/// dealer functionality.
pub fn update_norms(engine: &mut Engine, models: &[SharedVector], g_proj: &[Ring]) -> Result<SharedVector> {
    let Some(first) = models.first() else {
        return Err(Error::shape("no models"));
    };
    let (k, p) = (first.dim(), first.precision());
    let diffs = models
        .iter()
        .map(|m| engine.sub_public(m, g_proj))
        .collect::<Result<Vec<_>>>()?;
    engine.ensure_triples(models.len() * k);
    // Dropping only half the extra bits keeps small norms accurate; the sum
    // still has 2^33 of headroom.
    let squared = SharedVector::concat(&products_summed(engine, &diffs, &diffs, p / 2)?)?;
    let roots: Vec<Ring> = engine
        .func_open_real(&squared)
        .iter()
        .map(|&s| encode(s.max(0.0).sqrt(), p).map(|f| f.raw))
        .collect::<Result<_>>()?;
    Ok(engine.func_share(&roots, p))
}

pub fn update_norms_plain(models: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    models
        .iter()
        .map(|m| m.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect()
}

/// Position of the lower median in a sorted list of `n`.
pub fn median_index(n: usize) -> usize {
    (n - 1) / 2
}

/// `(S1, S2)`: lower median and minimum.
pub fn clipping_bounds(e: &[f64]) -> Result<(f64, f64)> {
    if e.is_empty() {
        return Err(Error::param("clipping bounds of no norms"));
    }
    let mut sorted = e.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[median_index(e.len())], sorted[0]))
}

/// Comparators `(i, j)`, `i < j`, of Batcher's odd-even merge sort for `n`
/// inputs. Built for the next power of two; comparators touching padding are
/// dropped, which is sound because padding sits at the top and never moves.
pub fn sorting_network(n: usize) -> Vec<(usize, usize)> {
    let size = n.next_power_of_two();
    let mut out = Vec::new();
    let mut p = 1;
    while p < size {
        let mut k = p;
        while k >= 1 {
            let mut j = k % p;
            while j + k < size {
                for i in 0..k.min(size - j - k) {
                    let (a, b) = (i + j, i + j + k);
                    if a / (2 * p) == b / (2 * p) && b < n {
                        out.push((a, b));
                    }
                }
                j += 2 * k;
            }
            k /= 2;
        }
        p *= 2;
    }
    out
}

/// Sorts a sharing ascending with one CMP and two MUXes per comparator.
pub fn secure_sort(engine: &mut Engine, values: &SharedVector) -> Result<SharedVector> {
    let n = values.dim();
    let mut cells: Vec<SharedVector> = (0..n).map(|i| values.gather(&[i])).collect();
    for (i, j) in sorting_network(n) {
        let swap = engine.cmp(&cells[i], &cells[j])?;
        let lo = engine.mux(&cells[j], &cells[i], &swap)?;
        let hi = engine.mux(&cells[i], &cells[j], &swap)?;
        cells[i] = lo;
        cells[j] = hi;
    }
    SharedVector::concat(&cells)
}

/// Shared `(S1, S2)`, each a one-element sharing.
pub fn secure_bounds(engine: &mut Engine, e: &SharedVector) -> Result<(SharedVector, SharedVector)> {
    if e.dim() == 0 {
        return Err(Error::param("clipping bounds of no norms"));
    }
    let sorted = secure_sort(engine, e)?;
    Ok((sorted.gather(&[median_index(e.dim())]), sorted.gather(&[0])))
}

/// `gamma_i = S2 / e_i` if `e_i > S1`, else 1.
pub fn clipping_factor(e: f64, s1: f64, s2: f64) -> f64 {
    if e > s1 {
        debug_assert!(e > 0.0, "e > S1 >= 0");
        s2 / e
    } else {
        1.0
    }
}

/// Plaintext factors for the accepted clients, in the order given.
pub fn clipping_factors_plain(e: &[f64], s1: f64, s2: f64, accepted: &[usize]) -> Vec<f64> {
    accepted.iter().map(|&i| clipping_factor(e[i], s1, s2)).collect()
}

/// Revealed factors for the accepted clients, in the order given. The test
/// `e_i > S1` runs as CMP; the ratio `S2 / e_i` is formed by the dealer
/// functionality and selected by MUX, then the factor is opened.
pub fn clipping_factors(
    engine: &mut Engine,
    e: &SharedVector,
    s1: &SharedVector,
    s2: &SharedVector,
    accepted: &[usize],
) -> Result<Vec<f64>> {
    let m = accepted.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let p = e.precision();
    let e_acc = e.gather(accepted);
    let over = engine.cmp(&e_acc, &s1.gather(&vec![0; m]))?;
    let e_open = engine.func_open_real(&e_acc);
    let s2_open = engine.func_open_real(s2)[0];
    let ratios: Vec<Ring> = e_open
        .iter()
        .map(|&v| encode(if v > 0.0 { (s2_open / v).min(1.0) } else { 1.0 }, p).map(|f| f.raw))
        .collect::<Result<_>>()?;
    let ratio = engine.func_share(&ratios, p);
    let ones = SharedVector::public(vec![encode(1.0, p)?.raw; m], p);
    let gamma = engine.mux(&ratio, &ones, &over)?;
    Ok(engine.reveal_real(&gamma))
}

/// Runs norms, bounds and factors for one round.
pub fn plan_clipping(
    engine: &mut Engine,
    low_dim: &[SharedVector],
    g_proj: &[Ring],
    accepted: &[usize],
) -> Result<ClippingPlan> {
    let e = update_norms(engine, low_dim, g_proj)?;
    let (s1, s2) = secure_bounds(engine, &e)?;
    let factors = clipping_factors(engine, &e, &s1, &s2, accepted)?;
    let mut gamma = vec![None; low_dim.len()];
    for (&i, g) in accepted.iter().zip(factors) {
        gamma[i] = Some(g);
    }
    Ok(ClippingPlan {
        e: e.reconstruct_real(),
        s1: s1.reconstruct_real()[0],
        s2: s2.reconstruct_real()[0],
        gamma,
    })
}

/// Plaintext counterpart of [`plan_clipping`].
pub fn plan_clipping_plain(low_dim: &[Vec<f64>], g_proj: &[f64], accepted: &[usize]) -> Result<ClippingPlan> {
    let e = update_norms_plain(low_dim, g_proj);
    let (s1, s2) = clipping_bounds(&e)?;
    let mut gamma = vec![None; low_dim.len()];
    for &i in accepted {
        gamma[i] = Some(clipping_factor(e[i], s1, s2));
    }
    Ok(ClippingPlan { e, s1, s2, gamma })
}

fn lift(g: &[Ring], bits: u32) -> Vec<Ring> {
    let f = Ring(1u64 << bits);
    g.iter().map(|&v| v * f).collect()
}

/// `G + gamma * (L - G)` computed locally by each party. The result sits at
/// twice the input precision so no truncation is needed.
pub fn apply_clipping(engine: &mut Engine, model: &SharedVector, g: &[Ring], gamma: f64) -> Result<SharedVector> {
    let p = model.precision();
    let diff = engine.sub_public(model, g)?;
    let scaled = engine.scale_public(&diff, encode(gamma, p)?.raw, p);
    engine.add_public(&scaled, &lift(g, p))
}

/// `G + sum_i c_i (L_i - G)` over the listed clients, opened and decoded.
/// With `c_i = w_i gamma_i / sum(w)` this is the (weighted) mean of the
/// clipped models. Only the final reveal communicates.
pub fn aggregate_clipped(
    engine: &mut Engine,
    models: &[SharedVector],
    g: &[Ring],
    clients: &[usize],
    coeffs: &[f64],
) -> Result<Vec<f64>> {
    if clients.is_empty() || clients.len() != coeffs.len() {
        return Err(Error::shape("aggregation needs one coefficient per listed client"));
    }
    let p = models[clients[0]].precision();
    let mut acc: Option<SharedVector> = None;
    for (&i, &c) in clients.iter().zip(coeffs) {
        let diff = engine.sub_public(&models[i], g)?;
        let term = engine.scale_public(&diff, encode(c, p)?.raw, p);
        acc = Some(match acc {
            None => term,
            Some(a) => engine.add(&a, &term)?,
        });
    }
    let total = engine.add_public(&acc.expect("nonempty"), &lift(g, p))?;
    Ok(decode_vec(&engine.reveal(&total), total.precision()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{encode_vec, DEFAULT_PRECISION as P};
    use crate::stpc::{CostTable, Op, Phase};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn engine() -> Engine {
        Engine::new(5, CostTable::default())
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(clipping_bounds(&[2.0, 5.0, 9.0, 4.0, 7.0]).unwrap(), (5.0, 2.0));
        assert_eq!(clipping_bounds(&[3.5; 3]).unwrap(), (3.5, 3.5));
        assert_eq!(clipping_bounds(&[1.0, 2.0, 3.0, 4.0]).unwrap(), (2.0, 1.0));
        assert!(clipping_bounds(&[]).is_err());
    }

    #[test]
    fn factor_examples() {
        assert!((clipping_factor(9.0, 5.0, 2.0) - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(clipping_factor(4.0, 5.0, 2.0), 1.0);
        assert_eq!(clipping_factor(5.0, 5.0, 2.0), 1.0);
    }

    #[test]
    fn network_sorts_every_binary_input() {
        for n in 1..=10usize {
            let net = sorting_network(n);
            for mask in 0u32..(1 << n) {
                let mut v: Vec<u32> = (0..n).map(|i| (mask >> i) & 1).collect();
                for &(i, j) in &net {
                    if v[i] > v[j] {
                        v.swap(i, j);
                    }
                }
                assert!(v.windows(2).all(|w| w[0] <= w[1]), "n = {n}, mask = {mask:b}");
            }
        }
    }

    #[test]
    fn secure_bounds_match_sort() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut eng = engine();
        for n in [1, 2, 5, 8, 11] {
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
            let sh = eng.share_real(&e, P).unwrap();
            let (s1, s2) = secure_bounds(&mut eng, &sh).unwrap();
            let (w1, w2) = clipping_bounds(&e).unwrap();
            assert!((s1.reconstruct_real()[0] - w1).abs() < 1e-6);
            assert!((s2.reconstruct_real()[0] - w2).abs() < 1e-6);
        }
        assert!(eng.ledger().ops.cmp > 0);
        assert_eq!(eng.ledger().ops.mux, 2 * eng.ledger().ops.cmp);
    }

    #[test]
    fn norms_examples_and_cost() {
        let mut eng = engine();
        let g = [1.0, -1.0];
        let models = [vec![1.0, -1.0], vec![4.0, 3.0], vec![7.0, 7.0]];
        let shared: Vec<SharedVector> = models.iter().map(|m| eng.share_real(m, P).unwrap()).collect();
        let e = update_norms(&mut eng, &shared, &encode_vec(&g, P).unwrap()).unwrap();
        let e = e.reconstruct_real();
        assert_eq!(e[0], 0.0);
        assert!((e[1] - 5.0).abs() < 1e-5);
        assert!((e[2] - 10.0).abs() < 1e-5);
        assert_eq!(eng.ledger().ops.mul, 3 * 2);
    }

    #[test]
    fn factors_follow_rule() {
        let mut eng = engine();
        let e = [2.0, 5.0, 9.0, 4.0, 7.0];
        let sh = eng.share_real(&e, P).unwrap();
        let (s1, s2) = secure_bounds(&mut eng, &sh).unwrap();
        let got = clipping_factors(&mut eng, &sh, &s1, &s2, &[0, 1, 2, 4]).unwrap();
        let want = clipping_factors_plain(&e, 5.0, 2.0, &[0, 1, 2, 4]);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-5, "{got:?} vs {want:?}");
        }
        assert_eq!(got[1], 1.0);
    }

    #[test]
    fn clipping_examples_and_zero_bytes() {
        let mut eng = engine();
        let g = encode_vec(&[1.0, 2.0], P).unwrap();
        let l = eng.share_real(&[5.0, 2.0], P).unwrap();
        let before = eng.ledger().total_bytes();
        let half = apply_clipping(&mut eng, &l, &g, 0.5).unwrap();
        let same = apply_clipping(&mut eng, &l, &g, 1.0).unwrap();
        assert_eq!(eng.ledger().total_bytes(), before);
        assert_eq!(eng.channel().observed(Phase::Online).total(), 0);
        assert_eq!(half.reconstruct_real(), vec![3.0, 2.0]);
        assert_eq!(same.reconstruct_real(), vec![5.0, 2.0]);
        assert_eq!(eng.ledger().ops.get(Op::Scale), 4);
    }

    #[test]
    fn aggregate_is_mean_of_clipped() {
        let mut eng = engine();
        let g = [0.5, -0.5, 1.0];
        let models = [vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 3.0], vec![4.0, -4.0, 0.0]];
        let shared: Vec<SharedVector> = models.iter().map(|m| eng.share_real(m, P).unwrap()).collect();
        let gamma = [1.0, 0.5, 0.25];
        let coeffs: Vec<f64> = gamma.iter().map(|c| c / 3.0).collect();
        let agg = aggregate_clipped(&mut eng, &shared, &encode_vec(&g, P).unwrap(), &[0, 1, 2], &coeffs).unwrap();
        for t in 0..3 {
            let want: f64 = (0..3).map(|i| g[t] + gamma[i] * (models[i][t] - g[t])).sum::<f64>() / 3.0;
            assert!((agg[t] - want).abs() < 1e-5);
        }
        assert_eq!(eng.ledger().ops.reveal, 3);
    }

    proptest! {
        #[test]
        fn clipping_scales_update(
            l in prop::collection::vec(-50.0f64..50.0, 1..20),
            gamma in 0.01f64..1.0,
        ) {
            let mut eng = engine();
            let g: Vec<f64> = l.iter().map(|v| v * 0.3 - 1.0).collect();
            let sh = eng.share_real(&l, P).unwrap();
            let out = apply_clipping(&mut eng, &sh, &encode_vec(&g, P).unwrap(), gamma).unwrap();
            let out = out.reconstruct_real();
            let upd: Vec<f64> = l.iter().zip(&g).map(|(a, b)| a - b).collect();
            let got: Vec<f64> = out.iter().zip(&g).map(|(a, b)| a - b).collect();
            let n0 = upd.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n1 = got.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n1 - gamma * n0).abs() < 1e-4 * (1.0 + n0));
            if n0 > 1e-3 {
                let dot: f64 = upd.iter().zip(&got).map(|(a, b)| a * b).sum();
                prop_assert!(dot / (n0 * n1) > 1.0 - 1e-6);
            }
        }

        #[test]
        fn clipped_norms_bounded(e in prop::collection::vec(0.01f64..100.0, 1..15)) {
            let (s1, s2) = clipping_bounds(&e).unwrap();
            prop_assert!(s2 <= s1);
            for &v in &e {
                let g = clipping_factor(v, s1, s2);
                prop_assert!(g > 0.0 && g <= 1.0);
                if v > s1 {
                    prop_assert!((g * v - s2).abs() < 1e-9);
                }
            }
        }
    }
}
