//! Categorical and Plackett-Luce distributions on plain slices.

use rand::Rng;

use crate::error::{Error, Result};

/// Max-subtracted softmax over `mask`ed entries; masked-out entries get 0.
pub fn softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape(format!("{} logits vs {} mask", logits.len(), mask.len())));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    if !max.is_finite() {
        return Err(Error::NonFinite("logit".into()));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(v, &m)| if m { (v - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    Ok(out)
}

/// `-Σ p ln p` over positive entries.
pub fn categorical_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Inverse-CDF draw; never returns an entry with zero probability.
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Index of the largest entry among `mask`ed ones, lowest index on ties.
pub fn argmax_masked(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m && best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// `Σ_k [s_{o_k} - ln Σ_{j >= k} exp(s_{o_j})]`.
pub fn plackett_luce_log_prob(scores: &[f64], order: &[usize]) -> f64 {
    let mut lp = 0.0;
    for k in 0..order.len() {
        let rest = &order[k..];
        let max = rest.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + rest.iter().map(|&i| (scores[i] - max).exp()).sum::<f64>().ln();
        lp += scores[order[k]] - lse;
    }
    lp
}

/// Draw a full ranking of `items` (indices into `scores`) by repeated softmax
/// sampling without replacement. Returns the order and its log-probability.
pub fn plackett_luce_sample<R: Rng>(scores: &[f64], items: &[usize], rng: &mut R) -> (Vec<usize>, f64) {
    let mut remaining = items.to_vec();
    let mut order = Vec::with_capacity(items.len());
    let mut lp = 0.0;
    while !remaining.is_empty() {
        let max = remaining.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = remaining.iter().map(|&i| (scores[i] - max).exp()).collect();
        let z: f64 = w.iter().sum();
        let pick = if remaining.len() == 1 {
            0
        } else {
            sample_categorical(&w, rng)
        };
        lp += (w[pick] / z).ln();
        order.push(remaining.remove(pick));
    }
    (order, lp)
}
