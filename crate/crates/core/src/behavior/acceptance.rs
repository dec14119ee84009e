//! Whether a driver follows a recommendation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::preference::PreferenceVector;
use crate::error::{Error, Result};
use crate::world::SlotMask;

/// Logistic acceptance model over preference rank `r`, expected income `m`
/// and obedience `o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceModel {
    pub b: f64,
    pub w_r: f64,
    pub w_m: f64,
    pub w_o: f64,
}

impl Default for AcceptanceModel {
    /// Coefficients fitted on the driver survey.
    fn default() -> Self {
        Self {
            b: -1.31,
            w_r: -0.44,
            w_m: 0.29,
            w_o: 2.17,
        }
    }
}

impl AcceptanceModel {
    pub const ZERO: AcceptanceModel = AcceptanceModel {
        b: 0.0,
        w_r: 0.0,
        w_m: 0.0,
        w_o: 0.0,
    };

    pub fn logit(&self, r: f64, m: f64, o: f64) -> f64 {
        self.b + self.w_r * r + self.w_m * m + self.w_o * o
    }

    pub fn probability(&self, r: f64, m: f64, o: f64) -> f64 {
        let z = self.logit(r, m, o);
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.b, self.w_r, self.w_m, self.w_o]
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self {
            b: c[0],
            w_r: c[1],
            w_m: c[2],
            w_o: c[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Outcome of showing a recommendation to a driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    /// Driver goes to one of its own top-ranked slots instead.
    Reject {
        fallback: usize,
    },
}

impl Decision {
    pub fn destination(self, recommended: usize) -> usize {
        match self {
            Decision::Accept => recommended,
            Decision::Reject { fallback } => fallback,
        }
    }

    pub fn accepted(self) -> bool {
        matches!(self, Decision::Accept)
    }
}

/// Number of top-ranked slots a rejecting driver picks from.
pub const FALLBACK_TOP_K: usize = 4;

/// Deterministic core of [`decide_on_recommendation`]: `accept_draw` and
/// `fallback_draw` are uniform numbers in `[0, 1)`.
pub fn decide_with_draws(
    model: &AcceptanceModel,
    obedience: f64,
    slot: usize,
    rho: &PreferenceVector,
    mask: SlotMask,
    income: f64,
    accept_draw: f64,
    fallback_draw: f64,
) -> Result<Decision> {
    if !mask.is_valid(slot) {
        return Err(Error::InvalidSlot(slot));
    }
    let rank = rho.rank_of(mask, slot)?;
    let p = model.probability(rank as f64, income, obedience);
    if accept_draw < p {
        return Ok(Decision::Accept);
    }
    let top = rho.top_k(mask, FALLBACK_TOP_K.min(mask.count()));
    let i = ((fallback_draw * top.len() as f64) as usize).min(top.len() - 1);
    Ok(Decision::Reject { fallback: top[i] })
}

/// Simulate a driver's response: accept with the model probability at the
/// recommendation's rank under `rho`; otherwise fall back uniformly to one of
/// the driver's top `min(4, #valid)` slots.
pub fn decide_on_recommendation<R: Rng>(
    model: &AcceptanceModel,
    obedience: f64,
    slot: usize,
    rho: &PreferenceVector,
    mask: SlotMask,
    income: f64,
    rng: &mut R,
) -> Result<Decision> {
    let a: f64 = rng.gen();
    let f: f64 = rng.gen();
    decide_with_draws(model, obedience, slot, rho, mask, income, a, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn table_values() {
        let m = AcceptanceModel::default();
        assert!((m.probability(1.0, 16.0, 1.0) - 0.99370).abs() < 1e-5);
        assert!((m.probability(9.0, 6.0, 0.0) - 0.02847).abs() < 1e-5);
        assert_eq!(AcceptanceModel::ZERO.probability(3.0, 12.0, 0.2), 0.5);
    }

    #[test]
    fn draws_decide() {
        let m = AcceptanceModel::default();
        let rho = PreferenceVector::uniform(SlotMask::ALL);
        // slot 0 is rank 1 under uniform ties
        let d = decide_with_draws(&m, 1.0, 0, &rho, SlotMask::ALL, 16.0, 0.5, 0.0).unwrap();
        assert_eq!(d, Decision::Accept);
        let d = decide_with_draws(&m, 0.0, 8, &rho, SlotMask::ALL, 6.0, 0.5, 0.99).unwrap();
        match d {
            Decision::Reject { fallback } => assert!(fallback < 4),
            Decision::Accept => panic!("should reject"),
        }
        assert!(decide_with_draws(&m, 0.0, 0, &rho, SlotMask([false; 9]), 6.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn edge_fallback_uses_valid_slots_only() {
        let mask = SlotMask([false, false, false, false, true, true, false, true, true]);
        let rho = PreferenceVector::uniform(mask);
        let mut rng = stream_rng(2, Stream::Acceptance, 0);
        for _ in 0..200 {
            let d = decide_on_recommendation(&AcceptanceModel::ZERO, 0.0, 4, &rho, mask, 10.0, &mut rng).unwrap();
            assert!(mask.is_valid(d.destination(4)));
        }
    }
}
