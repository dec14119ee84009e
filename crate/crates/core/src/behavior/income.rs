//! Expected income shown with a recommendation, on the survey's scale.

use crate::world::{GridId, Simulator};

/// Affine map of a mean fare into `[lo_out, hi_out]` using the episode's fare range.
/// Degenerate ranges map to the floor.
pub fn map_to_survey_scale(mean_fare: f64, fare_lo: f64, fare_hi: f64, scale: [f64; 2]) -> f64 {
    if !(fare_hi > fare_lo) {
        return scale[0];
    }
    let u = ((mean_fare - fare_lo) / (fare_hi - fare_lo)).clamp(0.0, 1.0);
    scale[0] + u * (scale[1] - scale[0])
}

/// Tracks recent mean fares per grid and the episode-level range of those means.
#[derive(Debug, Clone)]
pub struct IncomeEstimator {
    window: usize,
    scale: [f64; 2],
    means: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl IncomeEstimator {
    pub fn new(grids: usize, window: usize, scale: [f64; 2]) -> Self {
        Self {
            window: window.max(1),
            scale,
            means: vec![0.0; grids],
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
        }
    }

    /// Refresh per-grid mean fares from requests created in the last `window` steps.
    pub fn update(&mut self, sim: &Simulator) {
        let t = sim.t() + 1;
        let from = t.saturating_sub(self.window);
        let mut sum = vec![0.0; self.means.len()];
        let mut n = vec![0u32; self.means.len()];
        for r in sim.requests_created(from, t) {
            sum[r.origin.0] += r.fare.as_currency();
            n[r.origin.0] += 1;
        }
        for g in 0..self.means.len() {
            self.means[g] = if n[g] == 0 { 0.0 } else { sum[g] / n[g] as f64 };
            self.lo = self.lo.min(self.means[g]);
            self.hi = self.hi.max(self.means[g]);
        }
    }

    pub fn mean_fare(&self, g: GridId) -> f64 {
        self.means[g.0]
    }

    /// Income estimate for a recommendation to `g`.
    pub fn estimate(&self, g: GridId) -> f64 {
        map_to_survey_scale(self.means[g.0], self.lo, self.hi, self.scale)
    }
}
