use serde::{Deserialize, Serialize};

use super::grid::{GridId, GridMap, SlotMask, SLOTS};

/// Supply-minus-demand counts over a 3x3 neighborhood; `None` marks off-map slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapVector(pub [Option<i64>; SLOTS]);

impl GapVector {
    pub fn mask(&self) -> SlotMask {
        SlotMask(self.0.map(|d| d.is_some()))
    }

    pub fn get(&self, slot: usize) -> Option<i64> {
        self.0.get(slot).copied().flatten()
    }

    /// Adds `delta` to a valid slot; off-map slots are left untouched.
    pub fn bump(&mut self, slot: usize, delta: i64) {
        if let Some(Some(v)) = self.0.get_mut(slot) {
            *v += delta;
        }
    }

    /// Network input encoding: invalid slots become 0.
    pub fn as_features(&self) -> [f64; SLOTS] {
        self.0.map(|d| d.unwrap_or(0) as f64)
    }

    /// Mean and population standard deviation over valid slots.
    pub fn stats(&self) -> (f64, f64) {
        let vals: Vec<f64> = self.0.iter().flatten().map(|&v| v as f64).collect();
        if vals.is_empty() {
            return (0.0, 0.0);
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// `delta = supply - demand` for each valid neighbor of `g`.
///
/// `supply` and `demand` are per-grid forecasts for the next step.
pub fn compute_gap(map: &GridMap, g: GridId, supply: &[i64], demand: &[i64]) -> GapVector {
    let n = map.neighborhood9(g);
    GapVector(n.map(|c| c.map(|c| supply[c.0] - demand[c.0])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_is_supply_minus_demand() {
        let map = GridMap::new(3, 3).unwrap();
        let mut supply = vec![0i64; 9];
        let mut demand = vec![0i64; 9];
        supply[4] = 3;
        demand[4] = 5;
        let gap = compute_gap(&map, GridId(4), &supply, &demand);
        assert_eq!(gap.get(4), Some(-2));
        assert_eq!(gap.0.iter().flatten().filter(|&&v| v != 0).count(), 1);
    }

    #[test]
    fn balanced_forecast_is_all_zero() {
        let map = GridMap::new(4, 4).unwrap();
        let s = vec![2i64; 16];
        let gap = compute_gap(&map, GridId(5), &s, &s);
        assert!(gap.0.iter().all(|d| *d == Some(0)));
    }

    #[test]
    fn corner_has_five_invalid_markers() {
        let map = GridMap::new(3, 3).unwrap();
        let z = vec![0i64; 9];
        let gap = compute_gap(&map, GridId(0), &z, &z);
        assert_eq!(gap.0.iter().filter(|d| d.is_none()).count(), 5);
        assert_eq!(gap.mask().count(), 4);
    }
}
