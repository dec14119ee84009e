use serde::{Deserialize, Serialize};

/// Per-feature running mean/variance used to standardize network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub enabled: bool,
}

impl RunningNorm {
    pub fn new(dim: usize, enabled: bool) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            enabled,
        }
    }

    /// Welford update.
    pub fn observe(&mut self, x: &[f64]) {
        if !self.enabled {
            return;
        }
        self.count += 1.0;
        for (i, &v) in x.iter().enumerate() {
            let d = v - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if !self.enabled || self.count < 2.0 {
            return x.to_vec();
        }
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let var = self.m2[i] / self.count;
                (v - self.mean[i]) / (var + 1e-6).sqrt()
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_observed_stream() {
        let mut n = RunningNorm::new(1, true);
        for v in [1.0, 2.0, 3.0, 4.0] {
            n.observe(&[v]);
        }
        assert!((n.mean[0] - 2.5).abs() < 1e-12);
        let z = n.apply(&[2.5]);
        assert!(z[0].abs() < 1e-12);
        let off = RunningNorm::new(1, false);
        assert_eq!(off.apply(&[7.0]), vec![7.0]);
    }
}
