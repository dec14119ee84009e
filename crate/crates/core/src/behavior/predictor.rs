//! Learned cruising-preference predictor: a recurrent cell over the last `h`
//! feature frames followed by a linear softmax head over the nine slots.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::preference::PreferenceVector;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Checkpoint, GatedCell, Graph, ParamId, ParamStore, Tensor};
use crate::world::{DriverState, GridMap, Simulator, SlotMask, SLOTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Points of interest, as grid coordinates.
    pub poi_anchors: Vec<[usize; 2]>,
    /// Frames of history fed to the recurrent cell.
    pub history: usize,
    pub hidden: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            poi_anchors: vec![[2, 2], [6, 6], [6, 2]],
            history: 4,
            hidden: 32,
        }
    }
}

impl FeatureConfig {
    /// Width of one flattened [`FeatureFrame`].
    pub fn frame_dim(&self) -> usize {
        2 + 2 * (self.poi_anchors.len() + 1) + 1 + 2 * SLOTS
    }

    pub fn validate(&self, map: &GridMap) -> Result<()> {
        if self.history == 0 {
            return Err(Error::config("predictor.history", "must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("predictor.hidden", "must be >= 1"));
        }
        for [x, y] in &self.poi_anchors {
            if map.id(*x, *y).is_none() {
                return Err(Error::config(
                    "predictor.poi_anchors",
                    format!("({x}, {y}) is off the map"),
                ));
            }
        }
        Ok(())
    }
}

/// One step of observations about a driver.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    /// Cruising duration this shift and earnings so far.
    pub driver: [f64; 2],
    /// Signed `(dx, dy)` offsets to each point of interest and to the driver's home, in grid units.
    pub location: Vec<f64>,
    /// Recent drop-offs in the driver's grid.
    pub traffic: f64,
    /// Forecast supply then demand in the nine neighborhood slots.
    pub supply_demand: [f64; 2 * SLOTS],
}

impl FeatureFrame {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.location.len() + 2 * SLOTS);
        v.extend_from_slice(&self.driver);
        v.extend_from_slice(&self.location);
        v.push(self.traffic);
        v.extend_from_slice(&self.supply_demand);
        v
    }

    pub fn build(sim: &Simulator, driver: &DriverState, cfg: &FeatureConfig, supply: &[i64], demand: &[i64]) -> Self {
        let map = sim.map();
        let (x, y) = map.coords(driver.grid);
        let (hx, hy) = map.coords(driver.pref_params.home_grid);
        let location = cfg
            .poi_anchors
            .iter()
            .chain(std::iter::once(&[hx, hy]))
            .flat_map(|&[px, py]| [px as f64 - x as f64, py as f64 - y as f64])
            .collect();
        let mut sd = [0.0; 2 * SLOTS];
        for (slot, cell) in map.neighborhood9(driver.grid).iter().enumerate() {
            if let Some(c) = cell {
                sd[slot] = supply[c.0] as f64;
                sd[SLOTS + slot] = demand[c.0] as f64;
            }
        }
        Self {
            driver: [driver.idle_steps as f64, driver.earnings.as_currency()],
            location,
            traffic: sim.recent_dropoffs(driver.grid) as f64,
            supply_demand: sd,
        }
    }
}

/// Zero-mean, unit-variance scaling fitted on training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(dim: usize, frames: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for f in frames {
            n += 1.0;
            for (i, &v) in f.iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        if n == 0.0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / n - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i]) / self.std[i])
            .collect()
    }
}

/// A training example: a frame history and the slot distribution that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSample {
    pub frames: Vec<Vec<f64>>,
    pub mask: SlotMask,
    pub target: [f64; SLOTS],
}

#[derive(Debug, Clone)]
pub struct RecurrentPredictor {
    store: ParamStore,
    cell: GatedCell,
    head: (ParamId, ParamId),
    standardizer: Standardizer,
}

impl RecurrentPredictor {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let cell = GatedCell::new(&mut store, "pred.cell", input, hidden, rng);
        let bound = (1.0 / hidden as f64).sqrt();
        let hw = store.add_uniform("pred.head.w", vec![SLOTS, hidden], bound, rng);
        let hb = store.add_uniform("pred.head.b", vec![SLOTS], bound, rng);
        Self {
            store,
            cell,
            head: (hw, hb),
            standardizer: Standardizer::identity(input),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn set_standardizer(&mut self, s: Standardizer) {
        self.standardizer = s;
    }

    fn forward<'g>(&self, g: &mut Graph<'g>, frames: &[Vec<f64>], mask: SlotMask) -> Result<crate::nn::NodeId> {
        if frames.is_empty() {
            return Err(Error::Shape("predictor needs at least one frame".into()));
        }
        let mut h = g.input(vec![0.0; self.cell.hidden_dim()]);
        for f in frames {
            if f.len() != self.input_dim() {
                return Err(Error::Shape(format!(
                    "frame has {} features, predictor expects {}",
                    f.len(),
                    self.input_dim()
                )));
            }
            let x = g.input(self.standardizer.apply(f));
            h = self.cell.step(g, x, h);
        }
        let logits = g.affine(self.head.0, self.head.1, h);
        Ok(g.log_softmax(logits, &mask.0))
    }

    /// Preference over the nine slots after reading `frames` oldest-first.
    pub fn predict(&self, frames: &[Vec<f64>], mask: SlotMask) -> Result<PreferenceVector> {
        let mut g = Graph::new(&self.store);
        let lp = self.forward(&mut g, frames, mask)?;
        let mut p = [0.0; SLOTS];
        for s in mask.valid_slots() {
            p[s] = g.value(lp)[s].exp();
        }
        let sum: f64 = p.iter().sum();
        Ok(PreferenceVector(p.map(|v| v / sum)))
    }

    /// Mean cross-entropy to the sample targets.
    pub fn loss(&self, samples: &[PredictorSample]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let mut g = Graph::new(&self.store);
            let lp = self.forward(&mut g, &s.frames, s.mask)?;
            total -= s.mask.valid_slots().map(|k| s.target[k] * g.value(lp)[k]).sum::<f64>();
        }
        Ok(total / samples.len().max(1) as f64)
    }

    /// Minibatch Adam on cross-entropy. Returns the final mean loss.
    pub fn train<R: Rng>(
        &mut self,
        samples: &[PredictorSample],
        epochs: usize,
        batch: usize,
        lr: f64,
        rng: &mut R,
    ) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut adam = AdamState::new(&self.store, lr);
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(batch.max(1)) {
                let mut grads = self.store.zero_grads();
                for &i in chunk {
                    let s = &samples[i];
                    let mut g = Graph::new(&self.store);
                    let lp = self.forward(&mut g, &s.frames, s.mask)?;
                    let t = g.input(s.target.to_vec());
                    let prod = g.mul(lp, t);
                    let sum = g.sum(prod);
                    let loss = g.scale(sum, -1.0 / chunk.len() as f64);
                    g.backward(loss, &mut grads);
                }
                adam.step(&mut self.store, &grads)?;
            }
        }
        self.loss(samples)
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        for (name, t) in self.store.iter() {
            ckpt.insert(name, t.clone());
        }
        ckpt.insert_vec("pred.std.mean", self.standardizer.mean.clone());
        ckpt.insert_vec("pred.std.std", self.standardizer.std.clone());
    }

    pub fn load_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .store
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape.clone()))
            .collect();
        for (i, (name, shape)) in names.iter().enumerate() {
            let t = ckpt.expect(name, shape)?;
            self.store.tensors_mut()[i] = t.clone();
        }
        let d = self.input_dim();
        self.standardizer = Standardizer {
            mean: ckpt.expect("pred.std.mean", &[d])?.data.clone(),
            std: ckpt.expect("pred.std.std", &[d])?.data.clone(),
        };
        Ok(())
    }

    pub fn zero_params(&mut self) {
        for t in self.store.tensors_mut() {
            *t = Tensor::zeros(t.shape.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn zero_params_predict_uniform() {
        let mut rng = stream_rng(0, Stream::Init, 0);
        let mut p = RecurrentPredictor::new(5, 8, &mut rng);
        p.zero_params();
        let rho = p
            .predict(&vec![vec![1.0, -2.0, 0.5, 3.0, 9.0]; 3], SlotMask::ALL)
            .unwrap();
        assert!(rho.0.iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = stream_rng(0, Stream::Init, 0);
        let p = RecurrentPredictor::new(5, 8, &mut rng);
        assert!(p.predict(&[vec![1.0; 4]], SlotMask::ALL).is_err());
        assert!(p.predict(&[], SlotMask::ALL).is_err());
    }

    #[test]
    fn learns_constant_target() {
        let mut rng = stream_rng(3, Stream::Init, 0);
        let mut p = RecurrentPredictor::new(4, 16, &mut rng);
        let target = [0.05, 0.3, 0.05, 0.05, 0.2, 0.05, 0.1, 0.15, 0.05];
        let samples: Vec<PredictorSample> = (0..64)
            .map(|_| PredictorSample {
                frames: (0..3)
                    .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                mask: SlotMask::ALL,
                target,
            })
            .collect();
        p.train(&samples, 150, 16, 1e-2, &mut rng).unwrap();
        let rho = p.predict(&samples[0].frames, SlotMask::ALL).unwrap();
        let kl: f64 = target.iter().zip(rho.0).map(|(t, q)| t * (t / q).ln()).sum();
        assert!(kl < 0.01, "kl {kl}");
        assert!(rho.is_valid(SlotMask::ALL));
    }
}
