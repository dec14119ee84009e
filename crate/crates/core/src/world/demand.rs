//! Ride requests: synthetic generation, CSV ingestion and next-step prediction.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::grid::{GridId, GridMap};
use crate::error::{Error, Result};

/// Money in integer cents so that per-driver sums are exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cents(pub i64);

impl Cents {
    pub fn from_currency(v: f64) -> Self {
        Cents((v * 100.0).round() as i64)
    }

    pub fn as_currency(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl std::ops::Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        Cents(iter.map(|c| c.0).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Pending,
    Matched,
    Served,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideRequest {
    pub id: u64,
    pub origin: GridId,
    pub dest: GridId,
    pub created_t: usize,
    pub fare: Cents,
    pub status: RequestStatus,
}

/// Linear fare rule `base + per_grid * manhattan distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FareRule {
    pub base: f64,
    pub per_grid: f64,
}

impl Default for FareRule {
    fn default() -> Self {
        Self {
            base: 2.5,
            per_grid: 1.0,
        }
    }
}

impl FareRule {
    pub fn fare(&self, distance: usize) -> f64 {
        self.base + self.per_grid * distance as f64
    }
}

/// Gaussian bump of extra demand, active during a window of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    pub x: usize,
    pub y: usize,
    /// Peak extra requests per step at the hotspot cell.
    pub intensity: f64,
    /// Spatial spread in grid cells.
    pub radius: f64,
    /// Active window as fractions of the day, `[start, end)`.
    #[serde(default)]
    pub start: f64,
    #[serde(default = "one")]
    pub end: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandConfig {
    /// Background requests per grid per step.
    pub base_intensity: f64,
    pub hotspots: Vec<Hotspot>,
    /// Time-of-day multipliers, linearly interpolated across the day. Empty = flat.
    pub profile: Vec<f64>,
    pub fare: FareRule,
    /// Destinations are drawn at Manhattan distance `1..=max_trip`.
    pub max_trip: usize,
    /// Destination weight decay per grid of distance.
    pub trip_decay: f64,
    /// Extra destination weight proportional to hotspot intensity at the destination.
    pub dest_hotspot_bias: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            base_intensity: 0.04,
            hotspots: vec![
                Hotspot {
                    x: 2,
                    y: 2,
                    intensity: 1.6,
                    radius: 1.0,
                    start: 0.0,
                    end: 0.55,
                },
                Hotspot {
                    x: 6,
                    y: 6,
                    intensity: 1.6,
                    radius: 1.0,
                    start: 0.45,
                    end: 1.0,
                },
                Hotspot {
                    x: 6,
                    y: 2,
                    intensity: 0.8,
                    radius: 0.8,
                    start: 0.0,
                    end: 1.0,
                },
            ],
            profile: vec![0.6, 1.0, 1.2, 1.0, 1.2, 0.8],
            fare: FareRule::default(),
            max_trip: 6,
            trip_decay: 0.3,
            dest_hotspot_bias: 0.5,
        }
    }
}

impl DemandConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, why: &str| Err(Error::config(format!("demand.{k}"), why));
        if !(self.base_intensity.is_finite() && self.base_intensity >= 0.0) {
            return bad("base_intensity", "must be finite and >= 0");
        }
        for (i, h) in self.hotspots.iter().enumerate() {
            if !(h.intensity.is_finite() && h.intensity >= 0.0) {
                return bad(&format!("hotspots[{i}].intensity"), "must be finite and >= 0");
            }
            if !(h.radius.is_finite() && h.radius > 0.0) {
                return bad(&format!("hotspots[{i}].radius"), "must be > 0");
            }
            if !(0.0..=1.0).contains(&h.start) || !(0.0..=1.0).contains(&h.end) {
                return bad(&format!("hotspots[{i}]"), "window must lie in [0, 1]");
            }
        }
        if self.profile.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("profile", "multipliers must be finite and >= 0");
        }
        if self.max_trip == 0 {
            return bad("max_trip", "must be >= 1");
        }
        if !(self.fare.base.is_finite() && self.fare.per_grid.is_finite())
            || self.fare.base <= 0.0
            || self.fare.per_grid < 0.0
        {
            return bad("fare", "base must be > 0 and per_grid >= 0");
        }
        if !self.trip_decay.is_finite() || !self.dest_hotspot_bias.is_finite() || self.dest_hotspot_bias < 0.0 {
            return bad("trip_decay", "destination kernel weights must be finite");
        }
        Ok(())
    }

    fn profile_at(&self, t: usize, steps: usize) -> f64 {
        match self.profile.len() {
            0 => 1.0,
            1 => self.profile[0],
            n => {
                let pos = if steps <= 1 {
                    0.0
                } else {
                    t as f64 / (steps - 1) as f64 * (n - 1) as f64
                };
                let i = (pos.floor() as usize).min(n - 2);
                let frac = pos - i as f64;
                self.profile[i] * (1.0 - frac) + self.profile[i + 1] * frac
            }
        }
    }

    fn hotspot_level(&self, map: &GridMap, g: GridId, day_frac: Option<f64>) -> f64 {
        let (x, y) = map.coords(g);
        self.hotspots
            .iter()
            .filter(|h| day_frac.map_or(true, |f| f >= h.start && f < h.end))
            .map(|h| {
                let dx = x as f64 - h.x as f64;
                let dy = y as f64 - h.y as f64;
                h.intensity * (-(dx * dx + dy * dy) / (2.0 * h.radius * h.radius)).exp()
            })
            .sum()
    }

    /// Expected number of requests originating in `g` during step `t` of a `steps`-long day.
    pub fn intensity(&self, map: &GridMap, g: GridId, t: usize, steps: usize) -> f64 {
        let frac = t as f64 / steps.max(1) as f64;
        (self.base_intensity + self.hotspot_level(map, g, Some(frac))) * self.profile_at(t, steps)
    }

    /// Full `steps x grids` intensity table, row-major by step.
    pub fn intensity_table(&self, map: &GridMap, steps: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(steps * map.len());
        for t in 0..steps {
            for g in map.ids() {
                out.push(self.intensity(map, g, t, steps));
            }
        }
        out
    }

    fn destination_weights(&self, map: &GridMap, origin: GridId) -> Vec<f64> {
        map.ids()
            .map(|d| {
                let dist = map.manhattan(origin, d);
                if dist == 0 || dist > self.max_trip {
                    0.0
                } else {
                    (-self.trip_decay * dist as f64).exp()
                        * (1.0 + self.dest_hotspot_bias * self.hotspot_level(map, d, None))
                }
            })
            .collect()
    }
}

/// Sample one episode's requests. Ids are assigned in `(t, origin, draw)` order.
pub fn generate_demand<R: Rng>(
    cfg: &DemandConfig,
    map: &GridMap,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<RideRequest>> {
    cfg.validate()?;
    let kernels: Vec<Option<WeightedIndex<f64>>> = map
        .ids()
        .map(|o| WeightedIndex::new(cfg.destination_weights(map, o)).ok())
        .collect();
    let mut out = Vec::new();
    let mut next_id = 0u64;
    for t in 0..steps {
        for origin in map.ids() {
            let lambda = cfg.intensity(map, origin, t, steps);
            if lambda <= 0.0 {
                continue;
            }
            let count = Poisson::new(lambda)
                .map_err(|e| Error::config("demand", e.to_string()))?
                .sample(rng) as u64;
            let Some(kernel) = &kernels[origin.0] else {
                continue;
            };
            for _ in 0..count {
                let dest = GridId(kernel.sample(rng));
                let fare = cfg.fare.fare(map.manhattan(origin, dest));
                out.push(RideRequest {
                    id: next_id,
                    origin,
                    dest,
                    created_t: t,
                    fare: Cents::from_currency(fare),
                    status: RequestStatus::Pending,
                });
                next_id += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestRow {
    request_id: u64,
    t: usize,
    origin_x: usize,
    origin_y: usize,
    dest_x: usize,
    dest_y: usize,
    fare: Option<f64>,
}

/// Write requests as `request_id,t,origin_x,origin_y,dest_x,dest_y,fare`.
pub fn write_requests_csv<W: Write>(map: &GridMap, requests: &[RideRequest], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_record(["request_id", "t", "origin_x", "origin_y", "dest_x", "dest_y", "fare"])?;
    for r in requests {
        let (ox, oy) = map.coords(r.origin);
        let (dx, dy) = map.coords(r.dest);
        wtr.write_record([
            r.id.to_string(),
            r.created_t.to_string(),
            ox.to_string(),
            oy.to_string(),
            dx.to_string(),
            dy.to_string(),
            format!("{:.2}", r.fare.as_currency()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a request CSV; missing fares fall back to `fare`. Output is sorted by `(t, id)`.
pub fn read_requests_csv<R: Read>(map: &GridMap, fare: &FareRule, r: R) -> Result<Vec<RideRequest>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<RequestRow>().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::MalformedLog(format!("request row {}: {what}", line + 1));
        let origin = map
            .id(row.origin_x, row.origin_y)
            .ok_or_else(|| bad("origin off map"))?;
        let dest = map
            .id(row.dest_x, row.dest_y)
            .ok_or_else(|| bad("destination off map"))?;
        let f = row.fare.unwrap_or_else(|| fare.fare(map.manhattan(origin, dest)));
        if !(f.is_finite() && f > 0.0) {
            return Err(bad("fare must be > 0"));
        }
        out.push(RideRequest {
            id: row.request_id,
            origin,
            dest,
            created_t: row.t,
            fare: Cents::from_currency(f),
            status: RequestStatus::Pending,
        });
    }
    out.sort_by_key(|r| (r.created_t, r.id));
    Ok(out)
}

/// Per-grid request counts for step `t` of an episode table.
pub fn counts_at(map: &GridMap, requests: &[RideRequest], t: usize) -> Vec<u32> {
    let mut counts = vec![0u32; map.len()];
    for r in requests.iter().filter(|r| r.created_t == t) {
        counts[r.origin.0] += 1;
    }
    counts
}

/// Next-step demand forecast.
#[derive(Debug, Clone)]
pub enum DemandPredictor {
    /// Mean count for the same step over prior episodes.
    Historical {
        grids: usize,
        steps: usize,
        /// One `steps x grids` count table per prior episode.
        episodes: Vec<Vec<u32>>,
        warned: bool,
    },
    /// Rounded generator expectation.
    Oracle { grids: usize, intensities: Vec<f64> },
}

impl DemandPredictor {
    pub fn historical(grids: usize, steps: usize) -> Self {
        DemandPredictor::Historical {
            grids,
            steps,
            episodes: Vec::new(),
            warned: false,
        }
    }

    pub fn oracle(map: &GridMap, cfg: &DemandConfig, steps: usize) -> Self {
        DemandPredictor::Oracle {
            grids: map.len(),
            intensities: cfg.intensity_table(map, steps),
        }
    }

    /// Record a finished episode's requests as history.
    pub fn observe_episode(&mut self, requests: &[RideRequest]) {
        if let DemandPredictor::Historical {
            grids, steps, episodes, ..
        } = self
        {
            let mut table = vec![0u32; *grids * *steps];
            for r in requests {
                if r.created_t < *steps && r.origin.0 < *grids {
                    table[r.created_t * *grids + r.origin.0] += 1;
                }
            }
            episodes.push(table);
        }
    }

    /// Predicted request count originating in `g` at step `t_next`.
    pub fn predict(&mut self, g: GridId, t_next: usize) -> u32 {
        match self {
            DemandPredictor::Historical {
                grids,
                steps,
                episodes,
                warned,
            } => {
                if episodes.is_empty() {
                    if !*warned {
                        log::warn!("no demand history yet; predicting zero demand");
                        *warned = true;
                    }
                    return 0;
                }
                if t_next >= *steps {
                    return 0;
                }
                let idx = t_next * *grids + g.0;
                let sum: u64 = episodes.iter().map(|e| e[idx] as u64).sum();
                (sum as f64 / episodes.len() as f64).round() as u32
            }
            DemandPredictor::Oracle { grids, intensities } => {
                intensities.get(t_next * *grids + g.0).map_or(0, |l| l.round() as u32)
            }
        }
    }
}
