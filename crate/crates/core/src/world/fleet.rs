//! Static driver population: homes, obedience and cruising tastes.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grid::{GridId, GridMap};
use crate::behavior::preference::GroundTruthPrefParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetConfig {
    pub size: usize,
    pub obedience: [f64; 2],
    pub w_home: [f64; 2],
    pub w_hot: [f64; 2],
    pub w_familiar: [f64; 2],
    pub temperature: [f64; 2],
    /// Synthetic past cruising visits per driver, scattered around home.
    pub history_visits: usize,
    pub history_spread: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            size: 50,
            obedience: [0.0, 1.0],
            w_home: [1.0, 4.0],
            w_hot: [0.0, 1.5],
            w_familiar: [0.5, 2.0],
            temperature: [0.4, 0.8],
            history_visits: 60,
            history_spread: 1.5,
        }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::config("fleet.size", "fleet must have at least one driver"));
        }
        let ranges = [
            ("fleet.obedience", self.obedience),
            ("fleet.w_home", self.w_home),
            ("fleet.w_hot", self.w_hot),
            ("fleet.w_familiar", self.w_familiar),
            ("fleet.temperature", self.temperature),
        ];
        for (key, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(key, "range must be finite with lo <= hi"));
            }
        }
        if self.obedience[0] < 0.0 || self.obedience[1] > 1.0 {
            return Err(Error::config("fleet.obedience", "must lie in [0, 1]"));
        }
        if self.temperature[0] <= 0.0 {
            return Err(Error::config("fleet.temperature", "must be > 0"));
        }
        if !(self.history_spread.is_finite() && self.history_spread > 0.0) {
            return Err(Error::config("fleet.history_spread", "must be > 0"));
        }
        Ok(())
    }
}

/// Who a driver is, independent of any episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub id: usize,
    pub obedience: f64,
    pub pref: GroundTruthPrefParams,
    /// Past visit tallies per grid.
    pub history: Vec<u32>,
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

pub fn generate_fleet<R: Rng>(cfg: &FleetConfig, map: &GridMap, rng: &mut R) -> Result<Vec<DriverProfile>> {
    cfg.validate()?;
    let spread =
        Normal::new(0.0, cfg.history_spread).map_err(|e| Error::config("fleet.history_spread", e.to_string()))?;
    let mut out = Vec::with_capacity(cfg.size);
    for id in 0..cfg.size {
        let home = GridId(rng.gen_range(0..map.len()));
        let pref = GroundTruthPrefParams {
            w_home: uniform(rng, cfg.w_home),
            home_grid: home,
            w_hot: uniform(rng, cfg.w_hot),
            w_familiar: uniform(rng, cfg.w_familiar),
            temperature: uniform(rng, cfg.temperature),
        };
        let obedience = uniform(rng, cfg.obedience);
        let (hx, hy) = map.coords(home);
        let mut history = vec![0u32; map.len()];
        for _ in 0..cfg.history_visits {
            let x = (hx as f64 + spread.sample(rng))
                .round()
                .clamp(0.0, (map.width() - 1) as f64);
            let y = (hy as f64 + spread.sample(rng))
                .round()
                .clamp(0.0, (map.height() - 1) as f64);
            let g = map.id(x as usize, y as usize).expect("clamped on map");
            history[g.0] += 1;
        }
        out.push(DriverProfile {
            id,
            obedience,
            pref,
            history,
        });
    }
    Ok(out)
}

/// One row of a trajectory CSV: `driver_id,t,grid_x,grid_y,status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub driver_id: usize,
    pub t: usize,
    pub grid_x: usize,
    pub grid_y: usize,
    pub status: String,
}

pub fn write_trajectories_csv<W: Write>(rows: &[TrajectoryRow], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    if rows.is_empty() {
        wtr.write_record(["driver_id", "t", "grid_x", "grid_y", "status"])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trajectories_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Per-driver grid visit tallies from idle or cruising trajectory rows.
pub fn visit_history(map: &GridMap, rows: &[TrajectoryRow]) -> Result<BTreeMap<usize, Vec<u32>>> {
    let mut out: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status != "occupied") {
        let g = map
            .id(r.grid_x, r.grid_y)
            .ok_or_else(|| Error::MalformedLog(format!("trajectory row off map: ({}, {})", r.grid_x, r.grid_y)))?;
        out.entry(r.driver_id).or_insert_with(|| vec![0; map.len()])[g.0] += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn fleet_is_deterministic_and_in_range() {
        let map = GridMap::new(9, 9).unwrap();
        let cfg = FleetConfig::default();
        let a = generate_fleet(&cfg, &map, &mut stream_rng(1, Stream::Fleet, 0)).unwrap();
        let b = generate_fleet(&cfg, &map, &mut stream_rng(1, Stream::Fleet, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for d in &a {
            assert!((0.0..=1.0).contains(&d.obedience));
            assert_eq!(d.history.iter().sum::<u32>() as usize, cfg.history_visits);
        }
    }

    #[test]
    fn trajectory_history_skips_occupied() {
        let map = GridMap::new(3, 3).unwrap();
        let text = "driver_id,t,grid_x,grid_y,status\n0,0,1,1,idle\n0,1,2,1,occupied\n0,2,1,1,idle\n";
        let rows = read_trajectories_csv(text.as_bytes()).unwrap();
        let h = visit_history(&map, &rows).unwrap();
        assert_eq!(h[&0][4], 2);
        assert_eq!(h[&0][5], 0);
    }
}
