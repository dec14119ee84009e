//! One simulated day: every step, each grid's idle drivers are ordered and
//! offered recommendations by a [`Recommender`], react through the acceptance
//! model, and then the world advances and matches requests.

use std::collections::VecDeque;

use rand::Rng;

use crate::behavior::predictor::{FeatureConfig, FeatureFrame, PredictorSample, RecurrentPredictor};
use crate::behavior::{
    decide_on_recommendation, frequency_preference, ground_truth_preference, AcceptanceModel, IncomeEstimator,
    LocalContext, PreferenceVector,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::world::{
    compute_gap, DemandPredictor, DriverProfile, DriverState, DriverStatus, GapVector, GridId, GridMap, MoveKind,
    RideRequest, Simulator, SlotMask, SLOTS,
};

/// Where the recommenders' view of driver preferences comes from.
#[derive(Debug, Clone)]
pub enum PreferenceSource {
    /// The simulator's ground truth.
    Oracle,
    /// Laplace-smoothed personal visit counts.
    Frequency {
        alpha: f64,
    },
    Recurrent(Box<RecurrentPredictor>),
}

impl PreferenceSource {
    fn needs_frames(&self) -> bool {
        matches!(self, PreferenceSource::Recurrent(_))
    }
}

/// Everything that stays fixed across the episodes of a run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: GridMap,
    pub steps: usize,
    pub radius: usize,
    pub fleet: Vec<DriverProfile>,
    pub acceptance: AcceptanceModel,
    /// Expected demand per grid and step, `[t * grids + g]`, seen by drivers.
    pub intensity: Vec<f64>,
    pub income_window: usize,
    pub income_scale: [f64; 2],
    pub features: FeatureConfig,
}

/// Read-only view of the current step handed to recommenders.
pub struct StepContext<'a> {
    pub t: usize,
    pub map: &'a GridMap,
    /// Idle vehicles expected per grid at `t + 1` before any move this step.
    pub supply: &'a [i64],
    /// Forecast requests per grid at `t + 1`.
    pub demand: &'a [i64],
    pub drivers: &'a [DriverState],
    /// Estimated preference of every idle driver.
    pub rho: &'a [Option<PreferenceVector>],
}

impl StepContext<'_> {
    pub fn rho(&self, driver: usize) -> Result<&PreferenceVector> {
        self.rho[driver]
            .as_ref()
            .ok_or_else(|| Error::MalformedLog(format!("no preference estimate for driver {driver}")))
    }
}

/// One grid's idle drivers at the moment the grid is processed.
#[derive(Debug, Clone)]
pub struct GridView {
    pub grid: GridId,
    /// Ascending driver ids.
    pub drivers: Vec<usize>,
    pub mask: SlotMask,
    /// Gap before any of these drivers has moved.
    pub gap: GapVector,
}

/// What a driver ended up doing after a recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub recommended: usize,
    pub accepted: bool,
    pub dest: usize,
}

/// A repositioning policy plugged into [`run_episode`].
pub trait Recommender {
    fn begin_step(&mut self, _ctx: &StepContext<'_>, _rng: &mut SimRng) -> Result<()> {
        Ok(())
    }

    /// The order in which `view.drivers` receive recommendations.
    fn order(&mut self, ctx: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>>;

    /// Slot to recommend, or `None` to let the driver cruise on its own.
    fn recommend(
        &mut self,
        ctx: &StepContext<'_>,
        view: &GridView,
        driver: usize,
        live: &GapVector,
        rng: &mut SimRng,
    ) -> Result<Option<usize>>;

    fn observe(&mut self, _driver: usize, _outcome: Outcome) {}

    fn end_grid(&mut self, _view: &GridView) -> Result<()> {
        Ok(())
    }

    /// Called after the world advanced and matched requests.
    fn end_step(&mut self, _sim: &Simulator, _rng: &mut SimRng) -> Result<()> {
        Ok(())
    }

    fn end_episode(&mut self, _sim: &Simulator) -> Result<()> {
        Ok(())
    }
}

/// Per-episode inputs.
pub struct EpisodeRun<'a> {
    pub scenario: &'a Scenario,
    pub requests: Vec<RideRequest>,
    pub seed: u64,
    pub episode: u64,
    pub preferences: &'a PreferenceSource,
    pub demand: &'a mut DemandPredictor,
    /// Collect cruising choices as predictor training samples.
    pub collect: Option<&'a mut Vec<PredictorSample>>,
}

/// Finished simulator, with the full event log.
pub struct EpisodeResult {
    pub sim: Simulator,
}

fn local_context(map: &GridMap, at: GridId, intensity: &[f64], visits: &[u32]) -> LocalContext {
    let mut ctx = LocalContext::default();
    for (s, c) in map.neighborhood9(at).iter().enumerate() {
        if let Some(c) = c {
            ctx.demand[s] = intensity[c.0];
            ctx.visits[s] = visits[c.0] as f64;
        }
    }
    ctx
}

/// Ground-truth cruising preference of an idle driver at step `t`.
pub fn true_preference(scn: &Scenario, t: usize, d: &DriverState) -> Result<PreferenceVector> {
    let grids = scn.map.len();
    let tn = (t + 1).min(scn.steps - 1);
    let row = &scn.intensity[tn * grids..(tn + 1) * grids];
    let ctx = local_context(&scn.map, d.grid, row, &d.visit_counts);
    ground_truth_preference(&scn.map, d.grid, &d.pref_params, &ctx)
}

fn one_hot(slot: usize) -> [f64; SLOTS] {
    let mut v = [0.0; SLOTS];
    v[slot] = 1.0;
    v
}

pub fn run_episode(run: EpisodeRun<'_>, rec: &mut dyn Recommender) -> Result<EpisodeResult> {
    let EpisodeRun {
        scenario: scn,
        requests,
        seed,
        episode,
        preferences,
        demand: demand_pred,
        mut collect,
    } = run;
    let mut policy_rng = stream_rng(seed, Stream::Policy, episode);
    let mut accept_rng = stream_rng(seed, Stream::Acceptance, episode);
    let mut sim = Simulator::new(scn.map.clone(), scn.steps, scn.radius, &scn.fleet, requests)?;
    let map = scn.map.clone();
    let order = map.radial_order();
    let mut income = IncomeEstimator::new(map.len(), scn.income_window, scn.income_scale);
    let with_frames = preferences.needs_frames() || collect.is_some();
    let history = scn.features.history;
    let mut frames: Vec<VecDeque<Vec<f64>>> = vec![VecDeque::with_capacity(history); scn.fleet.len()];

    for _ in 0..scn.steps {
        let t = sim.t();
        let supply = sim.supply_forecast();
        let demand: Vec<i64> = map.ids().map(|g| demand_pred.predict(g, t + 1) as i64).collect();
        income.update(&sim);

        if with_frames {
            for d in sim.drivers() {
                let f = FeatureFrame::build(&sim, d, &scn.features, &supply, &demand).to_vec();
                let q = &mut frames[d.id];
                if q.len() == history {
                    q.pop_front();
                }
                q.push_back(f);
            }
        }

        let mut truth: Vec<Option<PreferenceVector>> = vec![None; scn.fleet.len()];
        let mut rho: Vec<Option<PreferenceVector>> = vec![None; scn.fleet.len()];
        for d in sim.drivers().iter().filter(|d| d.status == DriverStatus::Idle) {
            let gt = true_preference(scn, t, d)?;
            let mask = map.mask(d.grid);
            rho[d.id] = Some(match preferences {
                PreferenceSource::Oracle => gt.clone(),
                PreferenceSource::Frequency { alpha } => {
                    let mut counts = [0.0; SLOTS];
                    for (s, c) in map.neighborhood9(d.grid).iter().enumerate() {
                        if let Some(c) = c {
                            counts[s] = d.visit_counts[c.0] as f64;
                        }
                    }
                    frequency_preference(&counts, mask, *alpha)?
                }
                PreferenceSource::Recurrent(p) => {
                    let hist: Vec<Vec<f64>> = frames[d.id].iter().cloned().collect();
                    p.predict(&hist, mask)?
                }
            });
            truth[d.id] = Some(gt);
        }

        let snapshot = sim.drivers().to_vec();
        let ctx = StepContext {
            t,
            map: &map,
            supply: &supply,
            demand: &demand,
            drivers: &snapshot,
            rho: &rho,
        };
        rec.begin_step(&ctx, &mut policy_rng)?;

        for &g in &order {
            let ids = sim.idle_in(g);
            if ids.is_empty() {
                continue;
            }
            let mut live_supply = sim.supply_forecast();
            live_supply[g.0] -= ids.len() as i64;
            let gap = compute_gap(&map, g, &live_supply, &demand);
            let view = GridView {
                grid: g,
                drivers: ids,
                mask: map.mask(g),
                gap,
            };
            let ordered = rec.order(&ctx, &view, &mut policy_rng)?;
            check_order(&ordered, &view.drivers)?;
            let mut live = view.gap.clone();
            for &id in &ordered {
                let gt = truth[id].as_ref().expect("idle driver preference");
                let dest_slot = match rec.recommend(&ctx, &view, id, &live, &mut policy_rng)? {
                    None => {
                        let s = gt.sample(&mut accept_rng);
                        let dest = map.neighbor(g, s).ok_or(Error::InvalidSlot(s))?;
                        sim.commit(id, dest, MoveKind::Cruise)?;
                        if let Some(samples) = collect.as_deref_mut() {
                            samples.push(PredictorSample {
                                frames: frames[id].iter().cloned().collect(),
                                mask: view.mask,
                                target: one_hot(s),
                            });
                        }
                        s
                    }
                    Some(slot) => {
                        let target = map.neighbor(g, slot).ok_or(Error::InvalidSlot(slot))?;
                        let m = income.estimate(target);
                        let decision = decide_on_recommendation(
                            &scn.acceptance,
                            sim.driver(id).obedience,
                            slot,
                            gt,
                            view.mask,
                            m,
                            &mut accept_rng,
                        )?;
                        let s = decision.destination(slot);
                        let dest = map.neighbor(g, s).ok_or(Error::InvalidSlot(s))?;
                        sim.commit(
                            id,
                            dest,
                            MoveKind::Recommended {
                                target,
                                accepted: decision.accepted(),
                            },
                        )?;
                        rec.observe(
                            id,
                            Outcome {
                                recommended: slot,
                                accepted: decision.accepted(),
                                dest: s,
                            },
                        );
                        s
                    }
                };
                live.bump(dest_slot, 1);
            }
            rec.end_grid(&view)?;
        }

        sim.advance();
        sim.match_requests();
        rec.end_step(&sim, &mut policy_rng)?;
    }
    rec.end_episode(&sim)?;
    sim.finish();
    demand_pred.observe_episode(sim.requests());
    Ok(EpisodeResult { sim })
}

fn check_order(order: &[usize], drivers: &[usize]) -> Result<()> {
    let mut a = order.to_vec();
    a.sort_unstable();
    if a != drivers {
        return Err(Error::Shape(format!(
            "order {order:?} is not a permutation of {drivers:?}"
        )));
    }
    Ok(())
}

/// Uniformly shuffled copy of `ids`.
pub fn shuffled<R: Rng>(ids: &[usize], rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v = ids.to_vec();
    v.shuffle(rng);
    v
}
