//! A configured world plus the train/evaluate procedures the CLI exposes.

use std::path::Path;

use crate::agents::DualAgent;
use crate::baselines::{make_baseline, NoReposition, PolicyKind};
use crate::behavior::fit::model_from_kv;
use crate::behavior::predictor::{PredictorSample, RecurrentPredictor, Standardizer};
use crate::config::{DemandForecast, PredictorKind, RunConfig};
use crate::episode::{run_episode, EpisodeRun, PreferenceSource, Recommender, Scenario};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, EpisodeMetrics};
use crate::nn::Checkpoint;
use crate::rng::{stream_rng, Stream};
use crate::world::demand::{generate_demand, read_requests_csv};
use crate::world::fleet::{generate_fleet, read_trajectories_csv, visit_history};
use crate::world::{DemandPredictor, RideRequest, Simulator};

/// Episode indices for streams outside training, so they never collide with it.
pub const WARMUP_EPISODE: u64 = 1 << 40;
pub const EVAL_EPISODE: u64 = 1 << 41;

pub struct Experiment {
    pub cfg: RunConfig,
    pub hash: u64,
    pub scenario: Scenario,
    fixed_requests: Option<Vec<RideRequest>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorReport {
    pub samples: usize,
    pub loss: f64,
}

pub struct TrainOutcome {
    pub agent: DualAgent,
    pub rows: Vec<EpisodeMetrics>,
}

impl Experiment {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let map = cfg.grid_map()?;
        let mut fleet_rng = stream_rng(cfg.run.seed, Stream::Fleet, 0);
        let mut fleet = generate_fleet(&cfg.fleet, &map, &mut fleet_rng)?;
        if let Some(p) = &cfg.run.trajectories_file {
            let rows = read_trajectories_csv(open(p)?)?;
            for (id, hist) in visit_history(&map, &rows)? {
                if let Some(d) = fleet.get_mut(id) {
                    d.history = hist;
                }
            }
        }
        let acceptance = match &cfg.behavior.acceptance_model_file {
            Some(p) => model_from_kv(&std::fs::read_to_string(p).map_err(|e| file_error(p, e))?)?,
            None => cfg.behavior.acceptance,
        };
        let fixed_requests = match &cfg.run.requests_file {
            Some(p) => Some(read_requests_csv(&map, &cfg.demand.fare, open(p)?)?),
            None => None,
        };
        let scenario = Scenario {
            intensity: cfg.demand.intensity_table(&map, cfg.map.steps),
            map,
            steps: cfg.map.steps,
            radius: cfg.map.radius,
            fleet,
            acceptance,
            income_window: cfg.behavior.income_window,
            income_scale: cfg.behavior.income_scale,
            features: cfg.behavior.features.clone(),
        };
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            scenario,
            fixed_requests,
        })
    }

    pub fn requests(&self, seed: u64, episode: u64) -> Result<Vec<RideRequest>> {
        match &self.fixed_requests {
            Some(r) => Ok(r.clone()),
            None => {
                let mut rng = stream_rng(seed, Stream::Demand, episode);
                generate_demand(&self.cfg.demand, &self.scenario.map, self.scenario.steps, &mut rng)
            }
        }
    }

    /// Demand forecaster; the historical one starts from a few generated days.
    pub fn demand_predictor(&self) -> Result<DemandPredictor> {
        let map = &self.scenario.map;
        match self.cfg.run.demand_forecast {
            DemandForecast::Oracle => Ok(DemandPredictor::oracle(map, &self.cfg.demand, self.scenario.steps)),
            DemandForecast::Historical => {
                let mut p = DemandPredictor::historical(map.len(), self.scenario.steps);
                for i in 0..self.cfg.behavior.warmup_episodes.max(1) as u64 {
                    p.observe_episode(&self.requests(self.cfg.run.seed, WARMUP_EPISODE + i)?);
                }
                Ok(p)
            }
        }
    }

    fn new_predictor(&self) -> RecurrentPredictor {
        let mut rng = stream_rng(self.cfg.run.seed, Stream::Init, 1);
        let f = &self.cfg.behavior.features;
        RecurrentPredictor::new(f.frame_dim(), f.hidden, &mut rng)
    }

    /// Build the preference estimate. The recurrent predictor is fit on
    /// cruising choices observed in no-reposition episodes.
    pub fn prepare_preferences(&self) -> Result<(PreferenceSource, Option<PredictorReport>)> {
        let b = &self.cfg.behavior;
        match b.predictor {
            PredictorKind::Oracle => Ok((PreferenceSource::Oracle, None)),
            PredictorKind::Frequency => Ok((
                PreferenceSource::Frequency {
                    alpha: b.frequency_alpha,
                },
                None,
            )),
            PredictorKind::Recurrent => {
                let mut samples: Vec<PredictorSample> = Vec::new();
                let mut demand = self.demand_predictor()?;
                for i in 0..b.warmup_episodes as u64 {
                    let e = WARMUP_EPISODE + i;
                    run_episode(
                        EpisodeRun {
                            scenario: &self.scenario,
                            requests: self.requests(self.cfg.run.seed, e)?,
                            seed: self.cfg.run.seed,
                            episode: e,
                            preferences: &PreferenceSource::Oracle,
                            demand: &mut demand,
                            collect: Some(&mut samples),
                        },
                        &mut NoReposition,
                    )?;
                }
                let mut p = self.new_predictor();
                let dim = p.input_dim();
                p.set_standardizer(Standardizer::fit(
                    dim,
                    samples.iter().flat_map(|s| s.frames.iter().map(Vec::as_slice)),
                ));
                let mut rng = stream_rng(self.cfg.run.seed, Stream::Init, 2);
                let loss = p.train(
                    &samples,
                    b.predictor_epochs,
                    b.predictor_batch,
                    b.predictor_lr,
                    &mut rng,
                )?;
                log::info!("preference predictor: {} samples, loss {loss:.4}", samples.len());
                Ok((
                    PreferenceSource::Recurrent(Box::new(p)),
                    Some(PredictorReport {
                        samples: samples.len(),
                        loss,
                    }),
                ))
            }
        }
    }

    pub fn new_agent(&self) -> Result<DualAgent> {
        let mut rng = stream_rng(self.cfg.run.seed, Stream::Init, 0);
        DualAgent::new(self.cfg.agent, &mut rng)
    }

    /// One episode with `rec`; returns its metrics and the finished simulator.
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &self,
        rec: &mut dyn Recommender,
        prefs: &PreferenceSource,
        demand: &mut DemandPredictor,
        policy: &str,
        seed: u64,
        episode: u64,
        label: u64,
    ) -> Result<(EpisodeMetrics, Simulator)> {
        let res = run_episode(
            EpisodeRun {
                scenario: &self.scenario,
                requests: self.requests(seed, episode)?,
                seed,
                episode,
                preferences: prefs,
                demand,
                collect: None,
            },
            rec,
        )?;
        let m = compute_metrics(res.sim.log(), policy, seed, label)?;
        Ok((m, res.sim))
    }

    /// Train the dual agent for episodes `start..run.episodes`, calling
    /// `on_episode` after each one.
    pub fn train(
        &self,
        mut agent: DualAgent,
        prefs: &PreferenceSource,
        start: usize,
        mut on_episode: impl FnMut(usize, &EpisodeMetrics, &DualAgent) -> Result<()>,
    ) -> Result<TrainOutcome> {
        let seed = self.cfg.run.seed;
        let mut demand = self.demand_predictor()?;
        for e in 0..start as u64 {
            demand.observe_episode(&self.requests(seed, e)?);
        }
        agent.training = true;
        let mut rows = Vec::new();
        for e in start..self.cfg.run.episodes {
            let (m, _) = self.run(
                &mut agent,
                prefs,
                &mut demand,
                PolicyKind::DualAgent.as_str(),
                seed,
                e as u64,
                e as u64,
            )?;
            log::info!(
                "episode {e}: tdi={:.2} acceptance={:?} updates={}",
                m.tdi.as_currency(),
                m.acceptance_rate,
                agent.stats.vehicle_updates
            );
            on_episode(e, &m, &agent)?;
            rows.push(m);
        }
        agent.training = false;
        Ok(TrainOutcome { agent, rows })
    }

    /// Deterministic evaluation of one policy over `seeds`.
    pub fn evaluate(
        &self,
        policy: PolicyKind,
        agent: Option<&DualAgent>,
        prefs: &PreferenceSource,
        seeds: &[u64],
    ) -> Result<Vec<EpisodeMetrics>> {
        let mut rows = Vec::new();
        for (i, &seed) in seeds.iter().enumerate() {
            let mut demand = self.demand_predictor()?;
            let mut rec: Box<dyn Recommender> = match policy {
                PolicyKind::DualAgent => {
                    let mut a = agent
                        .ok_or_else(|| Error::Checkpoint("dual_agent evaluation needs a trained agent".into()))?
                        .clone();
                    a.training = false;
                    Box::new(a)
                }
                p => make_baseline(p, self.cfg.agent.effective_weights())?,
            };
            let (m, _) = self.run(
                rec.as_mut(),
                prefs,
                &mut demand,
                policy.as_str(),
                seed,
                EVAL_EPISODE,
                i as u64,
            )?;
            rows.push(m);
        }
        Ok(rows)
    }

    pub fn checkpoint(&self, agent: &DualAgent, prefs: &PreferenceSource, episode: usize) -> Checkpoint {
        let mut ck = Checkpoint::new(self.hash);
        agent.save_into(&mut ck);
        if let PreferenceSource::Recurrent(p) = prefs {
            p.save_into(&mut ck);
        }
        ck.insert_vec("train.next_episode", vec![episode as f64]);
        let seed = self.cfg.run.seed;
        ck.insert_vec("train.seed", vec![(seed >> 32) as f64, (seed & 0xffff_ffff) as f64]);
        ck
    }

    /// Agent, preference source and next episode index from a checkpoint made under this config and seed.
    pub fn restore(&self, ck: &Checkpoint) -> Result<(DualAgent, PreferenceSource, usize)> {
        if ck.config_hash != self.hash {
            return Err(Error::Checkpoint(format!(
                "checkpoint config hash {:016x} does not match config {:016x}",
                ck.config_hash, self.hash
            )));
        }
        let halves = &ck.expect("train.seed", &[2])?.data;
        let seed = ((halves[0] as u64) << 32) | halves[1] as u64;
        if seed != self.cfg.run.seed {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained with seed {seed}, run uses {}",
                self.cfg.run.seed
            )));
        }
        let mut agent = self.new_agent()?;
        agent.load_from(ck)?;
        let prefs = match self.cfg.behavior.predictor {
            PredictorKind::Oracle => PreferenceSource::Oracle,
            PredictorKind::Frequency => PreferenceSource::Frequency {
                alpha: self.cfg.behavior.frequency_alpha,
            },
            PredictorKind::Recurrent => {
                let mut p = self.new_predictor();
                p.load_from(ck)?;
                PreferenceSource::Recurrent(Box::new(p))
            }
        };
        let next = ck.expect("train.next_episode", &[1])?.data[0] as usize;
        Ok((agent, prefs, next))
    }
}

fn file_error(p: &Path, e: std::io::Error) -> Error {
    match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(p.to_path_buf()),
        _ => Error::Io(e),
    }
}

fn open(p: &Path) -> Result<std::fs::File> {
    std::fs::File::open(p).map_err(|e| file_error(p, e))
}
