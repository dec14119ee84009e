//! The work behind each CLI subcommand, callable without a process boundary.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::agents::theorem::{run_diagnostic, TheoremReport};
use crate::agents::DualAgent;
use crate::baselines::{NoReposition, PolicyKind};
use crate::behavior::fit::{fit_acceptance_model, read_survey_csv, sample_survey, write_survey_csv, FitReport};
use crate::config::RunConfig;
use crate::episode::{GridView, PreferenceSource, Recommender, StepContext};
use crate::error::{Error, Result};
use crate::experiment::{Experiment, WARMUP_EPISODE};
use crate::metrics::{
    append_metrics_row, format_table, normalize_and_tabulate, read_metrics_csv, write_metrics_csv, write_table_csv,
    EpisodeMetrics, TableRow,
};
use crate::nn::Checkpoint;
use crate::rng::{stream_rng, SimRng, Stream};
use crate::world::demand::write_requests_csv;
use crate::world::fleet::{write_trajectories_csv, TrajectoryRow};
use crate::world::{GapVector, Simulator};

pub const SURVEY_RECORDS: usize = 20_000;
pub const THEOREM_INSTANCES: usize = 1000;

pub const TRAIN_METRICS: &str = "train_metrics.csv";
pub const EVAL_METRICS: &str = "eval_metrics.csv";
pub const TABLE_CSV: &str = "table.csv";
pub const TABLE_TXT: &str = "table.txt";
pub const LATEST_CHECKPOINT: &str = "checkpoint.bin";

/// Options shared by the subcommands; unset fields fall back to the config.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Options {
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
            cfg.validate()?;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Parse `--policy`; `all` selects every policy.
pub fn parse_policies(s: &str) -> Result<Vec<PolicyKind>> {
    if s == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

/// Records every driver's position after each step.
struct TrajectoryRecorder {
    rows: Vec<TrajectoryRow>,
}

impl Recommender for TrajectoryRecorder {
    fn order(&mut self, ctx: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        NoReposition.order(ctx, view, rng)
    }

    fn recommend(
        &mut self,
        _: &StepContext<'_>,
        _: &GridView,
        _: usize,
        _: &GapVector,
        _: &mut SimRng,
    ) -> Result<Option<usize>> {
        Ok(None)
    }

    fn end_step(&mut self, sim: &Simulator, _: &mut SimRng) -> Result<()> {
        self.rows.extend(sim.trajectory_rows());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataSummary {
    pub requests: usize,
    pub trajectory_rows: usize,
    pub survey_records: usize,
}

/// Write `requests.csv`, `trajectories.csv`, `survey.csv` and a manifest.
pub fn gen_data(opts: &Options) -> Result<GenDataSummary> {
    let cfg = opts.load_config()?;
    let exp = Experiment::new(cfg)?;
    let out = opts.out_dir()?;
    let seed = exp.cfg.run.seed;
    let requests = exp.requests(seed, 0)?;
    write_requests_csv(&exp.scenario.map, &requests, create(&out.join("requests.csv"))?)?;

    let mut rec = TrajectoryRecorder { rows: Vec::new() };
    let mut demand = exp.demand_predictor()?;
    exp.run(
        &mut rec,
        &PreferenceSource::Oracle,
        &mut demand,
        PolicyKind::NoReposition.as_str(),
        seed,
        WARMUP_EPISODE,
        0,
    )?;
    write_trajectories_csv(&rec.rows, create(&out.join("trajectories.csv"))?)?;

    let mut rng = stream_rng(seed, Stream::Survey, 0);
    let survey = sample_survey(
        &exp.scenario.acceptance,
        SURVEY_RECORDS,
        exp.cfg.behavior.income_scale,
        &mut rng,
    );
    write_survey_csv(&survey, create(&out.join("survey.csv"))?)?;

    let mut m = create(&out.join("manifest.txt"))?;
    writeln!(m, "config_hash = {:016x}", exp.hash)?;
    writeln!(m, "seed = {seed}")?;
    writeln!(m, "requests = {}", requests.len())?;
    writeln!(m, "trajectory_rows = {}", rec.rows.len())?;
    writeln!(m, "survey_records = {}", survey.len())?;
    m.flush()?;
    Ok(GenDataSummary {
        requests: requests.len(),
        trajectory_rows: rec.rows.len(),
        survey_records: survey.len(),
    })
}

/// Fit the acceptance model to `survey` and write `acceptance_model.txt`.
pub fn fit_acceptance(opts: &Options, survey: &Path) -> Result<FitReport> {
    let cfg = opts.load_config()?;
    if !survey.exists() {
        return Err(Error::MissingFile(survey.to_path_buf()));
    }
    let records = read_survey_csv(fs::File::open(survey)?, cfg.behavior.income_scale)?;
    let report = fit_acceptance_model(&records)?;
    let out = opts.out_dir()?;
    fs::write(out.join("acceptance_model.txt"), report.to_kv(Some(cfg.hash())))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub episodes_run: usize,
    pub rows: Vec<EpisodeMetrics>,
    pub checkpoint: PathBuf,
}

fn save_checkpoint(
    exp: &Experiment,
    agent: &DualAgent,
    prefs: &PreferenceSource,
    next: usize,
    path: &Path,
) -> Result<()> {
    exp.checkpoint(agent, prefs, next).save(path)
}

/// Train the dual agent, resuming from `opts.checkpoint` when given. Metrics
/// go to `train_metrics.csv`; checkpoints every `run.checkpoint_every` episodes.
pub fn train(opts: &Options) -> Result<TrainSummary> {
    if let Some(p) = &opts.policy {
        if p.parse::<PolicyKind>()? != PolicyKind::DualAgent {
            return Err(Error::Config {
                key: "policy".into(),
                reason: format!("only dual_agent is trainable, got `{p}`"),
            });
        }
    }
    let cfg = opts.load_config()?;
    let exp = Experiment::new(cfg)?;
    let out = opts.out_dir()?.to_path_buf();
    let metrics_path = out.join(TRAIN_METRICS);

    let (agent, prefs, start) = match &opts.checkpoint {
        Some(p) => exp.restore(&Checkpoint::load(p)?)?,
        None => (exp.new_agent()?, exp.prepare_preferences()?.0, 0),
    };

    // Keep the rows before `start` from an earlier run; drop anything after it.
    let mut kept = Vec::new();
    if start > 0 && metrics_path.exists() {
        let (hash, rows) = read_metrics_csv(BufReader::new(fs::File::open(&metrics_path)?))?;
        if hash.is_some_and(|h| h != exp.hash) {
            return Err(Error::Checkpoint(format!(
                "{} belongs to a different config",
                metrics_path.display()
            )));
        }
        kept = rows.into_iter().filter(|r| (r.episode as usize) < start).collect();
    }
    write_metrics_csv(create(&metrics_path)?, exp.hash, &kept)?;

    let every = exp.cfg.run.checkpoint_every;
    let latest = out.join(LATEST_CHECKPOINT);
    let outcome = exp.train(agent, &prefs, start, |e, m, a| {
        let mut f = fs::OpenOptions::new().append(true).open(&metrics_path)?;
        append_metrics_row(&mut f, m)?;
        if (e + 1) % every == 0 {
            save_checkpoint(
                &exp,
                a,
                &prefs,
                e + 1,
                &out.join(format!("checkpoint_{:05}.bin", e + 1)),
            )?;
            save_checkpoint(&exp, a, &prefs, e + 1, &latest)?;
        }
        Ok(())
    })?;
    save_checkpoint(&exp, &outcome.agent, &prefs, exp.cfg.run.episodes.max(start), &latest)?;
    Ok(TrainSummary {
        episodes_run: outcome.rows.len(),
        rows: outcome.rows,
        checkpoint: latest,
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub rows: Vec<EpisodeMetrics>,
    pub table: Vec<TableRow>,
}

/// Evaluate the chosen policies (plus no_reposition for normalization) on
/// `run.eval_seeds`; write metrics and comparison tables.
pub fn evaluate(opts: &Options) -> Result<EvalSummary> {
    let cfg = opts.load_config()?;
    let mut policies = parse_policies(opts.policy.as_deref().unwrap_or(cfg.run.policy.as_str()))?;
    let exp = Experiment::new(cfg)?;
    let (agent, prefs) = match &opts.checkpoint {
        Some(p) => {
            let (a, prefs, _) = exp.restore(&Checkpoint::load(p)?)?;
            (Some(a), prefs)
        }
        None if policies.contains(&PolicyKind::DualAgent) => {
            return Err(Error::Checkpoint("dual_agent evaluation needs --checkpoint".into()));
        }
        None => (None, exp.prepare_preferences()?.0),
    };
    if !policies.contains(&PolicyKind::NoReposition) {
        policies.insert(0, PolicyKind::NoReposition);
    }
    let seeds = exp.cfg.run.eval_seeds.clone();
    let mut rows = Vec::new();
    for p in policies {
        rows.extend(exp.evaluate(p, agent.as_ref(), &prefs, &seeds)?);
    }
    let out = opts.out_dir()?;
    write_metrics_csv(create(&out.join(EVAL_METRICS))?, exp.hash, &rows)?;
    let table = write_tables(out, exp.hash, &rows)?;
    Ok(EvalSummary { rows, table })
}

fn write_tables(out: &Path, hash: u64, rows: &[EpisodeMetrics]) -> Result<Vec<TableRow>> {
    let table = normalize_and_tabulate(rows, PolicyKind::NoReposition.as_str())?;
    write_table_csv(create(&out.join(TABLE_CSV))?, hash, &table)?;
    fs::write(
        out.join(TABLE_TXT),
        format!("# config_hash={hash:016x}\n{}", format_table(&table)),
    )?;
    Ok(table)
}

/// Rebuild the comparison tables from metrics CSVs.
pub fn report(opts: &Options, inputs: &[PathBuf]) -> Result<Vec<TableRow>> {
    let default = [opts.out.join(EVAL_METRICS)];
    let inputs = if inputs.is_empty() { &default[..] } else { inputs };
    let mut hash = None;
    let mut rows = Vec::new();
    for p in inputs {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
        let (h, r) = read_metrics_csv(BufReader::new(fs::File::open(p)?))?;
        match (hash, h) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::MalformedLog(format!(
                    "{} has config hash {b:016x}, expected {a:016x}",
                    p.display()
                )));
            }
            (None, h) => hash = h,
            _ => {}
        }
        rows.extend(r);
    }
    write_tables(opts.out_dir()?, hash.unwrap_or(0), &rows)
}

/// Enumeration diagnostic; writes `theorem1.txt`.
pub fn diagnose_theorem1(opts: &Options, instances: usize) -> Result<TheoremReport> {
    let cfg = opts.load_config()?;
    let report = run_diagnostic(instances, &cfg.agent.effective_weights(), cfg.run.seed)?;
    let out = opts.out_dir()?;
    fs::write(
        out.join("theorem1.txt"),
        format!(
            "config_hash={:016x}\nseed={}\n{}",
            cfg.hash(),
            cfg.run.seed,
            report.to_text()
        ),
    )?;
    Ok(report)
}
