use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rebalance_core::commands::{self, Options, THEOREM_INSTANCES};
use rebalance_core::Error;

#[derive(Parser)]
#[command(
    name = "rebalance",
    version,
    about = "Preference-aware taxi repositioning on a grid city"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Policy kind, a comma-separated list, or `all`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options {
            config: c.config,
            seed: c.seed,
            policy: c.policy,
            checkpoint: c.checkpoint,
            out: c.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic requests, trajectories and survey answers.
    GenData(Common),
    /// Fit the acceptance model to a survey CSV.
    FitAcceptance {
        #[command(flatten)]
        common: Common,
        /// Survey CSV; defaults to `<out>/survey.csv`.
        #[arg(long)]
        survey: Option<PathBuf>,
    },
    /// Train the dual agent, checkpointing periodically.
    Train(Common),
    /// Evaluate policies on the evaluation seeds and tabulate.
    Evaluate(Common),
    /// Compare sequential play against the joint optimum on random instances.
    DiagnoseTheorem1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = THEOREM_INSTANCES)]
        instances: usize,
    },
    /// Rebuild comparison tables from metrics CSVs.
    Report {
        #[command(flatten)]
        common: Common,
        /// Metrics CSVs; defaults to `<out>/eval_metrics.csv`.
        metrics: Vec<PathBuf>,
    },
}

fn run(cmd: Command) -> rebalance_core::Result<()> {
    match cmd {
        Command::GenData(c) => {
            let s = commands::gen_data(&c.into())?;
            println!(
                "requests={} trajectory_rows={} survey_records={}",
                s.requests, s.trajectory_rows, s.survey_records
            );
        }
        Command::FitAcceptance { common, survey } => {
            let opts: Options = common.into();
            let survey = survey.unwrap_or_else(|| opts.out.join("survey.csv"));
            print!("{}", commands::fit_acceptance(&opts, &survey)?.to_kv(None));
        }
        Command::Train(c) => {
            let s = commands::train(&c.into())?;
            println!("episodes={} checkpoint={}", s.episodes_run, s.checkpoint.display());
        }
        Command::Evaluate(c) => {
            let s = commands::evaluate(&c.into())?;
            print!("{}", rebalance_core::metrics::format_table(&s.table));
        }
        Command::DiagnoseTheorem1 { common, instances } => {
            print!("{}", commands::diagnose_theorem1(&common.into(), instances)?.to_text());
        }
        Command::Report { common, metrics } => {
            let rows = commands::report(&common.into(), &metrics)?;
            print!("{}", rebalance_core::metrics::format_table(&rows));
        }
    }
    Ok(())
}

fn fail(kind: &str, msg: &str) -> ExitCode {
    let msg = msg.lines().next().unwrap_or("").trim();
    eprintln!("error: kind={kind} msg={msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", &e.to_string()),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e: Error = e;
            fail(e.kind(), &e.to_string())
        }
    }
}
