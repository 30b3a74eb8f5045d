use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use routesim::engine::{run_experiment, TrialEvent};
use routesim::io::config::{AgentKind, BackendConfig, BackendKind, ExperimentConfig};
use routesim::io::{analyze, replay_trial, Header, RunLog, RunLogWriter, SCHEMA_VERSION};
use routesim::metrics::summarize_experiment;
use routesim::repr::ReprAxes;

/// Exit status for bad input: unreadable or invalid config, bad flags.
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "routesim", version, about = "Repeated selfish-routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its run log.
    Run(RunArgs),
    /// Summarize run logs into CSV tables, JSON and SVG charts.
    Analyze {
        /// Run log files or the directories holding them.
        #[arg(required = true)]
        runlogs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Re-execute a logged trial and check every decision.
    Replay {
        runlog: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Print the eight prompt representations.
    ListRepresentations,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// "A" or "B".
    #[arg(long)]
    game: Option<String>,
    /// Representation code such as S-RO; implies --agent llm.
    #[arg(long)]
    repr: Option<String>,
    /// uniform, best-response, mwu, exp3 or llm.
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Seed of trial 0; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// live, scripted, or replay:<transcript dir>.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials run concurrently.
    #[arg(long)]
    workers: Option<usize>,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            ExperimentConfig::parse_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => {
            let agent = match (args.agent, &args.repr) {
                (Some(a), _) => a,
                (None, Some(_)) => AgentKind::Llm,
                (None, None) => return Err("without --config, --agent or --repr is required".into()),
            };
            let trials = args.trials.ok_or("without --config, --trials is required")?;
            ExperimentConfig::new("A", agent, trials)
        }
    };
    if let Some(g) = &args.game {
        config.game = g.clone();
    }
    if let Some(r) = &args.repr {
        config.representation = Some(r.clone());
        if args.agent.is_none() {
            config.agent = AgentKind::Llm;
        }
    }
    if let Some(a) = args.agent {
        config.agent = a;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(r) = args.rounds {
        config.rounds = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = &args.out {
        config.out = o.clone();
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if let Some(b) = &args.backend {
        let (kind, path) = match b.split_once(':') {
            Some((k, p)) => (k, Some(PathBuf::from(p))),
            None => (b.as_str(), None),
        };
        let kind: BackendKind = kind.parse()?;
        let backend = config
            .backend
            .get_or_insert_with(|| BackendConfig::new(kind));
        backend.kind = kind;
        if path.is_some() {
            backend.transcripts = path;
        }
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    let (plan, client) = match config.plan().and_then(|p| Ok((p, config.build_client()?))) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    let header = Header {
        schema_version: SCHEMA_VERSION,
        config: Some(config.clone()),
        template: plan.template.clone(),
        trials: plan.trials,
        seed_base: plan.seed_base,
    };
    let writer = match RunLogWriter::create(&config.out, &header) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let sink = |event: TrialEvent<'_>| {
        if let TrialEvent::Finished { outcome } = &event {
            match &outcome.result {
                Ok(_) => log::info!("trial {} done", outcome.trial),
                Err(e) => eprintln!("trial {} failed: {e}", outcome.trial),
            }
        }
        writer.record(event);
    };
    let outcomes = match run_experiment(&plan, client.as_ref(), &sink) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = writer.finish() {
        eprintln!("error: writing run log: {e}");
        return ExitCode::FAILURE;
    }
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    let results: Vec<_> = outcomes.into_iter().filter_map(|o| o.result.ok()).collect();
    println!(
        "{} trials, {} failed; run log in {}",
        plan.trials,
        failed,
        config.out.display()
    );
    if let Ok(summary) = summarize_experiment(&results, failed) {
        for r in &summary.routes {
            println!("  {:<8} mean {:6.2}", r.route, r.mean);
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn cmd_analyze(runlogs: Vec<PathBuf>, out: PathBuf) -> ExitCode {
    let report = match analyze(&runlogs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match report.write(&out) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_replay(runlog: PathBuf, trial: usize) -> ExitCode {
    let log = match RunLog::read(&runlog) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match replay_trial(&log, trial) {
        Ok(r) => {
            println!("trial {}: {} rounds, {} decisions match", r.trial, r.rounds, r.decisions);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze { runlogs, out } => cmd_analyze(runlogs, out),
        Command::Replay { runlog, trial } => cmd_replay(runlog, trial),
        Command::ListRepresentations => {
            for axes in ReprAxes::all() {
                println!("{}  {}", axes.code(), axes.describe());
            }
            ExitCode::SUCCESS
        }
    }
}
