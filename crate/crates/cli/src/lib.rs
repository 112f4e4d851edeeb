//! Command-line front end: `train`, `eval`, `oracle`, `serve` and `score`.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use teachnet_core::harness::{
    aggregate_scores, evaluate_checkpoints, parse_log, run_experiment, score_session,
    ConditionSummary, ExperimentConfig, ExperimentOutcome, Regime, SessionScore, SessionStatus,
    StudySession, StudyTask,
};
use teachnet_core::tasks::TaskKind;
use teachnet_service::{AppState, Checkpoints, TeacherPair};

#[derive(Debug, Parser)]
#[command(name = "teachnet", version, about = "Teacher/student example-selection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train per the configured regime, evaluate and write the report bundle.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides the regime in the config file.
        #[arg(long, value_parser = parse_regime)]
        regime: Option<Regime>,
    },
    /// Re-evaluate checkpoints written by an earlier `train` run.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint directory (defaults to `<config output_dir>/checkpoints`).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Solve the exact pedagogy fixed point for a discrete task.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the HTTP study service.
    Serve {
        /// JSON file with `addr`, `storage`, `bimodal` and `boolean` keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        /// Directory holding the per-session logs.
        #[arg(long)]
        storage: Option<PathBuf>,
        /// Bimodal teacher checkpoint directory.
        #[arg(long)]
        bimodal: Option<PathBuf>,
        /// Boolean teacher checkpoint directory.
        #[arg(long)]
        boolean: Option<PathBuf>,
    },
    /// Score every completed session log in a directory.
    Score {
        /// Directory of `<session>.jsonl` logs.
        logs: PathBuf,
        /// Where to write `scores.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown regime `{s}` (br, joint, random-baseline, oracle)"))
}

impl CommonArgs {
    /// Loads the config file, or returns `fallback` when none was given.
    pub fn load(&self, fallback: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
        match (&self.config, fallback) {
            (Some(p), _) => ExperimentConfig::from_json_file(p)
                .with_context(|| format!("loading config {}", p.display())),
            (None, Some(f)) => Ok(f),
            (None, None) => bail!("--config is required"),
        }
    }

    /// Applies the `--seed` and `--out` overrides.
    pub fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg
    }
}

/// Settings for `serve`; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub addr: Option<String>,
    pub storage: Option<PathBuf>,
    pub bimodal: Option<PathBuf>,
    pub boolean: Option<PathBuf>,
}

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

impl ServeConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn checkpoints(&self) -> Result<Checkpoints> {
        let mut cp = Checkpoints::default();
        for (task, dir) in [(StudyTask::Bimodal, &self.bimodal), (StudyTask::Boolean, &self.boolean)] {
            if let Some(dir) = dir {
                let pair = TeacherPair::load(dir, task)
                    .with_context(|| format!("loading {task:?} checkpoint from {}", dir.display()))?;
                cp = cp.with(task, pair);
            }
        }
        Ok(cp)
    }
}

/// Scores of all complete sessions under a log directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub sessions: Vec<SessionScore>,
    pub conditions: Vec<ConditionSummary>,
    /// Sessions with unanswered items, which are not scored.
    pub incomplete: Vec<String>,
}

/// Replays every `*.jsonl` log in `dir` (sorted by file name) and scores
/// the complete sessions.
pub fn score_logs(dir: &Path) -> Result<ScoreReport> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut sessions = Vec::new();
    let mut incomplete = Vec::new();
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let session = parse_log(&text)
            .and_then(|entries| StudySession::replay(&entries))
            .with_context(|| format!("replaying {}", p.display()))?;
        match session.status {
            SessionStatus::Complete => sessions.push(score_session(&session)?),
            SessionStatus::Active => incomplete.push(session.id),
        }
    }
    let conditions = aggregate_scores(&sessions);
    Ok(ScoreReport {
        sessions,
        conditions,
        incomplete,
    })
}

fn print_outcome(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) {
    for r in &outcome.reports {
        let s = &r.summary;
        let rate = s.match_rate.map(|m| format!(" match_rate={m:.4}")).unwrap_or_default();
        println!(
            "{:<8} {}: mean={:.4} std={:.4}{rate} consistent={:.4} n={}",
            s.policy.name(),
            s.metric,
            s.mean,
            s.std,
            s.consistent_rate,
            s.n
        );
    }
    println!("wrote {}", cfg.output_dir.join("summary.json").display());
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn serve(config: ServeConfig) -> Result<()> {
    let addr = config.addr.clone().unwrap_or_else(|| DEFAULT_ADDR.to_string());
    let storage = config
        .storage
        .clone()
        .unwrap_or_else(|| PathBuf::from("sessions"));
    let state = AppState::open(&storage, config.checkpoints()?)
        .with_context(|| format!("opening session storage {}", storage.display()))?;
    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    rt.block_on(async move {
        let (tx, rx) = tokio::sync::oneshot::channel::<SocketAddr>();
        let server = tokio::spawn(async move { teachnet_service::serve(&addr, state, Some(tx)).await });
        if let Ok(bound) = rx.await {
            println!("listening on http://{bound}");
        }
        server.await.context("service task panicked")??;
        Ok(())
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, regime } => {
            let mut cfg = common.apply(common.load(None)?);
            if let Some(r) = regime {
                cfg.regime = r;
            }
            let outcome = run_experiment(&cfg)?;
            print_outcome(&cfg, &outcome);
        }
        Command::Eval { common, checkpoints } => {
            let base = common.load(None)?;
            let dir = checkpoints.unwrap_or_else(|| base.output_dir.join("checkpoints"));
            let cfg = common.apply(base);
            let outcome = evaluate_checkpoints(&cfg, &dir)
                .with_context(|| format!("evaluating checkpoints in {}", dir.display()))?;
            print_outcome(&cfg, &outcome);
        }
        Command::Oracle { common } => {
            let mut default = ExperimentConfig::default();
            default.train.task.kind = TaskKind::Boolean;
            let mut cfg = common.apply(common.load(Some(default))?);
            cfg.regime = Regime::Oracle;
            let outcome = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary["oracle"])?);
            println!("wrote {}", cfg.output_dir.join("summary.json").display());
        }
        Command::Serve {
            config,
            addr,
            storage,
            bimodal,
            boolean,
        } => {
            let base = match config {
                Some(p) => ServeConfig::load(&p)?,
                None => ServeConfig::default(),
            };
            serve(ServeConfig {
                addr: addr.or(base.addr),
                storage: storage.or(base.storage),
                bimodal: bimodal.or(base.bimodal),
                boolean: boolean.or(base.boolean),
            })?;
        }
        Command::Score { logs, out } => {
            let report = score_logs(&logs)?;
            for c in &report.conditions {
                println!(
                    "{:?} {:?} {:?}: sessions={} mean_accuracy={:.4} std={:.4}",
                    c.task, c.condition, c.mode, c.sessions, c.mean_accuracy, c.std_accuracy
                );
            }
            if !report.incomplete.is_empty() {
                println!("skipped {} incomplete session(s)", report.incomplete.len());
            }
            if let Some(dir) = out {
                let path = dir.join("scores.json");
                write_json(&path, &report)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
