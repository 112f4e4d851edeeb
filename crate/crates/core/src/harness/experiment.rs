use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_on_concepts, write_plot_data, Policy, PolicyNets, StrategyReport,
};
use crate::oracle::{self, DiscreteDomain, UpdateOrder};
use crate::tasks::{Concept, TaskKind, TaskSpec, ALL_PROPERTY_COUNTS};
use crate::training::{self, TrainConfig, TrainedPair, TrainingMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Br,
    Joint,
    RandomBaseline,
    Oracle,
}

/// Which concepts evaluation episodes are run on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalConcepts {
    /// Interior hierarchy nodes in turn; the concept prior for other tasks.
    #[default]
    Auto,
    Prior,
    InteriorNodes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub order: UpdateOrder,
    /// Boolean concepts included in the domain, by constrained-property count.
    pub property_counts: Vec<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            alpha: 1.0,
            max_iters: 10_000,
            tol: 1e-10,
            order: UpdateOrder::StudentFirst,
            property_counts: ALL_PROPERTY_COUNTS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub train: TrainConfig,
    pub eval_episodes: usize,
    pub eval_concepts: EvalConcepts,
    pub output_dir: PathBuf,
    /// Seeds training (overriding `train.seed`) and evaluation.
    pub seed: u64,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            regime: Regime::Br,
            train: TrainConfig::default(),
            eval_episodes: 1000,
            eval_concepts: EvalConcepts::Auto,
            output_dir: PathBuf::from("out"),
            seed: 0,
            oracle: OracleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
    }

    pub fn task_kind(&self) -> TaskKind {
        self.train.task.kind
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_episodes == 0 {
            return Err(Error::invalid("eval_episodes must be positive"));
        }
        if self.regime == Regime::Oracle && !matches!(self.task_kind(), TaskKind::Boolean | TaskKind::Hierarchy) {
            return Err(Error::invalid("the oracle regime needs a discrete task"));
        }
        self.train.validate()
    }

    /// Training config with the experiment seed applied.
    pub fn seeded_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Reports and summary produced by [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub reports: Vec<StrategyReport>,
    pub pair: Option<TrainedPair>,
    pub summary: serde_json::Value,
}

impl ExperimentOutcome {
    pub fn report(&self, policy: Policy) -> Option<&StrategyReport> {
        self.reports.iter().find(|r| r.summary.policy == policy)
    }
}

/// Evaluation concepts for `n` episodes.
pub fn eval_concepts(
    task: &TaskSpec,
    which: EvalConcepts,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Concept>> {
    let interior = match (which, task.kind) {
        (EvalConcepts::InteriorNodes, _) | (EvalConcepts::Auto, TaskKind::Hierarchy) => true,
        _ => false,
    };
    if interior {
        let nodes = task.hierarchy_ref()?.interior_nodes();
        if nodes.is_empty() {
            return Err(Error::invalid("hierarchy has no interior nodes"));
        }
        return Ok((0..n).map(|i| Concept::Node(nodes[i % nodes.len()])).collect());
    }
    Ok((0..n).map(|_| crate::tasks::sample_concept(task, rng)).collect())
}

/// Evaluates `policy` on the configured evaluation concepts.
pub fn evaluate(
    cfg: &ExperimentConfig,
    task: &TaskSpec,
    policy: Policy,
    nets: PolicyNets,
) -> Result<StrategyReport> {
    // every policy sees the same concepts
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_e7a1);
    let concepts = eval_concepts(task, cfg.eval_concepts, cfg.eval_episodes, &mut rng)?;
    evaluate_on_concepts(policy, task, nets, &concepts, &mut rng)
}

fn write_reports(dir: &Path, reports: &[StrategyReport]) -> Result<()> {
    for r in reports {
        let name = r.summary.policy.name();
        r.write_csv(&dir.join(format!("episodes_{name}.csv")))?;
    }
    let refs: Vec<&StrategyReport> = reports.iter().collect();
    write_plot_data(&refs, &dir.join("plot_data.csv"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn final_losses(pair: &TrainedPair) -> serde_json::Value {
    pair.history
        .iter()
        .map(|h| (h.phase.clone(), json!(h.losses.last().copied())))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

/// Trains per the regime, evaluates the applicable policies and writes
/// checkpoints, per-episode CSVs, `plot_data.csv` and `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let task = cfg.train.task.build()?;
    let mut summary = json!({
        "regime": cfg.regime,
        "task": task.kind,
        "seed": cfg.seed,
    });
    if cfg.regime == Regime::Oracle {
        return run_oracle(cfg, &task, summary);
    }
    let (reports, pair) = match cfg.regime {
        Regime::RandomBaseline => {
            let r = evaluate(cfg, &task, Policy::Random, PolicyNets::default())?;
            (vec![r], None)
        }
        Regime::Br | Regime::Joint => {
            let mode = training_mode(cfg.regime)?;
            let tcfg = cfg.seeded_train();
            let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
            let pair = match mode {
                TrainingMode::BestResponse => training::train_best_response(&tcfg, &task, &mut rng)?,
                TrainingMode::Joint => training::train_joint(&tcfg, &task, &mut rng)?,
            };
            pair.save(&out.join("checkpoints"))?;
            summary["training"] = json!({ "mode": mode, "final_loss": final_losses(&pair) });
            (evaluate_pair(cfg, &task, &pair)?, Some(pair))
        }
        Regime::Oracle => unreachable!(),
    };
    write_reports(out, &reports)?;
    summary["reports"] = json!(reports.iter().map(|r| &r.summary).collect::<Vec<_>>());
    write_json(&out.join("summary.json"), &summary)?;
    Ok(ExperimentOutcome {
        reports,
        pair,
        summary,
    })
}

fn training_mode(regime: Regime) -> Result<TrainingMode> {
    match regime {
        Regime::Br => Ok(TrainingMode::BestResponse),
        Regime::Joint => Ok(TrainingMode::Joint),
        other => Err(Error::invalid(format!("regime {other:?} has no trained networks"))),
    }
}

/// Evaluates the pair's own policy (teacher or joint) and the random
/// baseline scored by the same student.
fn evaluate_pair(cfg: &ExperimentConfig, task: &TaskSpec, pair: &TrainedPair) -> Result<Vec<StrategyReport>> {
    let policy = match pair.mode {
        TrainingMode::BestResponse => Policy::Teacher,
        TrainingMode::Joint => Policy::Joint,
    };
    let taught = evaluate(cfg, task, policy, PolicyNets::pair(&pair.teacher, &pair.student))?;
    let random = evaluate(
        cfg,
        task,
        Policy::Random,
        PolicyNets {
            teacher: None,
            student: Some(&pair.student),
        },
    )?;
    Ok(vec![taught, random])
}

/// Evaluates checkpoints saved by a `br` or `joint` run of `cfg`, writing
/// the same per-episode CSVs, `plot_data.csv` and `summary.json`.
pub fn evaluate_checkpoints(cfg: &ExperimentConfig, checkpoints: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let mode = training_mode(cfg.regime)?;
    let task = cfg.train.task.build()?;
    let pair = TrainedPair::load(checkpoints, mode)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let reports = evaluate_pair(cfg, &task, &pair)?;
    write_reports(out, &reports)?;
    let summary = json!({
        "regime": cfg.regime,
        "task": task.kind,
        "seed": cfg.seed,
        "checkpoints": checkpoints,
        "reports": reports.iter().map(|r| &r.summary).collect::<Vec<_>>(),
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(ExperimentOutcome {
        reports,
        pair: Some(pair),
        summary,
    })
}

/// Consistency domain for a discrete task.
pub fn task_domain(task: &TaskSpec, counts: &[usize]) -> Result<DiscreteDomain> {
    match task.kind {
        TaskKind::Boolean => oracle::boolean_domain(counts),
        TaskKind::Hierarchy => {
            let h = task.hierarchy_ref()?;
            let n = h.candidate_count();
            let concepts = (0..h.node_count()).map(|i| h.node(i).name.clone()).collect();
            let examples = (0..n)
                .map(|i| {
                    let (leaf, img) = h.candidate(i);
                    format!("{}#{img}", h.node(leaf).name)
                })
                .collect();
            let consistent = (0..h.node_count())
                .map(|c| (0..n).map(|i| h.is_ancestor(c, h.candidate(i).0)).collect())
                .collect();
            DiscreteDomain::uniform(concepts, examples, consistent)
        }
        _ => Err(Error::invalid("the oracle needs a discrete task")),
    }
}

fn run_oracle(
    cfg: &ExperimentConfig,
    task: &TaskSpec,
    mut summary: serde_json::Value,
) -> Result<ExperimentOutcome> {
    let o = &cfg.oracle;
    let out: PathBuf = cfg.output_dir.clone();
    let domain = task_domain(task, &o.property_counts)?;
    oracle::write_domain_csv(&domain, &out.join("domain.csv"))?;
    let fixed = oracle::fixed_point_ordered(&domain, o.alpha, o.max_iters, o.tol, o.order)?;
    let single = oracle::single_step(&domain, o.alpha)?;
    oracle::write_state_csv(&fixed, &domain, &out.join("fixed_point"))?;
    oracle::write_state_csv(&single, &domain, &out.join("single_step"))?;
    summary["oracle"] = json!({
        "alpha": o.alpha,
        "order": o.order,
        "concepts": domain.concept_count(),
        "examples": domain.example_count(),
        "fixed_point": {
            "iterations": fixed.iterations,
            "residual": fixed.residual,
            "converged": fixed.converged,
        },
        "single_step_change": single.residual,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(ExperimentOutcome {
        reports: Vec::new(),
        pair: None,
        summary,
    })
}
