use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distance::{boolean_intuitive_match, corner_distance, lca_match, mode_distance};
use crate::error::{Error, Result};
use crate::nets::{build_prior_rollout, build_teach_rollout, StudentNet, TeachOptions, TeacherNet};
use crate::tasks::{
    self, BimodalConcept, Concept, Example, Properties, RectangleConcept, TaskKind, TaskSpec,
};

/// Episodes per batched rollout during evaluation.
const EVAL_CHUNK: usize = 250;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Random,
    Teacher,
    Joint,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Teacher => "teacher",
            Policy::Joint => "joint",
        }
    }
}

/// Networks available to a policy. Teacher-driven policies need both; the
/// random policy uses the student, when present, only to score its guesses.
#[derive(Clone, Copy, Default)]
pub struct PolicyNets<'a> {
    pub teacher: Option<&'a TeacherNet>,
    pub student: Option<&'a StudentNet>,
}

impl<'a> PolicyNets<'a> {
    pub fn pair(teacher: &'a TeacherNet, student: &'a StudentNet) -> Self {
        PolicyNets {
            teacher: Some(teacher),
            student: Some(student),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub concept: Concept,
    pub examples: Vec<Example>,
    /// Distance for continuous tasks, 1.0/0.0 for match-flag tasks.
    pub metric: f64,
    pub matched: Option<bool>,
    /// How many of the examples lie in the concept's support.
    pub consistent: usize,
    /// Task loss of the student's final guess, when a student was involved.
    pub loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub policy: Policy,
    pub task: TaskKind,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub match_rate: Option<f64>,
    pub n: usize,
    pub consistent_rate: f64,
    pub mean_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub summary: ReportSummary,
    pub episodes: Vec<EpisodeRecord>,
}

pub fn metric_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Rectangle => "corner_distance",
        TaskKind::Bimodal => "mode_distance",
        TaskKind::Boolean => "intuitive_match",
        TaskKind::Hierarchy => "lca_match",
    }
}

/// Scores one pair of examples against the task's intuitive strategy.
/// Returns the metric value and, for flag metrics, the flag. Examples outside
/// the concept never count as an intuitive pair.
pub fn score_examples(
    task: &TaskSpec,
    concept: &Concept,
    examples: &[Example],
) -> Result<(f64, Option<bool>)> {
    let [a, b] = examples else {
        return Err(Error::invalid(format!(
            "strategy metrics need exactly two examples, got {}",
            examples.len()
        )));
    };
    let point = |e: &Example, d: usize| -> Result<Vec<f64>> {
        match e.point() {
            Some(p) if p.len() == d => Ok(p.to_vec()),
            _ => Err(Error::invalid("example does not match task")),
        }
    };
    let index = |e: &Example| e.candidate().ok_or_else(|| Error::invalid("example does not match task"));
    match concept {
        Concept::Rectangle(r) => {
            let (p, q) = (point(a, 2)?, point(b, 2)?);
            Ok((corner_distance([[p[0], p[1]], [q[0], q[1]]], r), None))
        }
        Concept::Bimodal(m) => Ok((mode_distance([point(a, 1)?[0], point(b, 1)?[0]], m), None)),
        Concept::Boolean(c) => {
            let (i, j) = (index(a)?, index(b)?);
            if i >= tasks::boolean::CANDIDATE_COUNT || j >= tasks::boolean::CANDIDATE_COUNT {
                return Err(Error::invalid("candidate out of range"));
            }
            let (p, q) = (Properties::from_index(i), Properties::from_index(j));
            let hit = tasks::boolean_consistent(&p, c)
                && tasks::boolean_consistent(&q, c)
                && boolean_intuitive_match(&p, &q, c)?;
            Ok((f64::from(u8::from(hit)), Some(hit)))
        }
        Concept::Node(n) => {
            let h = task.hierarchy_ref()?;
            let (i, j) = (index(a)?, index(b)?);
            if i >= h.candidate_count() || j >= h.candidate_count() {
                return Err(Error::invalid("candidate out of range"));
            }
            let hit = lca_match(h.candidate(i).0, h.candidate(j).0, *n, h)?;
            Ok((f64::from(u8::from(hit)), Some(hit)))
        }
    }
}

fn record(
    task: &TaskSpec,
    concept: Concept,
    examples: Vec<Example>,
    loss: Option<f64>,
) -> Result<EpisodeRecord> {
    let (metric, matched) = score_examples(task, &concept, &examples)?;
    let mut consistent = 0;
    for e in &examples {
        if tasks::is_consistent(e, &concept, task)? {
            consistent += 1;
        }
    }
    Ok(EpisodeRecord {
        concept,
        examples,
        metric,
        matched,
        consistent,
        loss,
    })
}

/// Runs `n_episodes` evaluation episodes on concepts drawn from the prior.
pub fn evaluate_policy<R: Rng + ?Sized>(
    policy: Policy,
    task: &TaskSpec,
    nets: PolicyNets,
    n_episodes: usize,
    rng: &mut R,
) -> Result<StrategyReport> {
    let concepts: Vec<Concept> = (0..n_episodes)
        .map(|_| tasks::sample_concept(task, rng))
        .collect();
    evaluate_on_concepts(policy, task, nets, &concepts, rng)
}

/// Runs one evaluation episode per listed concept, with `K_teach` examples.
pub fn evaluate_on_concepts<R: Rng + ?Sized>(
    policy: Policy,
    task: &TaskSpec,
    nets: PolicyNets,
    concepts: &[Concept],
    rng: &mut R,
) -> Result<StrategyReport> {
    if concepts.is_empty() {
        return Err(Error::invalid("no evaluation episodes"));
    }
    let k = task.k_teach;
    let mut episodes = Vec::with_capacity(concepts.len());
    match (policy, nets.teacher, nets.student) {
        (Policy::Random, _, None) => {
            for c in concepts {
                let examples = (0..k)
                    .map(|_| tasks::sample_example_prior(c, task, rng))
                    .collect::<Result<Vec<_>>>()?;
                episodes.push(record(task, *c, examples, None)?);
            }
        }
        (Policy::Random, _, Some(student)) => {
            for chunk in concepts.chunks(EVAL_CHUNK) {
                let r = build_prior_rollout(task, student, chunk, k, false, rng)?;
                let ev = r.run(&[&student.params])?;
                for tr in r.traces(&ev, task)? {
                    let examples = tr.examples();
                    episodes.push(record(task, tr.concept, examples, Some(tr.loss))?);
                }
            }
        }
        (Policy::Teacher | Policy::Joint, Some(teacher), Some(student)) => {
            for chunk in concepts.chunks(EVAL_CHUNK) {
                let r = build_teach_rollout(task, teacher, student, chunk, k, TeachOptions::eval(), rng)?;
                let ev = r.run(&[&teacher.params, &student.params])?;
                for tr in r.traces(&ev, task)? {
                    let examples = tr.examples();
                    episodes.push(record(task, tr.concept, examples, Some(tr.loss))?);
                }
            }
        }
        _ => {
            return Err(Error::invalid(format!(
                "policy `{}` needs a teacher and a student",
                policy.name()
            )))
        }
    }
    Ok(StrategyReport::from_episodes(policy, task.kind, episodes))
}

impl StrategyReport {
    pub fn from_episodes(policy: Policy, task: TaskKind, episodes: Vec<EpisodeRecord>) -> Self {
        let n = episodes.len();
        let nf = n.max(1) as f64;
        let mean = episodes.iter().map(|e| e.metric).sum::<f64>() / nf;
        let var = episodes.iter().map(|e| (e.metric - mean).powi(2)).sum::<f64>() / nf;
        let match_rate = episodes.first().and_then(|e| e.matched).map(|_| {
            episodes.iter().filter(|e| e.matched == Some(true)).count() as f64 / nf
        });
        let total_examples: usize = episodes.iter().map(|e| e.examples.len()).sum();
        let consistent_rate =
            episodes.iter().map(|e| e.consistent).sum::<usize>() as f64 / total_examples.max(1) as f64;
        let losses: Option<Vec<f64>> = episodes.iter().map(|e| e.loss).collect();
        let mean_loss = losses.map(|l| l.iter().sum::<f64>() / nf);
        StrategyReport {
            summary: ReportSummary {
                policy,
                task,
                metric: metric_name(task).to_string(),
                mean,
                std: var.sqrt(),
                match_rate,
                n,
                consistent_rate,
                mean_loss,
            },
            episodes,
        }
    }

    pub fn mean(&self) -> f64 {
        self.summary.mean
    }

    pub fn match_rate(&self) -> Option<f64> {
        self.summary.match_rate
    }

    /// One row per episode.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["episode", "policy", "concept", "examples", "metric", "matched", "consistent", "loss"])
            .map_err(|e| csv_err(path, e))?;
        for (i, ep) in self.episodes.iter().enumerate() {
            let row = [
                i.to_string(),
                self.summary.policy.name().to_string(),
                concept_label(&ep.concept),
                examples_label(&ep.examples),
                ep.metric.to_string(),
                ep.matched.map(|m| m.to_string()).unwrap_or_default(),
                ep.consistent.to_string(),
                ep.loss.map(|l| l.to_string()).unwrap_or_default(),
            ];
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::data(path, e.to_string())
}

pub fn concept_label(c: &Concept) -> String {
    match c {
        Concept::Rectangle(RectangleConcept { min_x, min_y, max_x, max_y }) => {
            format!("{min_x} {min_y} {max_x} {max_y}")
        }
        Concept::Bimodal(BimodalConcept { mu1, mu2 }) => format!("{mu1} {mu2}"),
        Concept::Boolean(b) => b.to_string(),
        Concept::Node(n) => format!("node {n}"),
    }
}

fn examples_label(es: &[Example]) -> String {
    es.iter()
        .map(|e| match e {
            Example::Point(p) => p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            Example::Candidate(i) => i.to_string(),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Writes `metric vs. policy` rows for a set of reports.
pub fn write_plot_data(reports: &[&StrategyReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["task", "metric", "policy", "mean", "std", "match_rate", "n"])
        .map_err(|e| csv_err(path, e))?;
    for r in reports {
        let s = &r.summary;
        w.write_record([
            s.task.name().to_string(),
            s.metric.clone(),
            s.policy.name().to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.match_rate.map(|m| m.to_string()).unwrap_or_default(),
            s.n.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
