//! Unrolled teaching episodes, batched over concepts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gumbel::sample_gumbel;
use super::models::{StudentInput, StudentNet, TeacherNet};
use crate::error::{Error, Result};
use crate::numkernel::{argmax, Bindings, ComputeGraph, Evaluation, NodeId, ParamStore, Tensor};
use crate::tasks::{self, Concept, Example, LossKind, LossPlacement, TaskSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    /// Soft Gumbel samples; the student reads candidate mixtures.
    Train,
    /// Hard (straight-through) selections; the student reads real candidates.
    Eval,
}

#[derive(Clone, Copy, Debug)]
pub struct TeachOptions {
    pub mode: RolloutMode,
    pub temperature: f64,
    pub train_teacher: bool,
    pub train_student: bool,
}

impl TeachOptions {
    pub fn eval() -> Self {
        TeachOptions {
            mode: RolloutMode::Eval,
            temperature: 0.5,
            train_teacher: false,
            train_student: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub example: Example,
    /// Selection weights over candidates (discrete tasks).
    pub weights: Option<Vec<f64>>,
    pub guess: Vec<f64>,
}

/// One teaching episode: `(example, guess)` per step plus the episode loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub concept: Concept,
    pub steps: Vec<TraceStep>,
    pub loss: f64,
}

impl EpisodeTrace {
    pub fn final_guess(&self) -> &[f64] {
        &self.steps.last().expect("episodes have at least one step").guess
    }

    pub fn examples(&self) -> Vec<Example> {
        self.steps.iter().map(|s| s.example.clone()).collect()
    }
}

/// A built episode graph together with the input tensors it needs.
pub struct Rollout {
    pub graph: ComputeGraph,
    inputs: Vec<(String, Tensor)>,
    concepts: Vec<Concept>,
    /// Per step: emitted example (continuous) or selection weights (discrete).
    pub examples: Vec<NodeId>,
    pub guesses: Vec<NodeId>,
    /// Batch-mean episode loss.
    pub loss: NodeId,
    discrete: bool,
}

impl Rollout {
    pub fn batch(&self) -> usize {
        self.concepts.len()
    }

    pub fn bindings<'a>(&'a self, stores: &[&'a ParamStore]) -> Bindings<'a> {
        let mut b = Bindings::new();
        for s in stores {
            b.bind_all(s.iter());
        }
        for (name, t) in &self.inputs {
            b.bind(name, t);
        }
        b
    }

    pub fn run(&self, stores: &[&ParamStore]) -> Result<Evaluation> {
        self.graph.forward(&self.bindings(stores))
    }

    pub fn traces(&self, eval: &Evaluation, task: &TaskSpec) -> Result<Vec<EpisodeTrace>> {
        let mut out = Vec::with_capacity(self.batch());
        for (i, concept) in self.concepts.iter().enumerate() {
            let mut steps = Vec::with_capacity(self.examples.len());
            for (&ex, &gs) in self.examples.iter().zip(&self.guesses) {
                let row = eval.get(ex).row(i).to_vec();
                let guess = eval.get(gs).row(i).to_vec();
                let step = if self.discrete {
                    TraceStep {
                        example: Example::Candidate(argmax(&row)),
                        weights: Some(row),
                        guess,
                    }
                } else {
                    TraceStep {
                        example: Example::Point(row),
                        weights: None,
                        guess,
                    }
                };
                steps.push(step);
            }
            let loss = episode_loss(concept, &steps, task)?;
            out.push(EpisodeTrace {
                concept: *concept,
                steps,
                loss,
            });
        }
        Ok(out)
    }
}

fn episode_loss(concept: &Concept, steps: &[TraceStep], task: &TaskSpec) -> Result<f64> {
    match task.placement {
        LossPlacement::FinalStep => tasks::loss(concept, &steps.last().expect("k >= 1").guess, task),
        LossPlacement::Summed => steps
            .iter()
            .map(|s| tasks::loss(concept, &s.guess, task))
            .sum(),
    }
}

fn concept_matrix(concepts: &[Concept], task: &TaskSpec) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = concepts.iter().map(|c| c.to_vector(task)).collect();
    Tensor::from_rows(&rows)
}

struct EpisodeLoss {
    terms: Vec<NodeId>,
}

impl EpisodeLoss {
    fn add_step(
        &mut self,
        g: &mut ComputeGraph,
        task: &TaskSpec,
        guess: NodeId,
        target: NodeId,
    ) -> Result<()> {
        let term = match task.loss {
            LossKind::SquaredError => g.squared_error(guess, target)?,
            LossKind::SoftmaxCrossEntropy => g.softmax_cross_entropy(guess, target)?,
        };
        self.terms.push(term);
        Ok(())
    }

    fn finish(self, g: &mut ComputeGraph, task: &TaskSpec, batch: usize) -> Result<NodeId> {
        let total = match task.placement {
            LossPlacement::FinalStep => *self.terms.last().expect("k >= 1"),
            LossPlacement::Summed => {
                let mut acc = self.terms[0];
                for &t in &self.terms[1..] {
                    acc = g.add(acc, t)?;
                }
                acc
            }
        };
        g.scale(total, 1.0 / batch as f64)
    }
}

/// Guess in native concept encoding as the teacher reads it: raw values for
/// regression outputs, a distribution over nodes for logit outputs.
fn guess_feedback(g: &mut ComputeGraph, task: &TaskSpec, guess: NodeId) -> NodeId {
    match task.loss {
        LossKind::SquaredError => guess,
        LossKind::SoftmaxCrossEntropy => g.softmax(guess),
    }
}

fn check_setup(task: &TaskSpec, concepts: &[Concept], k: usize, student: &StudentNet) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("episodes need at least one step"));
    }
    if concepts.is_empty() {
        return Err(Error::invalid("empty concept batch"));
    }
    if student.arch.example_dim != task.example_dim || student.arch.concept_dim != task.concept_dim
    {
        return Err(Error::Dimension {
            what: "student vs task",
            expected: task.example_dim,
            actual: student.arch.example_dim,
        });
    }
    Ok(())
}

/// Teacher-driven episodes: `e_k = T(c, guess_{k-1})`, `guess_k = S(e_k)`,
/// starting from a zero guess.
pub fn build_teach_rollout<R: Rng + ?Sized>(
    task: &TaskSpec,
    teacher: &TeacherNet,
    student: &StudentNet,
    concepts: &[Concept],
    k: usize,
    opts: TeachOptions,
    rng: &mut R,
) -> Result<Rollout> {
    check_setup(task, concepts, k, student)?;
    if teacher.arch.concept_dim != task.concept_dim
        || teacher.arch.emission.width()
            != if task.is_discrete() {
                task.candidate_count()
            } else {
                task.example_dim
            }
    {
        return Err(Error::Dimension {
            what: "teacher vs task",
            expected: task.concept_dim,
            actual: teacher.arch.concept_dim,
        });
    }
    if task.is_discrete() && !(opts.temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let batch = concepts.len();
    let mut g = ComputeGraph::new();
    let mut inputs = Vec::new();

    let target = g.input("in.concept", [batch, task.concept_dim])?;
    inputs.push(("in.concept".to_string(), concept_matrix(concepts, task)?));
    let projected = match &task.candidates {
        Some(c) => {
            let cand = g.constant((**c).clone())?;
            Some(student.project_candidates(&mut g, cand, opts.train_student)?)
        }
        None => None,
    };
    let mut hs = g.constant(Tensor::zeros(&[batch, student.hidden()]))?;
    let mut ht = g.constant(Tensor::zeros(&[batch, teacher.hidden()]))?;
    let mut feedback = g.constant(Tensor::zeros(&[batch, task.concept_dim]))?;
    let mut loss = EpisodeLoss { terms: Vec::new() };
    let (mut examples, mut guesses) = (Vec::new(), Vec::new());

    for step in 0..k {
        let (next_t, emission) =
            teacher.build_step(&mut g, ht, target, feedback, opts.train_teacher)?;
        ht = next_t;
        let (example, input) = match projected {
            Some(projected) => {
                let n = task.candidate_count();
                let name = format!("in.noise.{step}");
                let noise_node = g.input(&name, [batch, n])?;
                let noise: Vec<f64> = (0..batch * n).map(|_| sample_gumbel(rng)).collect();
                inputs.push((name, Tensor::new(vec![batch, n], noise)?));
                let perturbed = g.add(emission, noise_node)?;
                let tempered = g.scale(perturbed, 1.0 / opts.temperature)?;
                let soft = g.softmax(tempered);
                let weights = match opts.mode {
                    RolloutMode::Train => soft,
                    RolloutMode::Eval => g.straight_through_one_hot(soft),
                };
                (weights, StudentInput::CandidateWeights { weights, projected })
            }
            None => (emission, StudentInput::Features(emission)),
        };
        let (next_s, guess) = student.build_step(&mut g, hs, input, opts.train_student)?;
        hs = next_s;
        loss.add_step(&mut g, task, guess, target)?;
        feedback = guess_feedback(&mut g, task, guess);
        examples.push(example);
        guesses.push(guess);
    }
    let loss = loss.finish(&mut g, task, batch)?;
    Ok(Rollout {
        graph: g,
        inputs,
        concepts: concepts.to_vec(),
        examples,
        guesses,
        loss,
        discrete: task.is_discrete(),
    })
}

/// Episodes whose examples come from `p(e | c)`; no teacher involved.
pub fn build_prior_rollout<R: Rng + ?Sized>(
    task: &TaskSpec,
    student: &StudentNet,
    concepts: &[Concept],
    k: usize,
    train_student: bool,
    rng: &mut R,
) -> Result<Rollout> {
    check_setup(task, concepts, k, student)?;
    let batch = concepts.len();
    let mut g = ComputeGraph::new();
    let mut inputs = Vec::new();
    let target = g.input("in.concept", [batch, task.concept_dim])?;
    inputs.push(("in.concept".to_string(), concept_matrix(concepts, task)?));
    let projected = match &task.candidates {
        Some(c) => {
            let cand = g.constant((**c).clone())?;
            Some(student.project_candidates(&mut g, cand, train_student)?)
        }
        None => None,
    };
    let mut hs = g.constant(Tensor::zeros(&[batch, student.hidden()]))?;
    let mut loss = EpisodeLoss { terms: Vec::new() };
    let (mut examples, mut guesses) = (Vec::new(), Vec::new());
    let width = if task.is_discrete() {
        task.candidate_count()
    } else {
        task.example_dim
    };
    for step in 0..k {
        let mut data = vec![0.0; batch * width];
        for (i, c) in concepts.iter().enumerate() {
            match tasks::sample_example_prior(c, task, rng)? {
                Example::Point(p) => data[i * width..(i + 1) * width].copy_from_slice(&p),
                Example::Candidate(j) => data[i * width + j] = 1.0,
            }
        }
        let name = format!("in.example.{step}");
        let node = g.input(&name, [batch, width])?;
        inputs.push((name, Tensor::new(vec![batch, width], data)?));
        let input = match projected {
            Some(projected) => StudentInput::CandidateWeights {
                weights: node,
                projected,
            },
            None => StudentInput::Features(node),
        };
        let (next, guess) = student.build_step(&mut g, hs, input, train_student)?;
        hs = next;
        loss.add_step(&mut g, task, guess, target)?;
        examples.push(node);
        guesses.push(guess);
    }
    let loss = loss.finish(&mut g, task, batch)?;
    Ok(Rollout {
        graph: g,
        inputs,
        concepts: concepts.to_vec(),
        examples,
        guesses,
        loss,
        discrete: task.is_discrete(),
    })
}

/// A single teacher-driven episode.
pub fn rollout_teach<R: Rng + ?Sized>(
    task: &TaskSpec,
    teacher: &TeacherNet,
    student: &StudentNet,
    concept: &Concept,
    k: usize,
    mode: RolloutMode,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let opts = TeachOptions {
        mode,
        ..TeachOptions::eval()
    };
    let r = build_teach_rollout(task, teacher, student, std::slice::from_ref(concept), k, opts, rng)?;
    let ev = r.run(&[&teacher.params, &student.params])?;
    Ok(r.traces(&ev, task)?.remove(0))
}

/// A single episode of prior-sampled examples.
pub fn rollout_prior<R: Rng + ?Sized>(
    task: &TaskSpec,
    student: &StudentNet,
    concept: &Concept,
    k: usize,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let r = build_prior_rollout(task, student, std::slice::from_ref(concept), k, false, rng)?;
    let ev = r.run(&[&student.params])?;
    Ok(r.traces(&ev, task)?.remove(0))
}
