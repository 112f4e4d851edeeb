//! The four concept families: priors over concepts, example priors
//! `p(e | c)`, losses and candidate example sets.

pub mod bimodal;
pub mod boolean;
pub mod hierarchy;
pub mod rectangle;

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bimodal::{BimodalConcept, MODE_RANGE};
pub use boolean::{boolean_consistent, render_boolean_image, BooleanConcept, Properties};
pub use hierarchy::{
    build_synthetic_hierarchy, build_synthetic_hierarchy_levels, export_embedding_hierarchy, lca,
    load_embedding_hierarchy, Hierarchy,
};
pub use rectangle::{RectangleConcept, RECT_BOUND};

use crate::error::{Error, Result};
use crate::numkernel::{log_softmax_row, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Rectangle,
    Bimodal,
    Boolean,
    Hierarchy,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Rectangle => "rectangle",
            TaskKind::Bimodal => "bimodal",
            TaskKind::Boolean => "boolean",
            TaskKind::Hierarchy => "hierarchy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SquaredError,
    SoftmaxCrossEntropy,
}

/// Which student outputs the episode loss is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossPlacement {
    FinalStep,
    Summed,
}

/// Everything the networks and trainers need to know about a concept family.
#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub concept_dim: usize,
    /// Dimension of one example's feature vector.
    pub example_dim: usize,
    /// Discrete tasks: one feature row per candidate example.
    pub candidates: Option<Arc<Tensor>>,
    pub k_pretrain: usize,
    pub k_teach: usize,
    pub loss: LossKind,
    pub placement: LossPlacement,
    /// Continuous tasks are fed to the networks divided by these; teacher
    /// emissions are multiplied by `example_scale`.
    pub example_scale: f64,
    pub concept_scale: f64,
    /// Divisor for the student's continuous example inputs.
    pub input_scale: f64,
    pub hierarchy: Option<Arc<Hierarchy>>,
}

impl TaskSpec {
    pub fn rectangle() -> Self {
        TaskSpec {
            kind: TaskKind::Rectangle,
            concept_dim: 4,
            example_dim: 2,
            candidates: None,
            k_pretrain: 10,
            k_teach: 2,
            loss: LossKind::SquaredError,
            placement: LossPlacement::FinalStep,
            example_scale: rectangle::RECT_BOUND,
            concept_scale: rectangle::RECT_BOUND,
            input_scale: rectangle::RECT_BOUND,
            hierarchy: None,
        }
    }

    pub fn bimodal() -> Self {
        TaskSpec {
            kind: TaskKind::Bimodal,
            concept_dim: 2,
            example_dim: 1,
            candidates: None,
            k_pretrain: 5,
            k_teach: 2,
            loss: LossKind::SquaredError,
            placement: LossPlacement::Summed,
            example_scale: bimodal::MODE_RANGE / 2.0,
            concept_scale: bimodal::MODE_RANGE / 2.0,
            input_scale: bimodal::MODE_RANGE / 2.0,
            hierarchy: None,
        }
    }

    pub fn boolean() -> Self {
        TaskSpec {
            kind: TaskKind::Boolean,
            concept_dim: boolean::PROPERTY_DIM,
            example_dim: boolean::IMAGE_LEN,
            candidates: Some(Arc::new(boolean::candidate_images())),
            k_pretrain: 5,
            k_teach: 2,
            loss: LossKind::SquaredError,
            placement: LossPlacement::Summed,
            example_scale: 1.0,
            concept_scale: 1.0,
            input_scale: 1.0,
            hierarchy: None,
        }
    }

    pub fn hierarchy(h: Arc<Hierarchy>) -> Self {
        TaskSpec {
            kind: TaskKind::Hierarchy,
            concept_dim: h.node_count(),
            example_dim: h.embedding_dim(),
            candidates: Some(Arc::new(h.features().clone())),
            k_pretrain: 5,
            k_teach: 2,
            loss: LossKind::SoftmaxCrossEntropy,
            placement: LossPlacement::Summed,
            example_scale: 1.0,
            concept_scale: 1.0,
            input_scale: 1.0,
            hierarchy: Some(h),
        }
    }

    pub fn with_placement(mut self, placement: LossPlacement) -> Self {
        self.placement = placement;
        self
    }

    pub fn is_discrete(&self) -> bool {
        self.candidates.is_some()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.as_ref().map_or(0, |c| c.rows())
    }

    pub fn hierarchy_ref(&self) -> Result<&Hierarchy> {
        self.hierarchy
            .as_deref()
            .ok_or_else(|| Error::invalid("task has no hierarchy"))
    }

    /// Feature vector the student consumes for an example.
    pub fn example_features(&self, e: &Example) -> Result<Vec<f64>> {
        match (e, &self.candidates) {
            (Example::Point(v), None) => {
                self.check_dim("example", self.example_dim, v.len())?;
                Ok(v.clone())
            }
            (Example::Candidate(i), Some(c)) if *i < c.rows() => Ok(c.row(*i).to_vec()),
            (Example::Candidate(i), Some(c)) => Err(Error::invalid(format!(
                "candidate {i} out of range ({} candidates)",
                c.rows()
            ))),
            _ => Err(Error::invalid("example kind does not match task")),
        }
    }

    fn check_dim(&self, what: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Dimension {
                what,
                expected,
                actual,
            })
        }
    }

    /// Decodes a concept from its vector encoding.
    pub fn concept_from_vector(&self, v: &[f64]) -> Result<Concept> {
        self.check_dim("concept", self.concept_dim, v.len())?;
        Ok(match self.kind {
            TaskKind::Rectangle => Concept::Rectangle(RectangleConcept::from_slice(v)?),
            TaskKind::Bimodal => Concept::Bimodal(BimodalConcept::from_slice(v)?),
            TaskKind::Boolean => Concept::Boolean(BooleanConcept::from_vector(v)?),
            TaskKind::Hierarchy => {
                let hot: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.5).collect();
                match hot.as_slice() {
                    [i] => Concept::Node(*i),
                    _ => return Err(Error::invalid("hierarchy concept must be one-hot")),
                }
            }
        })
    }
}

/// A concept to teach.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Concept {
    Rectangle(RectangleConcept),
    Bimodal(BimodalConcept),
    Boolean(BooleanConcept),
    /// A node of the task's hierarchy.
    Node(usize),
}

impl Concept {
    /// Native vector encoding (one-hot for hierarchy nodes).
    pub fn to_vector(&self, task: &TaskSpec) -> Vec<f64> {
        match self {
            Concept::Rectangle(r) => r.to_array().to_vec(),
            Concept::Bimodal(b) => b.to_array().to_vec(),
            Concept::Boolean(b) => b.to_vector().to_vec(),
            Concept::Node(i) => {
                let mut v = vec![0.0; task.concept_dim];
                v[*i] = 1.0;
                v
            }
        }
    }

    fn matches(&self, kind: TaskKind) -> bool {
        matches!(
            (self, kind),
            (Concept::Rectangle(_), TaskKind::Rectangle)
                | (Concept::Bimodal(_), TaskKind::Bimodal)
                | (Concept::Boolean(_), TaskKind::Boolean)
                | (Concept::Node(_), TaskKind::Hierarchy)
        )
    }
}

/// An example: a point for continuous tasks, a candidate index otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    Point(Vec<f64>),
    Candidate(usize),
}

impl Example {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            Example::Point(p) => Some(p),
            Example::Candidate(_) => None,
        }
    }

    pub fn candidate(&self) -> Option<usize> {
        match self {
            Example::Candidate(i) => Some(*i),
            Example::Point(_) => None,
        }
    }
}

/// Allowed constrained-property counts for boolean concept sampling.
pub const ALL_PROPERTY_COUNTS: [usize; 3] = [1, 2, 3];

/// Samples from the task's concept prior.
pub fn sample_concept<R: Rng + ?Sized>(task: &TaskSpec, rng: &mut R) -> Concept {
    sample_concept_restricted(task, &ALL_PROPERTY_COUNTS, rng).expect("default counts are valid")
}

/// As [`sample_concept`], but boolean concepts only use the given
/// constrained-property counts. Ignored by other tasks.
pub fn sample_concept_restricted<R: Rng + ?Sized>(
    task: &TaskSpec,
    property_counts: &[usize],
    rng: &mut R,
) -> Result<Concept> {
    Ok(match task.kind {
        TaskKind::Rectangle => Concept::Rectangle(RectangleConcept::sample(rng)),
        TaskKind::Bimodal => Concept::Bimodal(BimodalConcept::sample(rng)),
        TaskKind::Boolean => Concept::Boolean(BooleanConcept::sample(rng, property_counts)?),
        TaskKind::Hierarchy => Concept::Node(rng.random_range(0..task.concept_dim)),
    })
}

/// Candidate indices consistent with a discrete concept.
pub fn consistent_candidates(concept: &Concept, task: &TaskSpec) -> Result<Vec<usize>> {
    match concept {
        Concept::Boolean(b) => Ok(b.consistent_candidates()),
        Concept::Node(n) => {
            let h = task.hierarchy_ref()?;
            if *n >= h.node_count() {
                return Err(Error::invalid(format!("unknown node {n}")));
            }
            Ok(h.consistent_candidates(*n))
        }
        _ => Err(Error::invalid("continuous concept has no candidate set")),
    }
}

/// Draws one example from `p(e | c)`.
pub fn sample_example_prior<R: Rng + ?Sized>(
    concept: &Concept,
    task: &TaskSpec,
    rng: &mut R,
) -> Result<Example> {
    if !concept.matches(task.kind) {
        return Err(Error::invalid("concept does not belong to task"));
    }
    Ok(match concept {
        Concept::Rectangle(r) => Example::Point(r.sample_point(rng).to_vec()),
        Concept::Bimodal(b) => Example::Point(vec![b.sample_example(rng)]),
        Concept::Boolean(_) | Concept::Node(_) => {
            let pool = consistent_candidates(concept, task)?;
            let &idx = pool
                .choose(rng)
                .ok_or_else(|| Error::invalid("concept has no consistent examples"))?;
            Example::Candidate(idx)
        }
    })
}

/// Membership of an example in a concept's support.
pub fn is_consistent(example: &Example, concept: &Concept, task: &TaskSpec) -> Result<bool> {
    Ok(match (concept, example) {
        (Concept::Rectangle(r), Example::Point(p)) if p.len() == 2 => r.contains([p[0], p[1]]),
        // Gaussian mixture: every real number is in the support
        (Concept::Bimodal(_), Example::Point(p)) if p.len() == 1 => p[0].is_finite(),
        (Concept::Boolean(b), Example::Candidate(i)) if *i < boolean::CANDIDATE_COUNT => {
            boolean_consistent(&Properties::from_index(*i), b)
        }
        (Concept::Node(n), Example::Candidate(i)) => {
            let h = task.hierarchy_ref()?;
            if *i >= h.candidate_count() {
                return Err(Error::invalid(format!("candidate {i} out of range")));
            }
            h.is_ancestor(*n, h.candidate(*i).0)
        }
        _ => return Err(Error::invalid("example does not match concept")),
    })
}

/// Task loss between a concept and a student output. Squared L2 for the
/// continuous-valued encodings, softmax cross-entropy (output = logits)
/// for hierarchy nodes.
pub fn loss(concept: &Concept, guess: &[f64], task: &TaskSpec) -> Result<f64> {
    if guess.len() != task.concept_dim {
        return Err(Error::Dimension {
            what: "guess",
            expected: task.concept_dim,
            actual: guess.len(),
        });
    }
    let target = concept.to_vector(task);
    Ok(match task.loss {
        LossKind::SquaredError => target
            .iter()
            .zip(guess)
            .map(|(c, g)| (c - g) * (c - g))
            .sum(),
        LossKind::SoftmaxCrossEntropy => {
            let lsm = log_softmax_row(guess);
            -target.iter().zip(&lsm).map(|(t, l)| t * l).sum::<f64>()
        }
    })
}
