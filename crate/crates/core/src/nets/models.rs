use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::{GruCell, Linear};
use crate::error::{Error, Result};
use crate::numkernel::{
    load_checkpoint, save_checkpoint, Bindings, ComputeGraph, NodeId, ParamStore, Tensor,
};
use crate::tasks::{TaskKind, TaskSpec};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentArch {
    pub task: TaskKind,
    pub example_dim: usize,
    pub concept_dim: usize,
    pub hidden: usize,
    pub example_scale: f64,
    pub concept_scale: f64,
}

impl StudentArch {
    pub fn for_task(task: &TaskSpec, hidden: usize) -> Self {
        StudentArch {
            task: task.kind,
            example_dim: task.example_dim,
            concept_dim: task.concept_dim,
            hidden,
            example_scale: task.input_scale,
            concept_scale: task.concept_scale,
        }
    }
}

/// Recurrent student: consumes one example per step and emits a concept guess.
#[derive(Clone, Debug)]
pub struct StudentNet {
    pub arch: StudentArch,
    pub params: ParamStore,
}

/// What the student reads at one step.
#[derive(Clone, Copy, Debug)]
pub enum StudentInput {
    /// Raw example features (`rows x example_dim`, unscaled).
    Features(NodeId),
    /// Selection weights over candidates (`rows x N`) together with the
    /// projected candidate matrix from [`StudentNet::project_candidates`].
    CandidateWeights { weights: NodeId, projected: NodeId },
}

impl StudentNet {
    const PREFIX: &'static str = "student";

    fn cell(&self) -> GruCell {
        GruCell::new(
            &format!("{}.gru", Self::PREFIX),
            self.arch.example_dim,
            self.arch.hidden,
        )
    }

    fn head(&self) -> Linear {
        Linear::new(
            &format!("{}.head", Self::PREFIX),
            self.arch.hidden,
            self.arch.concept_dim,
        )
    }

    pub fn new<R: Rng + ?Sized>(task: &TaskSpec, hidden: usize, rng: &mut R) -> Self {
        let mut s = StudentNet {
            arch: StudentArch::for_task(task, hidden),
            params: ParamStore::new(),
        };
        let (cell, head) = (s.cell(), s.head());
        cell.init(&mut s.params, rng);
        head.init(&mut s.params, rng);
        s
    }

    /// All parameters zero.
    pub fn zeros(task: &TaskSpec, hidden: usize) -> Self {
        let mut s = StudentNet {
            arch: StudentArch::for_task(task, hidden),
            params: ParamStore::new(),
        };
        let (cell, head) = (s.cell(), s.head());
        cell.init_zeros(&mut s.params);
        head.init_zeros(&mut s.params);
        s
    }

    pub fn hidden(&self) -> usize {
        self.arch.hidden
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.arch.hidden]
    }

    /// `candidates @ w_in`, shared by every step of a graph.
    pub fn project_candidates(
        &self,
        g: &mut ComputeGraph,
        candidates: NodeId,
        trainable: bool,
    ) -> Result<NodeId> {
        self.cell().project(g, candidates, trainable)
    }

    /// Adds one student step to `g`; returns `(state', guess)`.
    pub fn build_step(
        &self,
        g: &mut ComputeGraph,
        state: NodeId,
        input: StudentInput,
        trainable: bool,
    ) -> Result<(NodeId, NodeId)> {
        let cell = self.cell();
        let projected = match input {
            StudentInput::Features(x) => {
                let x = g.scale(x, 1.0 / self.arch.example_scale)?;
                cell.project(g, x, trainable)?
            }
            StudentInput::CandidateWeights { weights, projected } => g.matmul(weights, projected)?,
        };
        let next = cell.step(g, projected, state, trainable)?;
        let out = self.head().apply(g, next, trainable)?;
        let guess = g.scale(out, self.arch.concept_scale)?;
        Ok((next, guess))
    }

    /// One numeric step on a single example's feature vector.
    pub fn step(&self, state: &[f64], features: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("student state", self.arch.hidden, state.len())?;
        check_len("example", self.arch.example_dim, features.len())?;
        let mut g = ComputeGraph::new();
        let h = g.constant(Tensor::row_vector(state))?;
        let x = g.constant(Tensor::row_vector(features))?;
        let (next, guess) = self.build_step(&mut g, h, StudentInput::Features(x), false)?;
        let mut b = Bindings::new();
        b.bind_all(self.params.iter());
        let ev = g.forward(&b)?;
        Ok((ev.get(next).data().to_vec(), ev.get(guess).data().to_vec()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({ "role": "student", "arch": self.arch });
        save_checkpoint(&self.params, &meta, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = load_checkpoint(path)?;
        if meta.get("role").and_then(|r| r.as_str()) != Some("student") {
            return Err(Error::data(path, "checkpoint is not a student"));
        }
        let arch: StudentArch = serde_json::from_value(meta["arch"].clone())
            .map_err(|e| Error::data(path, format!("bad student arch: {e}")))?;
        let mut reference = StudentNet {
            arch: arch.clone(),
            params: ParamStore::new(),
        };
        let (cell, head) = (reference.cell(), reference.head());
        cell.init_zeros(&mut reference.params);
        head.init_zeros(&mut reference.params);
        check_params(path, &reference.params, &params)?;
        Ok(StudentNet { arch, params })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Emission {
    /// Example vector, emitted in task units.
    Continuous { example_dim: usize, example_scale: f64 },
    /// Logits over a fixed candidate set.
    Candidates { count: usize },
}

impl Emission {
    pub fn width(&self) -> usize {
        match *self {
            Emission::Continuous { example_dim, .. } => example_dim,
            Emission::Candidates { count } => count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherArch {
    pub task: TaskKind,
    pub concept_dim: usize,
    pub hidden: usize,
    pub concept_scale: f64,
    pub emission: Emission,
}

impl TeacherArch {
    pub fn for_task(task: &TaskSpec, hidden: usize) -> Self {
        let emission = match task.is_discrete() {
            true => Emission::Candidates {
                count: task.candidate_count(),
            },
            false => Emission::Continuous {
                example_dim: task.example_dim,
                example_scale: task.example_scale,
            },
        };
        TeacherArch {
            task: task.kind,
            concept_dim: task.concept_dim,
            hidden,
            concept_scale: task.concept_scale,
            emission,
        }
    }
}

/// Recurrent teacher: reads the target concept and the student's current
/// guess, emits the next example (or candidate logits).
#[derive(Clone, Debug)]
pub struct TeacherNet {
    pub arch: TeacherArch,
    pub params: ParamStore,
}

impl TeacherNet {
    const PREFIX: &'static str = "teacher";

    fn cell(&self) -> GruCell {
        GruCell::new(
            &format!("{}.gru", Self::PREFIX),
            2 * self.arch.concept_dim,
            self.arch.hidden,
        )
    }

    fn head(&self) -> Linear {
        Linear::new(
            &format!("{}.head", Self::PREFIX),
            self.arch.hidden,
            self.arch.emission.width(),
        )
    }

    pub fn new<R: Rng + ?Sized>(task: &TaskSpec, hidden: usize, rng: &mut R) -> Self {
        let mut t = TeacherNet {
            arch: TeacherArch::for_task(task, hidden),
            params: ParamStore::new(),
        };
        let (cell, head) = (t.cell(), t.head());
        cell.init(&mut t.params, rng);
        head.init(&mut t.params, rng);
        t
    }

    pub fn zeros(task: &TaskSpec, hidden: usize) -> Self {
        let mut t = TeacherNet {
            arch: TeacherArch::for_task(task, hidden),
            params: ParamStore::new(),
        };
        let (cell, head) = (t.cell(), t.head());
        cell.init_zeros(&mut t.params);
        head.init_zeros(&mut t.params);
        t
    }

    pub fn hidden(&self) -> usize {
        self.arch.hidden
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.arch.hidden]
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.arch.emission, Emission::Candidates { .. })
    }

    /// Adds one teacher step; `concept` and `guess` are in native concept
    /// encoding (`rows x concept_dim`). Returns `(state', emission)`.
    pub fn build_step(
        &self,
        g: &mut ComputeGraph,
        state: NodeId,
        concept: NodeId,
        guess: NodeId,
        trainable: bool,
    ) -> Result<(NodeId, NodeId)> {
        let s = 1.0 / self.arch.concept_scale;
        let c = g.scale(concept, s)?;
        let q = g.scale(guess, s)?;
        let x = g.concat(c, q)?;
        let cell = self.cell();
        let projected = cell.project(g, x, trainable)?;
        let next = cell.step(g, projected, state, trainable)?;
        let out = self.head().apply(g, next, trainable)?;
        let emission = match self.arch.emission {
            Emission::Continuous { example_scale, .. } => g.scale(out, example_scale)?,
            Emission::Candidates { .. } => out,
        };
        Ok((next, emission))
    }

    /// One numeric step: emits an example vector or candidate logits.
    pub fn step(&self, state: &[f64], concept: &[f64], guess: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("teacher state", self.arch.hidden, state.len())?;
        check_len("concept", self.arch.concept_dim, concept.len())?;
        check_len("guess", self.arch.concept_dim, guess.len())?;
        let mut g = ComputeGraph::new();
        let h = g.constant(Tensor::row_vector(state))?;
        let c = g.constant(Tensor::row_vector(concept))?;
        let q = g.constant(Tensor::row_vector(guess))?;
        let (next, em) = self.build_step(&mut g, h, c, q, false)?;
        let mut b = Bindings::new();
        b.bind_all(self.params.iter());
        let ev = g.forward(&b)?;
        Ok((ev.get(next).data().to_vec(), ev.get(em).data().to_vec()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({ "role": "teacher", "arch": self.arch });
        save_checkpoint(&self.params, &meta, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = load_checkpoint(path)?;
        if meta.get("role").and_then(|r| r.as_str()) != Some("teacher") {
            return Err(Error::data(path, "checkpoint is not a teacher"));
        }
        let arch: TeacherArch = serde_json::from_value(meta["arch"].clone())
            .map_err(|e| Error::data(path, format!("bad teacher arch: {e}")))?;
        let mut reference = TeacherNet {
            arch: arch.clone(),
            params: ParamStore::new(),
        };
        let (cell, head) = (reference.cell(), reference.head());
        cell.init_zeros(&mut reference.params);
        head.init_zeros(&mut reference.params);
        check_params(path, &reference.params, &params)?;
        Ok(TeacherNet { arch, params })
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
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

fn check_params(path: &Path, reference: &ParamStore, got: &ParamStore) -> Result<()> {
    for (name, t) in reference.iter() {
        match got.get(name) {
            Some(g) if g.shape() == t.shape() => {}
            Some(g) => {
                return Err(Error::data(
                    path,
                    format!("`{name}` has shape {:?}, expected {:?}", g.shape(), t.shape()),
                ))
            }
            None => return Err(Error::data(path, format!("missing parameter `{name}`"))),
        }
    }
    if got.len() != reference.len() {
        return Err(Error::data(path, "unexpected extra parameters"));
    }
    Ok(())
}
