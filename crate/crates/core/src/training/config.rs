use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::DEFAULT_HIDDEN;
use crate::numkernel::AdamConfig;
use crate::tasks::{
    build_synthetic_hierarchy_levels, load_embedding_hierarchy, LossPlacement, TaskKind, TaskSpec,
};

/// Where hierarchy concepts come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum HierarchySource {
    /// Generated tree; `branching[i]` children per node at level `i`.
    Synthetic {
        branching: Vec<usize>,
        embedding_dim: usize,
        seed: u64,
    },
    /// A `hier-v1` manifest on disk.
    Manifest { path: PathBuf },
}

impl Default for HierarchySource {
    fn default() -> Self {
        // root + 3 + 12 = 16 concepts
        HierarchySource::Synthetic {
            branching: vec![3, 4],
            embedding_dim: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// Overrides the task's default loss placement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<LossPlacement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<HierarchySource>,
}

impl TaskConfig {
    pub fn new(kind: TaskKind) -> Self {
        TaskConfig {
            kind,
            placement: None,
            hierarchy: None,
        }
    }

    pub fn build(&self) -> Result<TaskSpec> {
        let spec = match self.kind {
            TaskKind::Rectangle => TaskSpec::rectangle(),
            TaskKind::Bimodal => TaskSpec::bimodal(),
            TaskKind::Boolean => TaskSpec::boolean(),
            TaskKind::Hierarchy => {
                let h = match self.hierarchy.clone().unwrap_or_default() {
                    HierarchySource::Synthetic {
                        branching,
                        embedding_dim,
                        seed,
                    } => build_synthetic_hierarchy_levels(
                        &branching,
                        embedding_dim,
                        &mut ChaCha8Rng::seed_from_u64(seed),
                    )?,
                    HierarchySource::Manifest { path } => load_embedding_hierarchy(&path)?,
                };
                TaskSpec::hierarchy(Arc::new(h))
            }
        };
        Ok(match self.placement {
            Some(p) => spec.with_placement(p),
            None => spec,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule { start: 1.0, end: 0.5 }
    }
}

/// Training hyperparameters. Every field has a default, so a config file
/// only needs the task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: TaskConfig,
    pub hidden: usize,
    pub batch_size: usize,
    pub student_iterations: usize,
    pub teacher_iterations: usize,
    pub joint_iterations: usize,
    pub adam: AdamConfig,
    pub temperature: TemperatureSchedule,
    pub clip_norm: f64,
    /// Allowed property counts per stage (boolean task only). `None` uses
    /// the task default: 3, then 2, then 1 for boolean concepts.
    pub curriculum: Option<Vec<Vec<usize>>>,
    pub extra_br_rounds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: TaskConfig::new(TaskKind::Rectangle),
            hidden: DEFAULT_HIDDEN,
            batch_size: 128,
            student_iterations: 5000,
            teacher_iterations: 5000,
            joint_iterations: 10000,
            adam: AdamConfig::default(),
            temperature: TemperatureSchedule::default(),
            clip_norm: 5.0,
            curriculum: None,
            extra_br_rounds: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_task(kind: TaskKind) -> Self {
        TrainConfig {
            task: TaskConfig::new(kind),
            ..TrainConfig::default()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("student_iterations", self.student_iterations),
            ("teacher_iterations", self.teacher_iterations),
            ("joint_iterations", self.joint_iterations),
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        let t = self.temperature;
        if !(t.start > 0.0 && t.end > 0.0) {
            return Err(Error::invalid("temperatures must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        if let Some(stages) = &self.curriculum {
            if self.task.kind != TaskKind::Boolean {
                return Err(Error::invalid("a curriculum only applies to the boolean task"));
            }
            if stages.is_empty() || stages.iter().any(|s| s.is_empty() || s.iter().any(|&k| !(1..=3).contains(&k))) {
                return Err(Error::invalid("curriculum stages must list counts in 1..=3"));
            }
        }
        Ok(())
    }

    /// Curriculum stages in effect, or `None` for unstaged training.
    pub fn stages(&self) -> Option<Vec<Vec<usize>>> {
        match (&self.curriculum, self.task.kind) {
            (Some(s), _) => Some(s.clone()),
            (None, TaskKind::Boolean) => Some(vec![vec![3], vec![2], vec![1]]),
            (None, _) => None,
        }
    }
}
