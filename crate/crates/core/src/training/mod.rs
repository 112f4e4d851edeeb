//! Best-response and joint optimization of the teacher/student pair.

mod config;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{HierarchySource, TaskConfig, TemperatureSchedule, TrainConfig};

use crate::error::{Error, Result};
use crate::nets::{
    annealed_temperature, build_prior_rollout, build_teach_rollout, Rollout, RolloutMode,
    StudentNet, TeachOptions, TeacherNet,
};
use crate::numkernel::{clip_global_norm, Gradients, ParamStore};
use crate::tasks::{self, Concept, TaskKind, TaskSpec, ALL_PROPERTY_COUNTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    Joint,
    BestResponse,
}

impl TrainingMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::Joint => "joint",
            TrainingMode::BestResponse => "best-response",
        }
    }
}

/// Per-iteration batch losses of one training phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistory {
    pub phase: String,
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedPair {
    pub mode: TrainingMode,
    pub student: StudentNet,
    pub teacher: TeacherNet,
    pub history: Vec<PhaseHistory>,
}

impl TrainedPair {
    /// Writes `student.json`, `teacher.json` (plus their `.bin` data) and
    /// `history.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.student.save(&dir.join("student.json"))?;
        self.teacher.save(&dir.join("teacher.json"))?;
        write_history(&self.history, &dir.join("history.csv"))
    }

    pub fn load(dir: &Path, mode: TrainingMode) -> Result<Self> {
        Ok(TrainedPair {
            mode,
            student: StudentNet::load(&dir.join("student.json"))?,
            teacher: TeacherNet::load(&dir.join("teacher.json"))?,
            history: Vec::new(),
        })
    }
}

pub fn write_history(history: &[PhaseHistory], path: &Path) -> Result<()> {
    let mut out = String::from("phase,iteration,loss\n");
    for h in history {
        for (i, l) in h.losses.iter().enumerate() {
            out.push_str(&format!("{},{i},{l}\n", h.phase));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn sample_batch<R: Rng + ?Sized>(
    task: &TaskSpec,
    counts: &[usize],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Concept>> {
    (0..n)
        .map(|_| tasks::sample_concept_restricted(task, counts, rng))
        .collect()
}

/// Splits `total` iterations into `parts` near-equal shares.
fn shares(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

/// Concept-count restrictions per stage, with their iteration budgets.
fn staged(cfg: &TrainConfig, total: usize) -> Vec<(Vec<usize>, usize)> {
    match cfg.stages() {
        Some(stages) => {
            let n = stages.len();
            stages.into_iter().zip(shares(total, n)).collect()
        }
        None => vec![(ALL_PROPERTY_COUNTS.to_vec(), total)],
    }
}

/// Runs the rollout, checks the loss and returns it with all gradients.
fn loss_and_grads(r: &Rollout, stores: &[&ParamStore], phase: &str, iteration: usize) -> Result<(f64, Gradients)> {
    let ev = r.run(stores)?;
    let loss = ev.get(r.loss).item();
    if !loss.is_finite() {
        return Err(Error::Diverged {
            phase: phase.to_string(),
            iteration,
        });
    }
    Ok((loss, r.graph.backward(&ev, r.loss)?))
}

fn apply(store: &mut ParamStore, grads: &mut Gradients, cfg: &TrainConfig) -> Result<()> {
    let mut own = store.take_own(grads);
    clip_global_norm(&mut own, cfg.clip_norm);
    store.adam_step(&own, &cfg.adam)
}

/// Fits the student to prior-sampled episodes of `K_pretrain` examples.
pub fn fit_student_prior<R: Rng + ?Sized>(
    student: &mut StudentNet,
    task: &TaskSpec,
    cfg: &TrainConfig,
    iterations: usize,
    counts: &[usize],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let concepts = sample_batch(task, counts, cfg.batch_size, rng)?;
        let r = build_prior_rollout(task, student, &concepts, task.k_pretrain, true, rng)?;
        let (loss, mut grads) = loss_and_grads(&r, &[&student.params], "student", it)?;
        apply(&mut student.params, &mut grads, cfg)?;
        losses.push(loss);
    }
    Ok(losses)
}

/// Fits the teacher against a frozen student over `K_teach` steps.
pub fn fit_teacher<R: Rng + ?Sized>(
    teacher: &mut TeacherNet,
    student: &StudentNet,
    task: &TaskSpec,
    cfg: &TrainConfig,
    iterations: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let concepts = sample_batch(task, &ALL_PROPERTY_COUNTS, cfg.batch_size, rng)?;
        let opts = TeachOptions {
            mode: RolloutMode::Train,
            temperature: annealed_temperature(cfg.temperature.start, cfg.temperature.end, it, iterations),
            train_teacher: true,
            train_student: false,
        };
        let r = build_teach_rollout(task, teacher, student, &concepts, task.k_teach, opts, rng)?;
        let (loss, mut grads) =
            loss_and_grads(&r, &[&teacher.params, &student.params], "teacher", it)?;
        apply(&mut teacher.params, &mut grads, cfg)?;
        losses.push(loss);
    }
    Ok(losses)
}

/// Fits the student to a frozen teacher's (hard-selected) examples.
pub fn fit_student_to_teacher<R: Rng + ?Sized>(
    student: &mut StudentNet,
    teacher: &TeacherNet,
    task: &TaskSpec,
    cfg: &TrainConfig,
    iterations: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let concepts = sample_batch(task, &ALL_PROPERTY_COUNTS, cfg.batch_size, rng)?;
        let opts = TeachOptions {
            mode: RolloutMode::Eval,
            temperature: cfg.temperature.end,
            train_teacher: false,
            train_student: true,
        };
        let r = build_teach_rollout(task, teacher, student, &concepts, task.k_teach, opts, rng)?;
        let (loss, mut grads) =
            loss_and_grads(&r, &[&teacher.params, &student.params], "student-br", it)?;
        apply(&mut student.params, &mut grads, cfg)?;
        losses.push(loss);
    }
    Ok(losses)
}

/// Pretrains a fresh student on prior examples, staged by the curriculum
/// when the config has one.
pub fn train_student_on_prior<R: Rng + ?Sized>(
    cfg: &TrainConfig,
    task: &TaskSpec,
    rng: &mut R,
) -> Result<(StudentNet, Vec<f64>)> {
    cfg.validate()?;
    let mut student = StudentNet::new(task, cfg.hidden, rng);
    let mut losses = Vec::with_capacity(cfg.student_iterations);
    for (counts, iters) in staged(cfg, cfg.student_iterations) {
        losses.extend(fit_student_prior(&mut student, task, cfg, iters, &counts, rng)?);
    }
    Ok((student, losses))
}

/// Curriculum pretraining: boolean concepts restricted per stage.
pub fn run_curriculum<R: Rng + ?Sized>(
    cfg: &TrainConfig,
    task: &TaskSpec,
    rng: &mut R,
) -> Result<(StudentNet, Vec<f64>)> {
    if task.kind != TaskKind::Boolean {
        return Err(Error::invalid("curriculum training needs the boolean task"));
    }
    train_student_on_prior(cfg, task, rng)
}

/// Trains a fresh teacher against `student`, which is left untouched.
pub fn train_teacher_best_response<R: Rng + ?Sized>(
    student: &StudentNet,
    cfg: &TrainConfig,
    task: &TaskSpec,
    rng: &mut R,
) -> Result<(TeacherNet, Vec<f64>)> {
    cfg.validate()?;
    let mut teacher = TeacherNet::new(task, cfg.hidden, rng);
    let losses = fit_teacher(&mut teacher, student, task, cfg, cfg.teacher_iterations, rng)?;
    Ok((teacher, losses))
}

/// Student pretraining, teacher best response, then any extra rounds of
/// alternating best responses.
pub fn train_best_response<R: Rng + ?Sized>(
    cfg: &TrainConfig,
    task: &TaskSpec,
    rng: &mut R,
) -> Result<TrainedPair> {
    let (mut student, s_losses) = train_student_on_prior(cfg, task, rng)?;
    let (mut teacher, t_losses) = train_teacher_best_response(&student, cfg, task, rng)?;
    let mut history = vec![
        PhaseHistory {
            phase: "student".into(),
            losses: s_losses,
        },
        PhaseHistory {
            phase: "teacher".into(),
            losses: t_losses,
        },
    ];
    for round in 1..=cfg.extra_br_rounds {
        let s = fit_student_to_teacher(&mut student, &teacher, task, cfg, cfg.student_iterations, rng)?;
        let t = fit_teacher(&mut teacher, &student, task, cfg, cfg.teacher_iterations, rng)?;
        history.push(PhaseHistory {
            phase: format!("student.round{round}"),
            losses: s,
        });
        history.push(PhaseHistory {
            phase: format!("teacher.round{round}"),
            losses: t,
        });
    }
    Ok(TrainedPair {
        mode: TrainingMode::BestResponse,
        student,
        teacher,
        history,
    })
}

/// Simultaneous updates of both networks on teacher-driven episodes.
pub fn train_joint<R: Rng + ?Sized>(cfg: &TrainConfig, task: &TaskSpec, rng: &mut R) -> Result<TrainedPair> {
    cfg.validate()?;
    let mut student = StudentNet::new(task, cfg.hidden, rng);
    let mut teacher = TeacherNet::new(task, cfg.hidden, rng);
    let total = cfg.joint_iterations;
    let mut losses = Vec::with_capacity(total);
    let mut it = 0;
    for (counts, iters) in staged(cfg, total) {
        for _ in 0..iters {
            let concepts = sample_batch(task, &counts, cfg.batch_size, rng)?;
            let opts = TeachOptions {
                mode: RolloutMode::Train,
                temperature: annealed_temperature(cfg.temperature.start, cfg.temperature.end, it, total),
                train_teacher: true,
                train_student: true,
            };
            let r = build_teach_rollout(task, &teacher, &student, &concepts, task.k_teach, opts, rng)?;
            let (loss, mut grads) =
                loss_and_grads(&r, &[&teacher.params, &student.params], "joint", it)?;
            apply(&mut teacher.params, &mut grads, cfg)?;
            apply(&mut student.params, &mut grads, cfg)?;
            losses.push(loss);
            it += 1;
        }
    }
    Ok(TrainedPair {
        mode: TrainingMode::Joint,
        student,
        teacher,
        history: vec![PhaseHistory {
            phase: "joint".into(),
            losses,
        }],
    })
}

/// Builds the task and trains in `mode` from the config's seed.
pub fn train(cfg: &TrainConfig, mode: TrainingMode) -> Result<(TaskSpec, TrainedPair)> {
    cfg.validate()?;
    let task = cfg.task.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pair = match mode {
        TrainingMode::Joint => train_joint(cfg, &task, &mut rng)?,
        TrainingMode::BestResponse => train_best_response(cfg, &task, &mut rng)?,
    };
    Ok((task, pair))
}
