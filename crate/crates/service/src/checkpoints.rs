use std::path::Path;
use std::sync::Arc;

use teachnet_core::harness::StudyTask;
use teachnet_core::nets::{StudentNet, TeacherNet};
use teachnet_core::tasks::TaskKind;

use crate::error::ServiceError;

/// A trained teacher with the student it was trained against.
#[derive(Debug)]
pub struct TeacherPair {
    pub teacher: TeacherNet,
    pub student: StudentNet,
}

impl TeacherPair {
    /// Loads `teacher.json` and `student.json` from a checkpoint directory
    /// and checks that both were trained on `task`.
    pub fn load(dir: &Path, task: StudyTask) -> Result<Self, ServiceError> {
        let teacher = TeacherNet::load(&dir.join("teacher.json"))?;
        let student = StudentNet::load(&dir.join("student.json"))?;
        let kind = match task {
            StudyTask::Bimodal => TaskKind::Bimodal,
            StudyTask::Boolean => TaskKind::Boolean,
        };
        if teacher.arch.task != kind || student.arch.task != kind {
            return Err(ServiceError::Core(teachnet_core::Error::Invalid(format!(
                "{}: checkpoint is for another task (teacher {:?}, student {:?})",
                dir.display(),
                teacher.arch.task,
                student.arch.task
            ))));
        }
        Ok(TeacherPair { teacher, student })
    }
}

/// Read-only networks shared by all sessions.
#[derive(Clone, Debug, Default)]
pub struct Checkpoints {
    pub bimodal: Option<Arc<TeacherPair>>,
    pub boolean: Option<Arc<TeacherPair>>,
}

impl Checkpoints {
    pub fn get(&self, task: StudyTask) -> Option<&TeacherPair> {
        match task {
            StudyTask::Bimodal => self.bimodal.as_deref(),
            StudyTask::Boolean => self.boolean.as_deref(),
        }
    }

    pub fn with(mut self, task: StudyTask, pair: TeacherPair) -> Self {
        let slot = match task {
            StudyTask::Bimodal => &mut self.bimodal,
            StudyTask::Boolean => &mut self.boolean,
        };
        *slot = Some(Arc::new(pair));
        self
    }
}
