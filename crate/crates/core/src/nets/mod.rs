//! Recurrent student and teacher networks and the episodes that connect them.

mod gru;
mod gumbel;
mod models;
mod rollout;

pub use gumbel::{annealed_temperature, gumbel_softmax, sample_gumbel};
pub use models::{
    Emission, StudentArch, StudentInput, StudentNet, TeacherArch, TeacherNet, DEFAULT_HIDDEN,
};
pub use rollout::{
    build_prior_rollout, build_teach_rollout, rollout_prior, rollout_teach, EpisodeTrace, Rollout,
    RolloutMode, TeachOptions, TraceStep,
};

#[cfg(test)]
mod tests;
