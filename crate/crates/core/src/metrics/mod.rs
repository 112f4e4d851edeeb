//! Interpretability metrics comparing teaching strategies with the
//! intuitive human strategy for each task.

mod distance;
mod report;

pub use distance::{
    boolean_intuitive_match, boolean_random_match_exact, corner_distance, lca_match, mode_distance,
};
pub use report::{
    concept_label, evaluate_on_concepts, evaluate_policy, metric_name, score_examples,
    write_plot_data, EpisodeRecord, Policy, PolicyNets, ReportSummary, StrategyReport,
};

#[cfg(test)]
mod tests;
