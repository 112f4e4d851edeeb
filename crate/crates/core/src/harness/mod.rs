mod experiment;
mod study;

pub use experiment::{
    eval_concepts, evaluate, evaluate_checkpoints, run_experiment, task_domain, EvalConcepts, ExperimentConfig,
    ExperimentOutcome, OracleConfig, Regime,
};
pub use study::{
    aggregate_scores, bimodal_study_concepts, boolean_study_concepts, build_study_items,
    parse_log, score_item, score_session, teacher_next_example, Condition, ConditionSummary,
    InteractiveProgress, ItemResult, ItemScore, ItemView, LogEntry, RecordedResponse, Response,
    SessionEvent, SessionMode, SessionScore, SessionStatus, Stimulus, StudyItem, StudySession,
    StudyTask, TestStimulus, LINE_LENGTHS, RATING_THRESHOLD, SHOWN_EXAMPLES,
};
