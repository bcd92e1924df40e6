//! The MAPE-K feedback loop: knowledge store, monitor, analyzer (option
//! enumeration plus verification orchestration), planner (goal-ordered
//! selection plus plan diffing), executor, and failsafe handling.

pub mod decision;
pub mod knowledge;
pub mod log;
pub mod runner;

pub use decision::{outperforms, select, Decision};
pub use knowledge::{
    default_goals, normalize_goals, parse_goals, uncertainty_from_probe, AdaptationOption,
    Comparator, Configuration, Direction, EnvironmentSnapshot, Goal, GoalError, GoalKind, Plan,
    PlanStep, QualitySnapshot,
};
pub use log::{decision_log_csv, DECISION_LOG_HEADER};
pub use runner::{
    adaptation_needed, enumerate_options, monitor, plan, AnalysisOutcome, DecisionRecord,
    Knowledge, LoopError, Mailbox, ManagedSystem, MapeLoop, OptionVerifier, RegistryVerifier,
    ValidatedUpdate, DEFAULT_BUDGET,
};
