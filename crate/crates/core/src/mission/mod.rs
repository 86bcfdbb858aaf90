//! Mission plans, the step table, the sequencer, its log and summaries.

pub mod engine;
pub mod log;
pub mod plan;
pub mod steps;
pub mod summary;

pub use engine::{
    run_mission, MissionError, MissionInputs, MissionObserver, MissionOutcome, NoObserver,
};
pub use log::{parse_log, LogError, LogRecord, MissionLog};
pub use plan::{parse_plan, MissionPlan, PlanError, RockTarget, SampleTarget};
pub use steps::{step, IllegalTransition, MissionState, Step, StepEvent};
pub use summary::{replay, summary_from_log, MissionStatus, Summary};
