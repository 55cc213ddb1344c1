//! Learning algorithms and their parameter schedules.

mod runs;
mod schedules;

pub use runs::{
    cq_run, q_learning_run, step_size, vr_q_learning_run, vrcq_run, AlgoOutput, Checkpoint,
    StepPolicy,
};
pub use schedules::{
    schedule_budgeted, schedule_budgeted_with_min, schedule_example1, schedule_expected,
    schedule_expected_scaled, schedule_high_prob, schedule_high_prob_scaled, schedule_minimax,
    EpochParams, EpochSchedule, ScheduleScale, BUDGET_MIN_CONSTANT,
};
