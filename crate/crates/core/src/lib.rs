//! Tabular Q-learning simulation library for the synchronous generative
//! model: cascade Q-learning and its variance-reduced epoch form, the
//! plain and variance-reduced Q-learning baselines, exact solvers,
//! instance-complexity measures, and a seeded experiment harness.
//!
//! Layout:
//! - [`mdp`] — instances, the benchmark families, and the exact oracles;
//! - [`sampling`] — counter-based random streams and the generative model;
//! - [`operators`] — exact/empirical/recentered Bellman operators, norms,
//!   effective variance, and complexity measures;
//! - [`algorithms`] — the learning algorithms and their epoch schedules;
//! - [`harness`] — trial orchestration, sweeps, slope fits, and emission.

pub mod algorithms;
pub mod error;
pub mod harness;
mod linalg;
pub mod mdp;
pub mod operators;
pub mod sampling;

pub use algorithms::{
    cq_run, q_learning_run, schedule_budgeted, schedule_example1, schedule_expected,
    schedule_high_prob, schedule_minimax, step_size, vr_q_learning_run, vrcq_run, AlgoOutput,
    Checkpoint, EpochParams, EpochSchedule, ScheduleScale, StepPolicy,
};
pub use error::{Error, Result};
pub use harness::{
    emit_results, fit_loglog_slope, run_sweep, run_trial, ExperimentConfig, SweepPoint,
    SweepResult, TrialTrace,
};
pub use mdp::{
    exact_optimal_q, garnet, greedy_policy, hard_two_state, policy_eval_direct, read_instance,
    write_instance, MdpInstance, Policy, QTable,
};
pub use operators::{
    bellman, complexity_measures, effective_variance, empirical_bellman, linf_norm,
    monte_carlo_bellman, recentered_bellman, span_seminorm, ComplexityMeasures, EffectiveVariance,
};
pub use sampling::{
    draw_sample, spawn_stream, GenerativeSample, RngStream, SampleCounter, Simulator,
};
