//! Experiment orchestration: seeded trials, parallel sweeps over a
//! discount grid, error aggregation, slope fitting, and result emission.
//!
//! Trials are embarrassingly parallel; every trial's stream is keyed by
//! `(root_seed, grid_index * trials + trial_id)`, so parallel and serial
//! execution produce identical aggregates and any trial can be replayed
//! alone.

mod config;
mod emit;

pub use config::{
    AlgorithmKind, ExperimentConfig, InstanceKind, OutputFormat, ScheduleKind, SchedulePlan,
    StepKind,
};
pub use emit::{emit_results, read_aggregate_csv};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    cq_run, q_learning_run, vr_q_learning_run, vrcq_run, AlgoOutput, Checkpoint,
};
use crate::error::{Error, Result};
use crate::mdp::{exact_optimal_q, QTable};
use crate::operators::complexity_measures;
use crate::sampling::spawn_stream;

/// Record of one trial: its stream id, exact sample count, final sup-norm
/// error against the oracle, and the error trace.
#[derive(Clone, Debug, Serialize)]
pub struct TrialTrace {
    pub trial_id: u64,
    /// Stream id passed to `spawn_stream` (grid offset included).
    pub seed: u64,
    pub samples_used: u64,
    pub final_error: f64,
    pub checkpoints: Vec<Checkpoint>,
}

/// Aggregates for one grid point.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SweepPoint {
    pub gamma: f64,
    pub beta: f64,
    pub algorithm: String,
    pub trials: u64,
    pub total_samples: u64,
    pub mean_linf_error: f64,
    pub std_linf_error: f64,
    /// Oracle lower-bound curve `c (gamma v + rho)`, present on
    /// policy-evaluation instances; `c` is normalized to the first grid
    /// point's mean error.
    pub lower_bound: Option<f64>,
}

/// Least-squares line fitted in log-log coordinates.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Result of a sweep: per-point aggregates, the optional log-log fit, and
/// the raw traces behind them (in grid-point, then trial order).
#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub slope: Option<SlopeFit>,
    pub traces: Vec<Vec<TrialTrace>>,
}

/// Run one trial of the configured experiment at one grid point.
///
/// Builds the instance and its oracle, spawns the trial's stream, runs the
/// selected algorithm, and returns the trace. Checkpoints land at epoch
/// boundaries for the epoch algorithms and every 1000 iterations
/// otherwise.
pub fn run_trial(config: &ExperimentConfig, grid_idx: usize, trial_id: u64) -> Result<TrialTrace> {
    let gammas = config.grid_gammas();
    let gamma_opt = *gammas.get(grid_idx).ok_or_else(|| {
        Error::Config(format!(
            "grid index {grid_idx} out of range ({} points)",
            gammas.len()
        ))
    })?;
    let mdp = config.build_instance(gamma_opt)?;
    let oracle = exact_optimal_q(&mdp, config.oracle_tol)?;
    let stream_id = grid_idx as u64 * config.trials + trial_id;
    let mut stream = spawn_stream(config.seed, stream_id);
    let theta0 = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();

    let output: AlgoOutput = match config.algorithm {
        AlgorithmKind::Cq => {
            let n_iters = config.iters_for(gamma);
            let step = match config.step_policy(n_iters)? {
                crate::algorithms::StepPolicy::Constant(lambda) => lambda,
                _ => return Err(Error::Config("cq takes a constant step size".into())),
            };
            cq_run(&mdp, &mut stream, &theta0, step, n_iters, Some(&oracle))?
        }
        AlgorithmKind::Ql | AlgorithmKind::QlPr => {
            let n_iters = config.iters_for(gamma);
            let policy = config.step_policy(n_iters)?;
            let pr = config.algorithm == AlgorithmKind::QlPr;
            q_learning_run(
                &mdp,
                &mut stream,
                &theta0,
                &policy,
                n_iters,
                pr,
                Some(&oracle),
            )?
        }
        AlgorithmKind::Vrcq => match config.build_schedule(&mdp)? {
            SchedulePlan::Single(schedule) => {
                vrcq_run(&mdp, &mut stream, &theta0, &schedule, Some(&oracle))?
            }
            SchedulePlan::TwoPhase(init, late) => {
                let first = vrcq_run(&mdp, &mut stream, &theta0, &init, Some(&oracle))?;
                let second = vrcq_run(&mdp, &mut stream, &first.estimate, &late, Some(&oracle))?;
                chain_outputs(first, second)
            }
        },
        AlgorithmKind::Vrql => match config.build_schedule(&mdp)? {
            SchedulePlan::Single(schedule) => {
                vr_q_learning_run(&mdp, &mut stream, &theta0, &schedule, Some(&oracle))?
            }
            SchedulePlan::TwoPhase(init, late) => {
                let first = vr_q_learning_run(&mdp, &mut stream, &theta0, &init, Some(&oracle))?;
                let second =
                    vr_q_learning_run(&mdp, &mut stream, &first.estimate, &late, Some(&oracle))?;
                chain_outputs(first, second)
            }
        },
    };

    Ok(TrialTrace {
        trial_id,
        seed: stream_id,
        samples_used: output.samples_used,
        final_error: output.estimate.linf_distance(&oracle),
        checkpoints: output.checkpoints,
    })
}

/// Concatenate a two-phase run into one output: sample counts add and the
/// second phase's checkpoints shift by the first phase's total.
fn chain_outputs(first: AlgoOutput, second: AlgoOutput) -> AlgoOutput {
    let offset = first.samples_used;
    let mut checkpoints = first.checkpoints;
    checkpoints.extend(second.checkpoints.iter().map(|c| Checkpoint {
        samples: c.samples + offset,
        error: c.error,
    }));
    AlgoOutput {
        estimate: second.estimate,
        samples_used: offset + second.samples_used,
        checkpoints,
    }
}

/// Online mean/variance accumulator (Welford). `std` is the population
/// standard deviation, so a single trial reports zero spread.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

/// Run the full grid: `trials` independent runs per grid point, aggregated
/// in trial order regardless of completion order. On failure partway
/// through, aggregates completed so far are flushed to the configured
/// output before the error propagates.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    match run_sweep_inner(config) {
        Ok(result) => Ok(result),
        Err((partial, err)) => {
            if let Some(path) = &config.output {
                // Best-effort flush; the original error wins.
                let _ = emit_results(&partial, path, config.format, config.raw);
            }
            Err(err)
        }
    }
}

fn run_sweep_inner(
    config: &ExperimentConfig,
) -> std::result::Result<SweepResult, (SweepResult, Error)> {
    let gammas = config.grid_gammas();
    let mut points = Vec::with_capacity(gammas.len());
    let mut all_traces = Vec::with_capacity(gammas.len());
    let mut raw_lower: Vec<Option<f64>> = Vec::with_capacity(gammas.len());

    for (grid_idx, gamma_opt) in gammas.iter().enumerate() {
        let point = run_grid_point(config, grid_idx, *gamma_opt);
        match point {
            Ok((point, traces, raw_lb)) => {
                points.push(point);
                all_traces.push(traces);
                raw_lower.push(raw_lb);
            }
            Err(err) => {
                let partial = finish_sweep(config, points, all_traces, raw_lower);
                return Err((partial, err));
            }
        }
    }
    Ok(finish_sweep(config, points, all_traces, raw_lower))
}

fn run_grid_point(
    config: &ExperimentConfig,
    grid_idx: usize,
    gamma_opt: Option<f64>,
) -> Result<(SweepPoint, Vec<TrialTrace>, Option<f64>)> {
    let trials = config.trials;
    let traces: Vec<TrialTrace> = if config.threads == 1 {
        (0..trials)
            .map(|t| run_trial(config, grid_idx, t))
            .collect::<Result<_>>()?
    } else {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(config, grid_idx, t))
            .collect::<Result<_>>()?
    };

    let mut acc = Welford::default();
    for trace in &traces {
        acc.push(trace.final_error);
    }
    let mdp = config.build_instance(gamma_opt)?;
    let raw_lb = if mdp.num_actions() == 1 {
        complexity_measures(&mdp)
            .ok()
            .map(|m| mdp.gamma() * m.v + m.rho)
    } else {
        None
    };
    let point = SweepPoint {
        gamma: mdp.gamma(),
        beta: config.beta,
        algorithm: config.algorithm.name().to_string(),
        trials,
        total_samples: traces.first().map(|t| t.samples_used).unwrap_or(0),
        mean_linf_error: acc.mean,
        std_linf_error: acc.std(),
        lower_bound: None,
    };
    Ok((point, traces, raw_lb))
}

fn finish_sweep(
    config: &ExperimentConfig,
    mut points: Vec<SweepPoint>,
    traces: Vec<Vec<TrialTrace>>,
    raw_lower: Vec<Option<f64>>,
) -> SweepResult {
    // Normalize the lower-bound curve to pass through the first point
    // (its absolute constant is not identified).
    if let (Some(first_point), Some(Some(first_raw))) = (points.first(), raw_lower.first()) {
        if *first_raw > 0.0 && first_point.mean_linf_error > 0.0 {
            let c = first_point.mean_linf_error / first_raw;
            for (point, raw) in points.iter_mut().zip(&raw_lower) {
                point.lower_bound = raw.map(|r| c * r);
            }
        }
    }
    let slope = if config.fit_slope {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.mean_linf_error > 0.0)
            .map(|p| (1.0 / (1.0 - p.gamma), p.mean_linf_error))
            .collect();
        fit_loglog_slope(&pts)
            .ok()
            .map(|(slope, intercept)| SlopeFit { slope, intercept })
    } else {
        None
    };
    SweepResult {
        points,
        slope,
        traces,
    }
}

/// Ordinary least squares on `(log x, log y)`. Requires at least two
/// distinct positive abscissae and positive ordinates.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    for &(x, y) in points {
        if x.is_nan() || x <= 0.0 || y.is_nan() || y <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "log-log fit needs positive coordinates, got ({x}, {y})"
            )));
        }
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit(
            "all abscissae coincide in log space".into(),
        ));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Ok((slope, intercept))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
instance = "garnet"
algorithm = "vrcq"
gamma = 0.8
states = 5
actions = 2
branching = 2
trials = 3
seed = 11
scale_epoch_len = 0.02
scale_recenter = 0.02
epochs = 2
{extra}
"#
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn trials_are_reproducible_and_accounted() {
        let config = tiny_config("");
        let a = run_trial(&config, 0, 1).unwrap();
        let b = run_trial(&config, 0, 1).unwrap();
        assert_eq!(a.final_error.to_bits(), b.final_error.to_bits());
        assert_eq!(a.samples_used, b.samples_used);

        let mdp = config.build_instance(Some(0.8)).unwrap();
        if let SchedulePlan::Single(s) = config.build_schedule(&mdp).unwrap() {
            assert_eq!(a.samples_used, s.total_samples());
        } else {
            panic!("expected a single-phase schedule");
        }
    }

    #[test]
    fn deterministic_instances_make_trials_agree() {
        let text = r#"
instance = "garnet"
algorithm = "vrcq"
gamma = 0.8
states = 5
actions = 2
branching = 1
trials = 4
scale_epoch_len = 0.02
scale_recenter = 0.02
epochs = 2
"#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        let errs: Vec<f64> = (0..4)
            .map(|t| run_trial(&config, 0, t).unwrap().final_error)
            .collect();
        for e in &errs[1..] {
            assert_eq!(e.to_bits(), errs[0].to_bits());
        }
    }

    #[test]
    fn sweep_aggregates_match_the_arithmetic_mean() {
        let config = tiny_config("");
        let result = run_sweep(&config).unwrap();
        assert_eq!(result.points.len(), 1);
        let point = &result.points[0];
        let naive: f64 = result.traces[0].iter().map(|t| t.final_error).sum::<f64>()
            / result.traces[0].len() as f64;
        assert!((point.mean_linf_error - naive).abs() <= 1e-15 * naive.abs().max(1.0));
        assert_eq!(point.trials, 3);
    }

    #[test]
    fn single_trial_point_has_zero_std() {
        let mut config = tiny_config("");
        config.trials = 1;
        let result = run_sweep(&config).unwrap();
        assert_eq!(result.points[0].std_linf_error, 0.0);
        assert_eq!(
            result.points[0].mean_linf_error,
            result.traces[0][0].final_error
        );
    }

    #[test]
    fn parallel_and_serial_sweeps_agree_bitwise() {
        let mut serial = tiny_config("");
        serial.threads = 1;
        let mut parallel = tiny_config("");
        parallel.threads = 0;
        let a = run_sweep(&serial).unwrap();
        let b = run_sweep(&parallel).unwrap();
        assert_eq!(
            a.points[0].mean_linf_error.to_bits(),
            b.points[0].mean_linf_error.to_bits()
        );
        assert_eq!(
            a.points[0].std_linf_error.to_bits(),
            b.points[0].std_linf_error.to_bits()
        );
    }

    #[test]
    fn lower_bound_curve_appears_for_policy_evaluation_sweeps() {
        let text = r#"
instance = "hard_two_state"
algorithm = "vrcq"
gammas = [0.9, 0.95]
beta = 0.0
trials = 2
seed = 3
scale_epoch_len = 0.02
scale_recenter = 0.02
epochs = 2
fit_slope = true
"#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        let result = run_sweep(&config).unwrap();
        assert_eq!(result.points.len(), 2);
        // Normalized to the first point.
        let first = result.points[0].lower_bound.unwrap();
        assert!((first - result.points[0].mean_linf_error).abs() < 1e-12 * first);
        assert!(result.points[1].lower_bound.is_some());
        assert!(result.slope.is_some());
    }

    #[test]
    fn minimax_trials_chain_both_phases() {
        // Accuracy target at the phase boundary: the refinement phase is
        // empty and the run reduces to the burn-in schedule.
        let text = r#"
instance = "garnet"
algorithm = "vrcq"
schedule = "minimax"
gamma = 0.5
states = 4
actions = 1
branching = 2
phi = 0.9
delta = 0.2
epsilon = 7.0
trials = 1
seed = 2
"#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        let trace = run_trial(&config, 0, 0).unwrap();
        let mdp = config.build_instance(Some(0.5)).unwrap();
        match config.build_schedule(&mdp).unwrap() {
            SchedulePlan::TwoPhase(init, late) => {
                assert_eq!(
                    trace.samples_used,
                    init.total_samples() + late.total_samples()
                );
                assert_eq!(
                    trace.checkpoints.len(),
                    init.num_epochs() + late.num_epochs()
                );
                assert!(init.num_epochs() > 0);
            }
            SchedulePlan::Single(_) => panic!("minimax must produce two phases"),
        }
        assert!(trace.final_error.is_finite());
    }

    #[test]
    fn failed_sweeps_flush_completed_points_before_erroring() {
        // A fixed absolute budget that covers gamma = 0.5 but not the
        // schedule requirement at gamma = 0.95: the second grid point
        // fails, and the first point's aggregates still reach the output.
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("partial.csv");
        let text = format!(
            r#"
instance = "garnet"
algorithm = "vrcq"
schedule = "budgeted"
gammas = [0.5, 0.95]
states = 4
actions = 1
branching = 2
budget = 100000
trials = 2
seed = 1
output = "{}"
"#,
            out.display()
        );
        let config = ExperimentConfig::from_toml_str(&text).unwrap();
        let err = run_sweep(&config).unwrap_err();
        assert!(err.is_numeric(), "expected a budget failure, got {err}");
        let points = crate::harness::read_aggregate_csv(&out).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].gamma, 0.5);
    }

    #[test]
    fn loglog_fit_recovers_exact_power_laws() {
        let quad: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 9.0].iter().map(|&x| (x, x * x)).collect();
        let (slope, _) = fit_loglog_slope(&quad).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = [1.0, 3.0, 7.0].iter().map(|&x| (x, 4.2)).collect();
        let (slope, intercept) = fit_loglog_slope(&flat).unwrap();
        assert_eq!(slope, 0.0);
        assert!((intercept - 4.2f64.ln()).abs() < 1e-12);

        let decay: Vec<(f64, f64)> = [1.0f64, 2.0, 5.0, 8.0, 13.0]
            .iter()
            .map(|&x| (x, 3.0 / x.powf(1.5)))
            .collect();
        let (slope, _) = fit_loglog_slope(&decay).unwrap();
        assert!((slope + 1.5).abs() < 1e-12);
    }

    #[test]
    fn loglog_fit_rejects_degenerate_input() {
        assert!(fit_loglog_slope(&[(1.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 2.0), (2.0, -3.0)]).is_err());
    }
}
