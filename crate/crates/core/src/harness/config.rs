//! Experiment configuration: a flat key-value (TOML) schema selecting the
//! instance family, the algorithm and schedule, the trial layout, and the
//! output sink.

use std::path::Path;

use serde::Deserialize;

use crate::algorithms::{
    schedule_budgeted, schedule_example1, schedule_expected_scaled, schedule_high_prob_scaled,
    schedule_minimax, EpochSchedule, ScheduleScale, StepPolicy,
};
use crate::error::{Error, Result};
use crate::mdp::{garnet, hard_two_state, read_instance, MdpInstance};

/// Desk-scale guard rails; larger values require `full_scale = true`.
const DESK_GAMMA_CAP: f64 = 0.99;
const DESK_TRIALS_CAP: u64 = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    HardTwoState,
    Garnet,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Cq,
    Vrcq,
    Vrql,
    Ql,
    QlPr,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::Cq => "cq",
            AlgorithmKind::Vrcq => "vrcq",
            AlgorithmKind::Vrql => "vrql",
            AlgorithmKind::Ql => "ql",
            AlgorithmKind::QlPr => "ql_pr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Expected,
    HighProb,
    Minimax,
    Budgeted,
    Example1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Constant,
    RescaledLinear,
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Schedules used by one run: the epoch constructors produce a single
/// schedule, the minimax rule a burn-in phase plus a refinement phase.
pub enum SchedulePlan {
    Single(EpochSchedule),
    TwoPhase(EpochSchedule, EpochSchedule),
}

fn default_states() -> usize {
    20
}
fn default_actions() -> usize {
    2
}
fn default_branching() -> usize {
    2
}
fn default_phi() -> f64 {
    0.9
}
fn default_epochs() -> u32 {
    3
}
fn default_delta() -> f64 {
    0.05
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_budget_coeff() -> f64 {
    100.0
}
fn default_trials() -> u64 {
    100
}
fn default_scale() -> f64 {
    1.0
}
fn default_format() -> OutputFormat {
    OutputFormat::Csv
}
fn default_oracle_tol() -> f64 {
    1e-10
}

/// Full experiment description. All keys are optional except `instance`
/// and `algorithm`; see the README for the documented schema.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    // Instance selection.
    pub instance: InstanceKind,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_actions")]
    pub actions: usize,
    #[serde(default = "default_branching")]
    pub branching: usize,
    #[serde(default)]
    pub instance_seed: u64,
    #[serde(default)]
    pub sigma_r: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gammas: Option<Vec<f64>>,

    // Algorithm selection.
    pub algorithm: AlgorithmKind,
    #[serde(default = "default_schedule_kind")]
    pub schedule: ScheduleKind,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub budget: u64,
    #[serde(default = "default_budget_coeff")]
    pub budget_coeff: f64,
    #[serde(default)]
    pub step: Option<StepKind>,
    #[serde(default)]
    pub step_param: Option<f64>,
    #[serde(default)]
    pub iters: u64,
    #[serde(default = "default_scale")]
    pub scale_epoch_len: f64,
    #[serde(default = "default_scale")]
    pub scale_recenter: f64,
    #[serde(default = "default_scale")]
    pub scale_step: f64,

    // Experiment layout.
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fit_slope: bool,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    #[serde(default)]
    pub raw: bool,
    #[serde(default)]
    pub full_scale: bool,
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
}

fn default_schedule_kind() -> ScheduleKind {
    ScheduleKind::Expected
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        for g in self.grid_gammas().into_iter().flatten() {
            if g.is_nan() || g <= 0.0 || g >= 1.0 {
                return Err(Error::Config(format!("gamma {g} outside (0,1)")));
            }
        }
        if !self.full_scale {
            let over_gamma = self
                .grid_gammas()
                .iter()
                .flatten()
                .any(|&g| g > DESK_GAMMA_CAP);
            if over_gamma {
                return Err(Error::Config(format!(
                    "gamma above the desk-scale cap {DESK_GAMMA_CAP}; set full_scale = true to run it"
                )));
            }
            if self.trials > DESK_TRIALS_CAP {
                return Err(Error::Config(format!(
                    "trials above the desk-scale cap {DESK_TRIALS_CAP}; set full_scale = true to run it"
                )));
            }
        }
        match self.instance {
            InstanceKind::File if self.path.is_none() => {
                return Err(Error::Config("instance = \"file\" requires path".into()))
            }
            InstanceKind::HardTwoState if self.grid_gammas().iter().any(Option::is_none) => {
                return Err(Error::Config(
                    "hard_two_state requires gamma (or gammas)".into(),
                ))
            }
            _ => {}
        }
        if self.budget_coeff.is_nan() || self.budget_coeff <= 0.0 {
            return Err(Error::Config("budget_coeff must be positive".into()));
        }
        Ok(())
    }

    /// Grid of discount factors; `None` means "use the instance's own".
    pub fn grid_gammas(&self) -> Vec<Option<f64>> {
        if let Some(gs) = &self.gammas {
            gs.iter().map(|&g| Some(g)).collect()
        } else if let Some(g) = self.gamma {
            vec![Some(g)]
        } else {
            vec![None]
        }
    }

    /// Instance for one grid point.
    pub fn build_instance(&self, gamma: Option<f64>) -> Result<MdpInstance> {
        let mut mdp = match self.instance {
            InstanceKind::HardTwoState => {
                let g =
                    gamma.ok_or_else(|| Error::Config("hard_two_state requires gamma".into()))?;
                hard_two_state(g, self.beta)?
            }
            InstanceKind::Garnet => {
                let base = garnet(
                    self.states,
                    self.actions,
                    self.branching,
                    self.instance_seed,
                )?;
                match gamma {
                    Some(g) => base.with_gamma(g)?,
                    None => base,
                }
            }
            InstanceKind::File => {
                let path = self.path.as_ref().expect("validated");
                let base = read_instance(path)?;
                match gamma {
                    Some(g) => base.with_gamma(g)?,
                    None => base,
                }
            }
        };
        if let Some(sigma) = self.sigma_r {
            mdp = mdp.with_sigma_r(sigma)?;
        }
        Ok(mdp)
    }

    /// Per-point sample budget: explicit `budget` if set, otherwise
    /// `budget_coeff / (1-gamma)^2` rounded to the nearest draw.
    pub fn budget_for(&self, gamma: f64) -> u64 {
        if self.budget > 0 {
            self.budget
        } else {
            (self.budget_coeff / ((1.0 - gamma) * (1.0 - gamma))).round() as u64
        }
    }

    /// Iteration count for the non-epoch algorithms.
    pub fn iters_for(&self, gamma: f64) -> u64 {
        if self.iters > 0 {
            self.iters
        } else {
            self.budget_for(gamma)
        }
    }

    pub fn schedule_scale(&self) -> ScheduleScale {
        ScheduleScale {
            epoch_len: self.scale_epoch_len,
            recenter: self.scale_recenter,
            step: self.scale_step,
        }
    }

    /// Step policy for the plain Q-learning runs. Defaults: `ql` uses the
    /// rescaled-linear step, `ql_pr` the polynomial step with exponent
    /// -0.5, `cq` the constant `1/sqrt(n_iters)`.
    pub fn step_policy(&self, n_iters: u64) -> Result<StepPolicy> {
        let policy = match (self.algorithm, self.step) {
            (_, Some(StepKind::Constant)) => StepPolicy::Constant(self.step_param.unwrap_or(0.5)),
            (_, Some(StepKind::RescaledLinear)) => StepPolicy::RescaledLinear,
            (_, Some(StepKind::Polynomial)) => {
                StepPolicy::Polynomial(self.step_param.unwrap_or(-0.5))
            }
            (AlgorithmKind::Ql, None) => StepPolicy::RescaledLinear,
            (AlgorithmKind::QlPr, None) => StepPolicy::Polynomial(-0.5),
            (AlgorithmKind::Cq, None) => StepPolicy::Constant(1.0 / (n_iters.max(2) as f64).sqrt()),
            (_, None) => StepPolicy::RescaledLinear,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Build the epoch schedule(s) for one grid point.
    pub fn build_schedule(&self, mdp: &MdpInstance) -> Result<SchedulePlan> {
        let d = mdp.pair_count();
        let gamma = mdp.gamma();
        let scale = self.schedule_scale();
        let plan = match self.schedule {
            ScheduleKind::Expected => SchedulePlan::Single(schedule_expected_scaled(
                self.phi,
                gamma,
                d,
                self.epochs,
                &scale,
            )?),
            ScheduleKind::HighProb => SchedulePlan::Single(schedule_high_prob_scaled(
                self.phi,
                gamma,
                d,
                self.epochs,
                self.delta,
                &scale,
            )?),
            ScheduleKind::Minimax => {
                let r_max = mdp.max_abs_reward();
                let (init, late) =
                    schedule_minimax(self.phi, gamma, d, self.delta, self.epsilon, r_max)?;
                SchedulePlan::TwoPhase(init, late)
            }
            ScheduleKind::Budgeted => SchedulePlan::Single(schedule_budgeted(
                self.budget_for(gamma),
                self.phi,
                gamma,
                d,
            )?),
            ScheduleKind::Example1 => SchedulePlan::Single(schedule_example1(gamma)?),
        };
        Ok(plan)
    }
}
