//! Epoch schedules for the variance-reduced runs: per-epoch step size,
//! inner-loop length, and recentering sample count, with the four
//! constructors used by the experiments.

use crate::error::{Error, Result};

/// Parameters of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochParams {
    /// Constant inner-loop step size `lambda(m)`.
    pub step: f64,
    /// Inner-loop iteration count `N_e(m)`.
    pub epoch_len: u64,
    /// Recentering sample count `N_T(m)`.
    pub recenter: u64,
}

/// A full epoch schedule: target per-epoch decay rate `phi` plus the
/// per-epoch triples. Total draw count is `sum_m (N_e(m) + N_T(m))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSchedule {
    rate: f64,
    epochs: Vec<EpochParams>,
}

/// Multiplicative relaxation knobs on the schedule constants. The
/// theoretical constants are conservative; smaller epoch/recentering
/// factors (or a larger step factor) are routinely usable in practice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleScale {
    pub epoch_len: f64,
    pub recenter: f64,
    pub step: f64,
}

impl Default for ScheduleScale {
    fn default() -> Self {
        ScheduleScale {
            epoch_len: 1.0,
            recenter: 1.0,
            step: 1.0,
        }
    }
}

impl ScheduleScale {
    fn validate(&self) -> Result<()> {
        if !(self.epoch_len > 0.0 && self.recenter > 0.0 && self.step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "schedule scale factors must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl EpochSchedule {
    /// Schedule with no epochs; running it returns the initial table and
    /// consumes no samples.
    pub fn empty(rate: f64) -> Result<Self> {
        check_unit_open("phi", rate)?;
        Ok(EpochSchedule {
            rate,
            epochs: Vec::new(),
        })
    }

    pub fn from_epochs(rate: f64, epochs: Vec<EpochParams>) -> Result<Self> {
        check_unit_open("phi", rate)?;
        for (m, e) in epochs.iter().enumerate() {
            if !(e.step > 0.0 && e.step < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "epoch {m}: step size {} outside (0,1)",
                    e.step
                )));
            }
            if e.epoch_len == 0 || e.recenter == 0 {
                return Err(Error::InvalidParameter(format!(
                    "epoch {m}: epoch_len and recenter must be >= 1"
                )));
            }
        }
        Ok(EpochSchedule { rate, epochs })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn epochs(&self) -> &[EpochParams] {
        &self.epochs
    }

    /// Exact total number of generative draws the schedule consumes.
    pub fn total_samples(&self) -> u64 {
        self.epochs.iter().map(|e| e.epoch_len + e.recenter).sum()
    }
}

fn check_unit_open(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in (0,1), got {value}"
        )));
    }
    Ok(())
}

fn check_common(phi: f64, gamma: f64, d: usize, m_epochs: u32) -> Result<()> {
    check_unit_open("phi", phi)?;
    check_unit_open("gamma", gamma)?;
    if d == 0 {
        return Err(Error::InvalidParameter("D must be >= 1".into()));
    }
    if m_epochs == 0 {
        return Err(Error::InvalidParameter("epoch count must be >= 1".into()));
    }
    Ok(())
}

fn ceil_u64(x: f64) -> u64 {
    x.ceil().max(1.0) as u64
}

fn step_for(epoch_len: u64, scale: &ScheduleScale) -> Result<f64> {
    let step = scale.step / (epoch_len as f64).sqrt();
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "derived step size {step} outside (0,1); epoch length {epoch_len} too small for step scale {}",
            scale.step
        )));
    }
    Ok(step)
}

/// Expectation-mode schedule: `lambda(m) = 1/sqrt(N_e(m))`,
/// `N_T(m) = 32 log(2D) / (phi^{2m+2} (1-gamma)^2)` and
/// `N_e(m) = 169 log(2D) / (phi^2 (2-phi^m)^2 (1-gamma)^2)`, all rounded up.
/// Guarantees per-epoch decay `phi` of the expected sup-norm error from a
/// zero initialization.
pub fn schedule_expected(phi: f64, gamma: f64, d: usize, m_epochs: u32) -> Result<EpochSchedule> {
    schedule_expected_scaled(phi, gamma, d, m_epochs, &ScheduleScale::default())
}

/// [`schedule_expected`] with relaxation knobs applied to the constants.
pub fn schedule_expected_scaled(
    phi: f64,
    gamma: f64,
    d: usize,
    m_epochs: u32,
    scale: &ScheduleScale,
) -> Result<EpochSchedule> {
    check_common(phi, gamma, d, m_epochs)?;
    scale.validate()?;
    let log2d = (2.0 * d as f64).ln();
    let horizon_sq = (1.0 - gamma) * (1.0 - gamma);
    let mut epochs = Vec::with_capacity(m_epochs as usize);
    for m in 0..m_epochs {
        let phi_m = phi.powi(m as i32);
        let recenter =
            ceil_u64(scale.recenter * 32.0 * log2d / (phi.powi(2 * m as i32 + 2) * horizon_sq));
        let shrink = 2.0 - phi_m;
        let epoch_len =
            ceil_u64(scale.epoch_len * 169.0 * log2d / (phi * phi * shrink * shrink * horizon_sq));
        epochs.push(EpochParams {
            step: step_for(epoch_len, scale)?,
            epoch_len,
            recenter,
        });
    }
    let schedule = EpochSchedule::from_epochs(phi, epochs)?;
    if *scale == ScheduleScale::default() {
        verify_expected(&schedule, gamma, d)?;
    }
    Ok(schedule)
}

/// Substitute the constructed counts back into their defining inequalities.
fn verify_expected(schedule: &EpochSchedule, gamma: f64, d: usize) -> Result<()> {
    let phi = schedule.rate();
    let log2d = (2.0 * d as f64).ln();
    let horizon_sq = (1.0 - gamma) * (1.0 - gamma);
    for (m, e) in schedule.epochs().iter().enumerate() {
        let phi_m = phi.powi(m as i32);
        let nt_req = 32.0 * log2d / (phi.powi(2 * m as i32 + 2) * horizon_sq);
        let ne_req = 169.0 * log2d / (phi * phi * (2.0 - phi_m) * (2.0 - phi_m) * horizon_sq);
        if (e.recenter as f64) < nt_req || (e.epoch_len as f64) < ne_req {
            return Err(Error::InvalidParameter(format!(
                "schedule self-verification failed at epoch {m}"
            )));
        }
    }
    Ok(())
}

/// High-probability schedule (failure probability `delta`):
/// `N_T(m) = 32 log(10 M D / delta) / (phi^{2m+2} (1-gamma)^2)`, and
/// `N_e(m)` solving the implicit bound
/// `N_e >= alpha log(beta N_e)` with
/// `alpha = 169 / (phi^2 (2-phi^m)^2 (1-gamma)^2)` and
/// `beta = 10 M D / delta`, via the explicit sufficient size
/// `max(alpha, 2 alpha log(alpha beta))`.
pub fn schedule_high_prob(
    phi: f64,
    gamma: f64,
    d: usize,
    m_epochs: u32,
    delta: f64,
) -> Result<EpochSchedule> {
    schedule_high_prob_scaled(phi, gamma, d, m_epochs, delta, &ScheduleScale::default())
}

/// [`schedule_high_prob`] with relaxation knobs applied to the constants.
pub fn schedule_high_prob_scaled(
    phi: f64,
    gamma: f64,
    d: usize,
    m_epochs: u32,
    delta: f64,
    scale: &ScheduleScale,
) -> Result<EpochSchedule> {
    check_common(phi, gamma, d, m_epochs)?;
    check_unit_open("delta", delta)?;
    scale.validate()?;
    let horizon_sq = (1.0 - gamma) * (1.0 - gamma);
    let log_hp = (10.0 * m_epochs as f64 * d as f64 / delta).ln();
    let beta = 10.0 * m_epochs as f64 * d as f64 / delta;
    let mut epochs = Vec::with_capacity(m_epochs as usize);
    for m in 0..m_epochs {
        let phi_m = phi.powi(m as i32);
        let recenter =
            ceil_u64(scale.recenter * 32.0 * log_hp / (phi.powi(2 * m as i32 + 2) * horizon_sq));
        let shrink = 2.0 - phi_m;
        let alpha = 169.0 / (phi * phi * shrink * shrink * horizon_sq);
        let implicit = alpha.max(2.0 * alpha * (alpha * beta).ln());
        let epoch_len = ceil_u64(scale.epoch_len * implicit);
        epochs.push(EpochParams {
            step: step_for(epoch_len, scale)?,
            epoch_len,
            recenter,
        });
    }
    let schedule = EpochSchedule::from_epochs(phi, epochs)?;
    if *scale == ScheduleScale::default() {
        verify_high_prob(&schedule, gamma, d, delta)?;
    }
    Ok(schedule)
}

fn verify_high_prob(schedule: &EpochSchedule, gamma: f64, d: usize, delta: f64) -> Result<()> {
    let phi = schedule.rate();
    let m_total = schedule.num_epochs() as f64;
    let horizon_sq = (1.0 - gamma) * (1.0 - gamma);
    let beta = 10.0 * m_total * d as f64 / delta;
    for (m, e) in schedule.epochs().iter().enumerate() {
        let nt_req = 32.0 * beta.ln() / (phi.powi(2 * m as i32 + 2) * horizon_sq);
        let shrink = 2.0 - phi.powi(m as i32);
        let alpha = 169.0 / (phi * phi * shrink * shrink * horizon_sq);
        // The implicit inequality itself, evaluated at the chosen N_e.
        let ne = e.epoch_len as f64;
        if (e.recenter as f64) < nt_req || ne < alpha * (beta * ne).ln() {
            return Err(Error::InvalidParameter(format!(
                "high-probability schedule self-verification failed at epoch {m}"
            )));
        }
    }
    Ok(())
}

/// Two-phase minimax schedule: a burn-in phase of
/// `ceil(log_{1/phi}(1 / sqrt(1-gamma)))` epochs followed by a refinement
/// phase of `ceil(log_{1/phi}(c_bar r_max / (sqrt(1-gamma) eps)))` epochs,
/// both parameterized as high-probability schedules. `c_bar` is fixed at
/// its lower bound `4 sqrt(2) log(2) / r_max + 1`.
pub fn schedule_minimax(
    phi: f64,
    gamma: f64,
    d: usize,
    delta: f64,
    epsilon: f64,
    r_max: f64,
) -> Result<(EpochSchedule, EpochSchedule)> {
    check_unit_open("phi", phi)?;
    check_unit_open("gamma", gamma)?;
    check_unit_open("delta", delta)?;
    if d == 0 {
        return Err(Error::InvalidParameter("D must be >= 1".into()));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if r_max.is_nan() || r_max <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "r_max must be positive, got {r_max}"
        )));
    }
    let log_inv_phi = (1.0 / phi).ln();
    let m_init = ((1.0 / (1.0 - gamma).sqrt()).ln() / log_inv_phi).ceil() as u32;
    let c_bar = 4.0 * (2.0f64).sqrt() * (2.0f64).ln() / r_max + 1.0;
    let late_arg = c_bar * r_max / ((1.0 - gamma).sqrt() * epsilon);
    let m_late = if late_arg <= 1.0 {
        0
    } else {
        (late_arg.ln() / log_inv_phi).ceil() as u32
    };
    let init = if m_init == 0 {
        EpochSchedule::empty(phi)?
    } else {
        schedule_high_prob(phi, gamma, d, m_init, delta)?
    };
    let late = if m_late == 0 {
        EpochSchedule::empty(phi)?
    } else {
        schedule_high_prob(phi, gamma, d, m_late, delta)?
    };
    Ok((init, late))
}

/// Default minimum-budget constant for [`schedule_budgeted`].
pub const BUDGET_MIN_CONSTANT: f64 = 16.0;

/// Budget-driven schedule: given a total sample budget `N`, run
/// `M = floor(log_{1/phi}(sqrt(1-phi^2) (1-gamma) sqrt(N) / (8 sqrt(gamma log 2D))))`
/// epochs (at least one) with geometric recentering counts
/// `N_T(m) = 32 gamma log(2D) / (phi^{2m+2} (1-gamma)^2)` and the fixed
/// expectation-mode epoch length `N_e(0)`. Fails when the budget cannot
/// cover the schedule.
pub fn schedule_budgeted(n_budget: u64, phi: f64, gamma: f64, d: usize) -> Result<EpochSchedule> {
    schedule_budgeted_with_min(n_budget, phi, gamma, d, BUDGET_MIN_CONSTANT)
}

/// [`schedule_budgeted`] with an explicit minimum-budget constant `c` in
/// the entry condition `N >= c gamma log(D) / (1-gamma)^2`.
pub fn schedule_budgeted_with_min(
    n_budget: u64,
    phi: f64,
    gamma: f64,
    d: usize,
    min_constant: f64,
) -> Result<EpochSchedule> {
    check_unit_open("phi", phi)?;
    check_unit_open("gamma", gamma)?;
    if d == 0 {
        return Err(Error::InvalidParameter("D must be >= 1".into()));
    }
    let horizon_sq = (1.0 - gamma) * (1.0 - gamma);
    let required = min_constant * gamma * (d as f64).ln() / horizon_sq;
    if (n_budget as f64) < required {
        return Err(Error::BudgetTooSmall {
            budget: n_budget,
            required: required.ceil() as u64,
        });
    }
    let log2d = (2.0 * d as f64).ln();
    let m_formula = ((1.0 - phi * phi).sqrt() * (1.0 - gamma) * (n_budget as f64).sqrt()
        / (8.0 * (gamma * log2d).sqrt()))
    .ln()
        / (1.0 / phi).ln();
    let m_epochs = (m_formula.floor().max(1.0)) as u32;
    let epoch_len = ceil_u64(169.0 * log2d / (phi * phi * horizon_sq));
    let step = step_for(epoch_len, &ScheduleScale::default())?;
    let mut epochs = Vec::with_capacity(m_epochs as usize);
    for m in 0..m_epochs {
        let recenter = ceil_u64(32.0 * gamma * log2d / (phi.powi(2 * m as i32 + 2) * horizon_sq));
        epochs.push(EpochParams {
            step,
            epoch_len,
            recenter,
        });
    }
    let schedule = EpochSchedule::from_epochs(phi, epochs)?;
    let total = schedule.total_samples();
    if total > n_budget {
        return Err(Error::BudgetTooSmall {
            budget: n_budget,
            required: total,
        });
    }
    Ok(schedule)
}

/// The hard-instance experiment preset: 15 epochs at `phi = 0.95` with
/// `N_T(m) = 0.738 / (phi^{2m} (1-gamma)^2)` and `N_e = 5 / (1-gamma)^2`.
/// Totals just under `100 / (1-gamma)^2` draws.
pub fn schedule_example1(gamma: f64) -> Result<EpochSchedule> {
    check_unit_open("gamma", gamma)?;
    let phi: f64 = 0.95;
    let horizon_sq = (1.0 - gamma) * (1.0 - gamma);
    let epoch_len = ceil_u64(5.0 / horizon_sq);
    let step = step_for(epoch_len, &ScheduleScale::default())?;
    let epochs = (0..15)
        .map(|m| EpochParams {
            step,
            epoch_len,
            recenter: ceil_u64(0.738 / (phi.powi(2 * m) * horizon_sq)),
        })
        .collect();
    EpochSchedule::from_epochs(phi, epochs)
}
