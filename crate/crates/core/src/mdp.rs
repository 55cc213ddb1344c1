//! Finite discounted MDP instances, the benchmark families used by the
//! experiments, and exact (oracle) solvers for the optimal Q-function.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::{derive_key, RngStream};

/// Tolerance for accepting a transition row as stochastic on ingestion.
/// Rows off by at most this much are renormalized to sum exactly to one;
/// larger deviations are rejected, never silently fixed.
const ROW_SUM_SLACK: f64 = 1e-9;

/// Internal domain tag separating instance-generation randomness from
/// trial streams.
const GARNET_TAG: u64 = 1;

// ---------------------------------------------------------------------------
// QTable
// ---------------------------------------------------------------------------

/// An `|X| x |U|` table of action values, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        QTable {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "expected {}x{} = {} values, got {}",
                num_states,
                num_actions,
                num_states * num_actions,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite Q value at flat index {bad}"
            )));
        }
        Ok(QTable {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `max_u q(x, u)` for every state, written into `out`.
    pub(crate) fn state_max_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.num_states);
        for (x, slot) in out.iter_mut().enumerate() {
            let row = &self.values[x * self.num_actions..(x + 1) * self.num_actions];
            *slot = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        }
    }

    pub(crate) fn state_max(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        self.state_max_into(&mut out);
        out
    }

    /// Largest absolute entrywise difference against `other`.
    pub fn linf_distance(&self, other: &QTable) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

/// Deterministic policy: one action index per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }
}

/// Per-state argmax of the Q-table; ties break toward the lowest action
/// index.
pub fn greedy_policy(q: &QTable) -> Policy {
    let (num_states, num_actions) = q.dims();
    let mut actions = Vec::with_capacity(num_states);
    for x in 0..num_states {
        let mut best = 0;
        for u in 1..num_actions {
            if q.get(x, u) > q.get(x, best) {
                best = u;
            }
        }
        actions.push(best);
    }
    Policy { actions }
}

// ---------------------------------------------------------------------------
// MdpInstance
// ---------------------------------------------------------------------------

/// Explicit finite MDP: transition tensor `P[x][u][x']`, reward table
/// `r(x,u)`, discount factor, and reward-noise scale.
///
/// Instances are immutable after construction and safe to share across
/// threads. Rows of the transition tensor always sum to one exactly (they
/// are renormalized on ingestion when off by at most `1e-9`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct MdpInstance {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    sigma_r: f64,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
}

/// Wire form of an instance: row-major arrays plus dimensions.
#[derive(Serialize, Deserialize)]
struct RawMdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    sigma_r: f64,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
}

impl TryFrom<RawMdp> for MdpInstance {
    type Error = Error;

    fn try_from(raw: RawMdp) -> Result<Self> {
        MdpInstance::from_flat(
            raw.num_states,
            raw.num_actions,
            raw.transitions,
            raw.rewards,
            raw.gamma,
            raw.sigma_r,
        )
    }
}

impl From<MdpInstance> for RawMdp {
    fn from(mdp: MdpInstance) -> RawMdp {
        RawMdp {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            gamma: mdp.gamma,
            sigma_r: mdp.sigma_r,
            rewards: mdp.rewards,
            transitions: mdp.transitions,
        }
    }
}

impl MdpInstance {
    /// Build a validated instance from nested tables: `transitions[x][u]`
    /// is the distribution over next states, `rewards[x][u]` the immediate
    /// reward.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
        sigma_r: f64,
    ) -> Result<Self> {
        let num_states = transitions.len();
        if num_states == 0 {
            return Err(Error::Dimension("instance has no states".into()));
        }
        let num_actions = transitions[0].len();
        if rewards.len() != num_states {
            return Err(Error::Dimension(format!(
                "rewards table has {} state rows, transitions have {}",
                rewards.len(),
                num_states
            )));
        }
        let mut flat_t = Vec::with_capacity(num_states * num_actions * num_states);
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for (x, (t_row, r_row)) in transitions.iter().zip(&rewards).enumerate() {
            if t_row.len() != num_actions || r_row.len() != num_actions {
                return Err(Error::Dimension(format!(
                    "state {x} has {} transition rows and {} rewards, expected {num_actions}",
                    t_row.len(),
                    r_row.len()
                )));
            }
            for (u, dist) in t_row.iter().enumerate() {
                if dist.len() != num_states {
                    return Err(Error::Dimension(format!(
                        "transition row at (x={x}, u={u}) has length {}, expected {num_states}",
                        dist.len()
                    )));
                }
                flat_t.extend_from_slice(dist);
            }
            flat_r.extend_from_slice(r_row);
        }
        MdpInstance::from_flat(num_states, num_actions, flat_t, flat_r, gamma, sigma_r)
    }

    /// Build from row-major flat arrays (the JSON wire layout).
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        mut transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        sigma_r: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension(
                "state and action counts must be positive".into(),
            ));
        }
        let d = num_states * num_actions;
        if transitions.len() != d * num_states {
            return Err(Error::Dimension(format!(
                "transitions length {} != |X|*|U|*|X| = {}",
                transitions.len(),
                d * num_states
            )));
        }
        if rewards.len() != d {
            return Err(Error::Dimension(format!(
                "rewards length {} != |X|*|U| = {}",
                rewards.len(),
                d
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidGamma(gamma));
        }
        if !(sigma_r >= 0.0 && sigma_r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_r must be finite and nonnegative, got {sigma_r}"
            )));
        }
        if let Some(bad) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite reward at flat index {bad}"
            )));
        }
        for x in 0..num_states {
            for u in 0..num_actions {
                let row = &mut transitions[(x * num_actions + u) * num_states..][..num_states];
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::NegativeProbability {
                            state: x,
                            action: u,
                            next,
                            value: p,
                        });
                    }
                }
                let sum = linalg::pairwise_sum(row);
                if (sum - 1.0).abs() > ROW_SUM_SLACK {
                    return Err(Error::NotStochastic {
                        state: x,
                        action: u,
                        sum,
                    });
                }
                // Rows already stochastic to 1e-12 pass through untouched,
                // which makes ingestion idempotent and keeps serialization
                // round trips bit-exact.
                if (sum - 1.0).abs() > 1e-12 {
                    for p in row.iter_mut() {
                        *p /= sum;
                    }
                }
            }
        }
        Ok(MdpInstance {
            num_states,
            num_actions,
            gamma,
            sigma_r,
            rewards,
            transitions,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `D = |X| * |U|`, the number of state-action pairs.
    pub fn pair_count(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    pub(crate) fn rewards_flat(&self) -> &[f64] {
        &self.rewards
    }

    #[inline]
    pub fn transition(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions[(state * self.num_actions + action) * self.num_states + next]
    }

    /// Distribution over next states for one (x,u) pair.
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.rewards.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Same kernel and rewards under a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidGamma(gamma));
        }
        let mut out = self.clone();
        out.gamma = gamma;
        Ok(out)
    }

    /// Same instance under a different reward-noise scale.
    pub fn with_sigma_r(&self, sigma_r: f64) -> Result<Self> {
        if !(sigma_r >= 0.0 && sigma_r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_r must be finite and nonnegative, got {sigma_r}"
            )));
        }
        let mut out = self.clone();
        out.sigma_r = sigma_r;
        Ok(out)
    }
}

/// Read an instance from a JSON file.
pub fn read_instance(path: impl AsRef<Path>) -> Result<MdpInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Write an instance to a JSON file.
pub fn write_instance(mdp: &MdpInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(mdp)?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Benchmark families
// ---------------------------------------------------------------------------

/// Random Garnet MDP: each (x,u) row has exactly `branching` reachable next
/// states chosen uniformly without replacement, with probabilities given by
/// the gaps between `branching - 1` uniform cut points on [0,1]. Rewards are
/// i.i.d. Uniform[0,1]. Deterministic given `seed`.
///
/// The discount factor defaults to 0.9 and the reward-noise scale to 0;
/// override with [`MdpInstance::with_gamma`] / [`MdpInstance::with_sigma_r`].
pub fn garnet(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    seed: u64,
) -> Result<MdpInstance> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::Dimension(
            "state and action counts must be positive".into(),
        ));
    }
    if branching == 0 || branching > num_states {
        return Err(Error::InvalidParameter(format!(
            "branching factor must satisfy 1 <= b <= |X|, got b={branching}, |X|={num_states}"
        )));
    }
    let mut stream = RngStream::from_key(derive_key(seed, 0, GARNET_TAG));
    let d = num_states * num_actions;
    let mut transitions = vec![0.0; d * num_states];
    let mut scratch: Vec<usize> = Vec::new();
    let mut cuts: Vec<f64> = Vec::with_capacity(branching + 1);
    for pair in 0..d {
        // Support: partial Fisher-Yates over the state indices.
        scratch.clear();
        scratch.extend(0..num_states);
        for i in 0..branching {
            let j = i + stream.next_index(num_states - i);
            scratch.swap(i, j);
        }
        // Probabilities: gaps between sorted uniform cut points. Redraw on
        // a coincident pair so the support stays exactly `branching` wide.
        let probs = loop {
            cuts.clear();
            cuts.push(0.0);
            for _ in 0..branching - 1 {
                cuts.push(stream.next_f64());
            }
            cuts.push(1.0);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if cuts.windows(2).all(|w| w[1] > w[0]) {
                break cuts.windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
            }
        };
        let row = &mut transitions[pair * num_states..(pair + 1) * num_states];
        for (state, p) in scratch[..branching].iter().zip(probs) {
            row[*state] = p;
        }
    }
    let rewards: Vec<f64> = (0..d).map(|_| stream.next_f64()).collect();
    MdpInstance::from_flat(num_states, num_actions, transitions, rewards, 0.9, 0.0)
}

/// The two-state, one-action hard instance: state 1 stays put with
/// probability `p = (4*gamma - 1) / (3*gamma)` and otherwise falls into the
/// absorbing state 2. Rewards are `((1-gamma)^beta, 0)` with no reward
/// noise, which makes the leading complexity measure scale as
/// `(1-gamma)^(beta - 1.5)`.
pub fn hard_two_state(gamma: f64, beta: f64) -> Result<MdpInstance> {
    if !(gamma > 0.25 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "hard_two_state requires gamma in (1/4, 1), got {gamma}"
        )));
    }
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "hard_two_state requires beta >= 0, got {beta}"
        )));
    }
    let p = (4.0 * gamma - 1.0) / (3.0 * gamma);
    let r1 = (1.0 - gamma).powf(beta);
    MdpInstance::new(
        vec![vec![vec![p, 1.0 - p]], vec![vec![0.0, 1.0]]],
        vec![vec![r1], vec![0.0]],
        gamma,
        0.0,
    )
}

// ---------------------------------------------------------------------------
// Exact solvers
// ---------------------------------------------------------------------------

/// Optimal Q-function by value iteration from zero with the exact Bellman
/// operator. The returned table satisfies
/// `||q - T(q)||_inf <= tol * (1 - gamma)`, which implies
/// `||q - Q*||_inf <= tol`.
pub fn exact_optimal_q(mdp: &MdpInstance, tol: f64) -> Result<QTable> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (num_states, num_actions) = mdp.dims();
    let gamma = mdp.gamma();
    let r_inf = mdp.max_abs_reward();
    if r_inf == 0.0 {
        return Ok(QTable::zeros(num_states, num_actions));
    }
    let threshold = tol * (1.0 - gamma);
    // gamma-contraction from zero needs ~ log(r_inf / (tol (1-gamma)^2))
    // iterations; cap at 10x that.
    let ratio = r_inf / (tol * (1.0 - gamma) * (1.0 - gamma));
    let cap = ((10.0 * ratio.ln() / (1.0 / gamma).ln()).ceil().max(16.0)) as u64;
    let mut cur = QTable::zeros(num_states, num_actions);
    for _ in 0..cap {
        let next = crate::operators::bellman(mdp, &cur);
        let delta = next.linf_distance(&cur);
        if delta <= threshold {
            return Ok(next);
        }
        cur = next;
    }
    let residual = crate::operators::bellman(mdp, &cur).linf_distance(&cur);
    Err(Error::NonConvergence { cap, residual })
}

/// Policy evaluation by direct elimination: solves `(I - gamma * P) theta = r`
/// with partially pivoted LU. Requires a single-action instance.
pub fn policy_eval_direct(mdp: &MdpInstance) -> Result<QTable> {
    if mdp.num_actions() != 1 {
        return Err(Error::NotPolicyEvaluation {
            actions: mdp.num_actions(),
        });
    }
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    let mut a = vec![0.0; n * n];
    for x in 0..n {
        let row = mdp.transition_row(x, 0);
        for next in 0..n {
            a[x * n + next] = -gamma * row[next];
        }
        a[x * n + x] += 1.0;
    }
    let theta = linalg::solve(&a, n, mdp.rewards_flat())?;
    // Residual check against the raw system.
    let mut residual = 0.0f64;
    for x in 0..n {
        let ax = linalg::pairwise_dot(&a[x * n..(x + 1) * n], &theta);
        residual = residual.max((ax - mdp.reward(x, 0)).abs());
    }
    let tolerance = 1e-10 * mdp.max_abs_reward();
    if residual > tolerance {
        return Err(Error::ResidualTooLarge {
            residual,
            tolerance,
        });
    }
    QTable::from_values(n, 1, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_legal_mdp_is_accepted() {
        let mdp = MdpInstance::new(vec![vec![vec![1.0]]], vec![vec![0.5]], 0.9, 0.0).unwrap();
        assert_eq!(mdp.dims(), (1, 1));
        assert_eq!(mdp.reward(0, 0), 0.5);
    }

    #[test]
    fn near_stochastic_row_is_renormalized_exactly() {
        let mdp =
            MdpInstance::new(vec![vec![vec![1.0 + 5e-10]]], vec![vec![0.0]], 0.9, 0.0).unwrap();
        assert_eq!(mdp.transition(0, 0, 0), 1.0);
        // Beyond the ingestion slack the row is rejected, never fixed.
        assert!(MdpInstance::new(vec![vec![vec![1.0 + 1e-7]]], vec![vec![0.0]], 0.9, 0.0).is_err());
    }

    #[test]
    fn non_stochastic_row_is_rejected_with_location() {
        let err = MdpInstance::new(vec![vec![vec![0.5]]], vec![vec![0.0]], 0.9, 0.0).unwrap_err();
        match err {
            Error::NotStochastic { state, action, sum } => {
                assert_eq!((state, action), (0, 0));
                assert!((sum - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn negative_probability_and_bad_gamma_are_rejected() {
        assert!(matches!(
            MdpInstance::new(
                vec![vec![vec![1.5, -0.5]], vec![vec![0.0, 1.0]]],
                vec![vec![0.0], vec![0.0]],
                0.9,
                0.0
            ),
            Err(Error::NegativeProbability {
                state: 0,
                action: 0,
                next: 1,
                ..
            })
        ));
        assert!(matches!(
            MdpInstance::new(vec![vec![vec![1.0]]], vec![vec![0.0]], 1.0, 0.0),
            Err(Error::InvalidGamma(_))
        ));
    }

    #[test]
    fn garnet_rows_have_exact_branching_support() {
        let mdp = garnet(20, 2, 2, 314).unwrap();
        for x in 0..20 {
            for u in 0..2 {
                let row = mdp.transition_row(x, u);
                let nonzero = row.iter().filter(|&&p| p > 0.0).count();
                assert_eq!(nonzero, 2, "row ({x},{u})");
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        for x in 0..20 {
            for u in 0..2 {
                let r = mdp.reward(x, u);
                assert!((0.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn garnet_branching_one_gives_point_masses() {
        let mdp = garnet(5, 1, 1, 9).unwrap();
        for x in 0..5 {
            let row = mdp.transition_row(x, 0);
            assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&p| p == 0.0).count(), 4);
        }
    }

    #[test]
    fn garnet_is_deterministic_per_seed() {
        let a = garnet(20, 2, 2, 77).unwrap();
        let b = garnet(20, 2, 2, 77).unwrap();
        let bits = |m: &MdpInstance| -> Vec<u64> {
            m.rewards_flat()
                .iter()
                .chain((0..m.num_states()).flat_map(|x| {
                    (0..m.num_actions()).flat_map(move |u| m.transition_row(x, u).iter())
                }))
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = garnet(20, 2, 2, 78).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn garnet_rejects_branching_above_state_count() {
        assert!(garnet(3, 1, 4, 0).is_err());
    }

    #[test]
    fn hard_two_state_matches_closed_forms() {
        let mdp = hard_two_state(0.96, 0.0).unwrap();
        let p = mdp.transition(0, 0, 0);
        assert!((p - 2.84 / 2.88).abs() < 1e-15);
        assert_eq!(mdp.transition(1, 0, 1), 1.0);
        assert_eq!(mdp.reward(0, 0), 1.0);
        assert_eq!(mdp.reward(1, 0), 0.0);
        assert_eq!(mdp.sigma_r(), 0.0);

        let theta = exact_optimal_q(&mdp, 1e-10).unwrap();
        assert!((theta.get(0, 0) - 18.75).abs() < 1e-10);
        assert!(theta.get(1, 0).abs() < 1e-10);
    }

    #[test]
    fn hard_two_state_rejects_gamma_at_quarter() {
        assert!(hard_two_state(0.25, 0.0).is_err());
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = MdpInstance::new(vec![vec![vec![1.0]]], vec![vec![0.5]], 0.9, 0.0).unwrap();
        let q = exact_optimal_q(&mdp, 1e-10).unwrap();
        assert!((q.get(0, 0) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_meets_its_residual_postcondition() {
        for seed in [1u64, 2, 3] {
            let mdp = garnet(12, 3, 4, seed).unwrap();
            let tol = 1e-10;
            let q = exact_optimal_q(&mdp, tol).unwrap();
            let image = crate::operators::bellman(&mdp, &q);
            assert!(q.linf_distance(&image) <= tol * (1.0 - mdp.gamma()));
        }
    }

    #[test]
    fn direct_solve_matches_closed_form_two_state() {
        let gamma = 0.96;
        let beta = 0.2;
        let mdp = hard_two_state(gamma, beta).unwrap();
        let theta = policy_eval_direct(&mdp).unwrap();
        let expect = (1.0 - gamma).powf(beta) * 3.0 / (4.0 * (1.0 - gamma));
        assert!((theta.get(0, 0) - expect).abs() < 1e-12 * expect);
        assert!(theta.get(1, 0).abs() < 1e-14);
    }

    #[test]
    fn constant_reward_chain_evaluates_to_horizon() {
        let third = 1.0 / 3.0;
        let row = vec![third, third, third];
        let mdp = MdpInstance::new(
            vec![vec![row.clone()], vec![row.clone()], vec![row]],
            vec![vec![1.0], vec![1.0], vec![1.0]],
            0.85,
            0.0,
        )
        .unwrap();
        let theta = policy_eval_direct(&mdp).unwrap();
        for x in 0..3 {
            assert!((theta.get(x, 0) - 1.0 / 0.15).abs() < 1e-9);
        }
    }

    #[test]
    fn direct_solve_requires_single_action() {
        let mdp = garnet(4, 2, 2, 5).unwrap();
        assert!(matches!(
            policy_eval_direct(&mdp),
            Err(Error::NotPolicyEvaluation { actions: 2 })
        ));
    }

    #[test]
    fn oracles_agree_on_single_action_garnets() {
        for seed in 0..50u64 {
            let mdp = garnet(15, 1, 3, seed).unwrap();
            let vi = exact_optimal_q(&mdp, 1e-10).unwrap();
            let direct = policy_eval_direct(&mdp).unwrap();
            assert!(
                vi.linf_distance(&direct) <= 1e-8,
                "seed {seed}: disagreement {}",
                vi.linf_distance(&direct)
            );
        }
    }

    #[test]
    fn greedy_policy_argmax_and_ties() {
        let q = QTable::from_values(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(greedy_policy(&q).action(0), 1);
        let tie = QTable::from_values(1, 2, vec![2.0, 2.0]).unwrap();
        assert_eq!(greedy_policy(&tie).action(0), 0);
    }

    #[test]
    fn instance_json_round_trips() {
        let mdp = garnet(8, 2, 3, 123).unwrap().with_sigma_r(0.25).unwrap();
        let text = serde_json::to_string(&mdp).unwrap();
        let back: MdpInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn instance_json_rejects_invalid_payload() {
        let text = r#"{"num_states":1,"num_actions":1,"gamma":0.9,"sigma_r":0.0,
                       "rewards":[0.0],"transitions":[0.5]}"#;
        assert!(serde_json::from_str::<MdpInstance>(text).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            seed in 0u64..1000,
            gamma in 0.05f64..0.99,
            sigma in 0.0f64..2.0,
        ) {
            let mdp = garnet(6, 2, 3, seed).unwrap()
                .with_gamma(gamma).unwrap()
                .with_sigma_r(sigma).unwrap();
            let text = serde_json::to_string(&mdp).unwrap();
            let back: MdpInstance = serde_json::from_str(&text).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(mdp.rewards_flat()), bits(back.rewards_flat()));
            prop_assert_eq!(mdp.gamma().to_bits(), back.gamma().to_bits());
            prop_assert_eq!(mdp.sigma_r().to_bits(), back.sigma_r().to_bits());
            for x in 0..6 {
                for u in 0..2 {
                    prop_assert_eq!(
                        bits(mdp.transition_row(x, u)),
                        bits(back.transition_row(x, u))
                    );
                }
            }
        }

        #[test]
        fn greedy_policy_invariant_under_shift_and_scale(
            // Dyadic grids and power-of-two scales keep the arithmetic
            // exact, so ties are preserved rather than manufactured by
            // rounding.
            grid in proptest::collection::vec(-160i32..160, 6),
            shift_grid in -80i32..80,
            scale_exp in -3i32..4,
        ) {
            let values: Vec<f64> = grid.iter().map(|&v| v as f64 / 16.0).collect();
            let shift = shift_grid as f64 / 16.0;
            let scale = (2.0f64).powi(scale_exp);
            let q = QTable::from_values(3, 2, values.clone()).unwrap();
            let shifted = QTable::from_values(
                3, 2, values.iter().map(|v| v + shift).collect()).unwrap();
            let scaled = QTable::from_values(
                3, 2, values.iter().map(|v| v * scale).collect()).unwrap();
            prop_assert_eq!(greedy_policy(&q), greedy_policy(&shifted));
            prop_assert_eq!(greedy_policy(&q), greedy_policy(&scaled));
        }
    }
}
