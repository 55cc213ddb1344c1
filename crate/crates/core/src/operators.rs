//! Exact and empirical Bellman operators, their recentered forms, norms,
//! the effective variance, and the instance-dependent complexity measures.
//!
//! All functions here are pure over immutable inputs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{policy_eval_direct, MdpInstance, QTable};
use crate::sampling::{check_sample_dims, GenerativeSample, RngStream, Simulator};

/// Exact Bellman operator: entry `(x,u)` is
/// `r(x,u) + gamma * sum_x' P(x'|x,u) * max_u' q(x',u')`.
/// A gamma-contraction in the sup norm; the optimal Q-function is its
/// unique fixed point.
pub fn bellman(mdp: &MdpInstance, q: &QTable) -> QTable {
    let (num_states, num_actions) = mdp.dims();
    debug_assert_eq!(q.dims(), mdp.dims());
    let max_next = q.state_max();
    let gamma = mdp.gamma();
    let mut out = QTable::zeros(num_states, num_actions);
    for x in 0..num_states {
        for u in 0..num_actions {
            let expect = linalg::pairwise_dot(mdp.transition_row(x, u), &max_next);
            out.set(x, u, mdp.reward(x, u) + gamma * expect);
        }
    }
    out
}

/// Empirical Bellman operator for one generative draw: entry `(x,u)` is
/// `reward_obs(x,u) + gamma * max_u' q(next_state(x,u), u')`. Unbiased for
/// [`bellman`] and itself a gamma-contraction for any fixed sample.
pub fn empirical_bellman(sample: &GenerativeSample, q: &QTable, mdp: &MdpInstance) -> QTable {
    check_sample_dims(sample, mdp).expect("sample dims must match instance");
    let (num_states, num_actions) = mdp.dims();
    let max_next = q.state_max();
    let gamma = mdp.gamma();
    let mut out = QTable::zeros(num_states, num_actions);
    {
        let values = out.as_mut_slice();
        for (slot, (&ns, &r_obs)) in values
            .iter_mut()
            .zip(sample.next_states().iter().zip(sample.rewards()))
        {
            *slot = r_obs + gamma * max_next[ns as usize];
        }
    }
    out
}

/// Recentered empirical operator:
/// `T_hat(q) - T_hat(anchor) + anchor_image`, with both empirical
/// applications evaluated on the same draw. Sharing the draw is what makes
/// the difference term small when `q` is close to the anchor.
pub fn recentered_bellman(
    sample: &GenerativeSample,
    q: &QTable,
    anchor: &QTable,
    anchor_image: &QTable,
    mdp: &MdpInstance,
) -> QTable {
    let at_q = empirical_bellman(sample, q, mdp);
    let at_anchor = empirical_bellman(sample, anchor, mdp);
    let (num_states, num_actions) = mdp.dims();
    let mut out = QTable::zeros(num_states, num_actions);
    {
        let values = out.as_mut_slice();
        for (i, slot) in values.iter_mut().enumerate() {
            *slot = at_q.as_slice()[i] - at_anchor.as_slice()[i] + anchor_image.as_slice()[i];
        }
    }
    out
}

/// Monte-Carlo estimate of `T(anchor)`: the average of `n_recenter`
/// independent empirical Bellman applications at the anchor. Consumes
/// `n_recenter` draws.
pub fn monte_carlo_bellman(
    mdp: &MdpInstance,
    anchor: &QTable,
    n_recenter: u64,
    stream: &mut RngStream,
) -> Result<QTable> {
    if n_recenter == 0 {
        return Err(Error::InvalidParameter(
            "monte_carlo_bellman needs at least one draw".into(),
        ));
    }
    let mut sim = Simulator::new(mdp);
    Ok(monte_carlo_bellman_with(
        &mut sim, anchor, n_recenter, stream,
    ))
}

/// Same as [`monte_carlo_bellman`] but drawing through an existing
/// simulator so the caller keeps one running sample count.
pub(crate) fn monte_carlo_bellman_with(
    sim: &mut Simulator<'_>,
    anchor: &QTable,
    n_recenter: u64,
    stream: &mut RngStream,
) -> QTable {
    let (num_states, num_actions) = anchor.dims();
    debug_assert_eq!(anchor.dims(), sim.instance().dims());
    let gamma = sim.instance().gamma();
    let max_anchor = anchor.state_max();
    let mut avg = QTable::zeros(num_states, num_actions);
    let mut sample = sim.draw(stream);
    apply_at_anchor(&mut avg, &sample, &max_anchor, gamma, 1);
    for i in 2..=n_recenter {
        sim.draw_into(stream, &mut sample);
        apply_at_anchor(&mut avg, &sample, &max_anchor, gamma, i);
    }
    avg
}

/// Fold one empirical application at the anchor into the running average:
/// `avg += (sample_value - avg) / i`.
fn apply_at_anchor(
    avg: &mut QTable,
    sample: &GenerativeSample,
    max_anchor: &[f64],
    gamma: f64,
    i: u64,
) {
    let inv = 1.0 / i as f64;
    let values = avg.as_mut_slice();
    for (slot, (&ns, &r_obs)) in values
        .iter_mut()
        .zip(sample.next_states().iter().zip(sample.rewards()))
    {
        let v = r_obs + gamma * max_anchor[ns as usize];
        *slot += (v - *slot) * inv;
    }
}

/// Maximum absolute entry.
pub fn linf_norm(q: &QTable) -> f64 {
    q.as_slice().iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Span seminorm: maximum entry minus minimum entry. Invariant to constant
/// shifts, and `span(q) <= 2 * linf(q)`.
pub fn span_seminorm(q: &QTable) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in q.as_slice() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// The effective variance matrix: entry `(x,u)` is
/// `gamma^2 * Var_{x' ~ P(.|x,u)}[ max_u' q(x',u') ]`, computed exactly
/// from the kernel.
#[derive(Clone, Debug)]
pub struct EffectiveVariance {
    pub values: QTable,
}

impl EffectiveVariance {
    pub fn max_entry(&self) -> f64 {
        linf_norm(&self.values)
    }
}

pub fn effective_variance(mdp: &MdpInstance, q: &QTable) -> EffectiveVariance {
    let (num_states, num_actions) = mdp.dims();
    debug_assert_eq!(q.dims(), mdp.dims());
    let max_next = q.state_max();
    let gamma_sq = mdp.gamma() * mdp.gamma();
    let mut out = QTable::zeros(num_states, num_actions);
    for x in 0..num_states {
        for u in 0..num_actions {
            let row = mdp.transition_row(x, u);
            let mean = linalg::pairwise_dot(row, &max_next);
            // Two-pass variance keeps the result nonnegative.
            let var: f64 = row
                .iter()
                .zip(&max_next)
                .map(|(&p, &m)| p * (m - mean) * (m - mean))
                .sum();
            out.set(x, u, gamma_sq * var);
        }
    }
    EffectiveVariance { values: out }
}

/// Instance-dependent complexity measures for policy-evaluation instances:
/// functionals of `(I - gamma P)^{-1}` and the next-state value covariance
/// that set the local estimation difficulty.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComplexityMeasures {
    /// Transition-noise measure `v`.
    pub v: f64,
    /// Reward-noise measure `rho`; zero whenever `sigma_r = 0`.
    pub rho: f64,
    /// Span seminorm of the value function.
    #[serde(rename = "span")]
    pub span_theta: f64,
}

/// Compute the complexity measures of a single-action instance. The value
/// function comes from the direct solver; `(I - gamma P)^{-1}` is obtained
/// by solving one unit system per state against a single partially pivoted
/// factorization.
pub fn complexity_measures(mdp: &MdpInstance) -> Result<ComplexityMeasures> {
    if mdp.num_actions() != 1 {
        return Err(Error::NotPolicyEvaluation {
            actions: mdp.num_actions(),
        });
    }
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    let theta = policy_eval_direct(mdp)?;
    let values = theta.as_slice();

    // Per-state variance of the next-state value under the kernel.
    let mut cov_diag = vec![0.0; n];
    for (x, slot) in cov_diag.iter_mut().enumerate() {
        let row = mdp.transition_row(x, 0);
        let mean = linalg::pairwise_dot(row, values);
        *slot = row
            .iter()
            .zip(values)
            .map(|(&p, &t)| p * (t - mean) * (t - mean))
            .sum();
    }

    let mut a = vec![0.0; n * n];
    for x in 0..n {
        let row = mdp.transition_row(x, 0);
        for next in 0..n {
            a[x * n + next] = -gamma * row[next];
        }
        a[x * n + x] += 1.0;
    }
    let inv = linalg::invert(&a, n)?;

    let mut v_sq: f64 = 0.0;
    let mut rho_sq: f64 = 0.0;
    for i in 0..n {
        let row = &inv[i * n..(i + 1) * n];
        let weighted: f64 = row.iter().zip(&cov_diag).map(|(&a, &c)| a * a * c).sum();
        let plain: f64 = row.iter().map(|&a| a * a).sum();
        v_sq = v_sq.max(weighted);
        rho_sq = rho_sq.max(plain);
    }

    Ok(ComplexityMeasures {
        v: v_sq.sqrt(),
        rho: mdp.sigma_r() * rho_sq.sqrt(),
        span_theta: span_seminorm(&theta),
    })
}
