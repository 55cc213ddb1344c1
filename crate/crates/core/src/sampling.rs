//! The synchronous generative model: one independent next-state draw for
//! every state-action pair per iteration, plus noisy reward observations.
//!
//! All randomness in the crate flows through [`RngStream`], a counter-based
//! splitmix64 generator. A stream is keyed by `(root_seed, trial_id)`, so
//! parallel trials never share state and any trial can be replayed in
//! isolation. Each generative draw additionally forks a per-draw substream,
//! which makes the draw's content independent of how many values earlier
//! draws consumed (e.g. whether reward noise was enabled).

use crate::error::{Error, Result};
use crate::mdp::MdpInstance;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer (Sebastiano Vigna); bijective on u64.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream key from a root seed, a stream id, and a domain tag.
/// Distinct ids under the same root always produce distinct keys.
pub(crate) fn derive_key(root_seed: u64, id: u64, tag: u64) -> u64 {
    let base = mix64(root_seed ^ tag.wrapping_mul(0xA076_1D64_78BD_642F));
    mix64(base.wrapping_add(id.wrapping_mul(GOLDEN)))
}

/// Counter-based pseudo-random stream. Output `n` is a pure function of
/// `(key, n)`; advancing the stream only bumps the counter.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    pub(crate) fn from_key(key: u64) -> Self {
        RngStream { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 / DEN
    }

    /// Uniform double in the open interval `(0, 1)`.
    #[inline]
    fn next_open_f64(&mut self) -> f64 {
        loop {
            let v = self.next_f64();
            if v > 0.0 {
                return v;
            }
        }
    }

    /// Uniform index in `0..bound` (fixed-point multiply; bias O(bound/2^64)).
    #[inline]
    pub fn next_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    /// Standard normal via the Box-Muller transform.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_open_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Reproducible, statistically independent child stream for one trial.
/// Different `trial_id`s never share a stream.
pub fn spawn_stream(root_seed: u64, trial_id: u64) -> RngStream {
    RngStream::from_key(derive_key(root_seed, trial_id, 0))
}

/// Count of full synchronous draws. One draw supplies `D = |X| * |U|`
/// next-state samples, matching the convention that sample counts are a
/// factor of `D` larger than iteration counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleCounter {
    draws: u64,
}

impl SampleCounter {
    pub fn new() -> Self {
        SampleCounter { draws: 0 }
    }

    pub fn record(&mut self, draws: u64) {
        self.draws += draws;
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

/// One synchronous draw: a next state and a noisy reward for every (x,u).
#[derive(Clone, Debug)]
pub struct GenerativeSample {
    num_actions: usize,
    next_state: Vec<u32>,
    reward_obs: Vec<f64>,
}

impl GenerativeSample {
    pub(crate) fn with_dims(num_states: usize, num_actions: usize) -> Self {
        let d = num_states * num_actions;
        GenerativeSample {
            num_actions,
            next_state: vec![0; d],
            reward_obs: vec![0.0; d],
        }
    }

    #[inline]
    pub fn next_state(&self, state: usize, action: usize) -> usize {
        self.next_state[state * self.num_actions + action] as usize
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward_obs[state * self.num_actions + action]
    }

    pub(crate) fn next_states(&self) -> &[u32] {
        &self.next_state
    }

    pub(crate) fn rewards(&self) -> &[f64] {
        &self.reward_obs
    }
}

/// Cumulative distribution over the nonzero entries of one transition row.
struct RowCdf {
    support: Vec<u32>,
    cum: Vec<f64>,
}

impl RowCdf {
    fn build(row: &[f64]) -> Self {
        let mut support = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                support.push(next as u32);
                cum.push(acc);
            }
        }
        RowCdf { support, cum }
    }

    #[inline]
    fn sample(&self, u: f64) -> u32 {
        // First support point whose cumulative mass exceeds u; the final
        // entry absorbs any rounding shortfall in the row sum.
        match self.cum.partition_point(|&c| c <= u) {
            i if i < self.support.len() => self.support[i],
            _ => *self.support.last().expect("nonempty row"),
        }
    }
}

/// Generative-model simulator for a fixed instance. Owns the row CDFs and
/// the sample counter; all draws are pure given the stream state.
pub struct Simulator<'a> {
    mdp: &'a MdpInstance,
    rows: Vec<RowCdf>,
    counter: SampleCounter,
}

impl<'a> Simulator<'a> {
    pub fn new(mdp: &'a MdpInstance) -> Self {
        let (num_states, num_actions) = mdp.dims();
        let mut rows = Vec::with_capacity(num_states * num_actions);
        for x in 0..num_states {
            for u in 0..num_actions {
                rows.push(RowCdf::build(mdp.transition_row(x, u)));
            }
        }
        Simulator {
            mdp,
            rows,
            counter: SampleCounter::new(),
        }
    }

    pub fn counter(&self) -> &SampleCounter {
        &self.counter
    }

    pub fn instance(&self) -> &MdpInstance {
        self.mdp
    }

    /// Draw one synchronous sample: `next_state[x][u] ~ P_u(.|x)`
    /// independently across pairs, `reward_obs = r + sigma_r * g` with `g`
    /// standard normal. Advances the parent stream by exactly one tick.
    pub fn draw(&mut self, stream: &mut RngStream) -> GenerativeSample {
        let (num_states, num_actions) = self.mdp.dims();
        let mut sample = GenerativeSample::with_dims(num_states, num_actions);
        self.draw_into(stream, &mut sample);
        sample
    }

    pub fn draw_into(&mut self, stream: &mut RngStream, out: &mut GenerativeSample) {
        debug_assert_eq!(out.next_state.len(), self.rows.len());
        let mut sub = RngStream::from_key(stream.next_u64());
        for (slot, row) in out.next_state.iter_mut().zip(&self.rows) {
            *slot = row.sample(sub.next_f64());
        }
        let sigma_r = self.mdp.sigma_r();
        out.reward_obs.copy_from_slice(self.mdp.rewards_flat());
        if sigma_r > 0.0 {
            for obs in out.reward_obs.iter_mut() {
                *obs += sigma_r * sub.next_normal();
            }
        }
        self.counter.record(1);
    }
}

/// One-shot draw from a fresh simulator. Loops that draw repeatedly should
/// hold a [`Simulator`] instead, which also keeps the running
/// [`SampleCounter`].
pub fn draw_sample(mdp: &MdpInstance, stream: &mut RngStream) -> GenerativeSample {
    Simulator::new(mdp).draw(stream)
}

/// Fail unless `|X| * |U|` matches between a sample and an instance.
pub(crate) fn check_sample_dims(sample: &GenerativeSample, mdp: &MdpInstance) -> Result<()> {
    let (num_states, num_actions) = mdp.dims();
    if sample.num_actions != num_actions || sample.next_state.len() != num_states * num_actions {
        return Err(Error::Dimension(format!(
            "sample holds {} pairs, instance has {}x{}",
            sample.next_state.len(),
            num_states,
            num_actions
        )));
    }
    Ok(())
}
