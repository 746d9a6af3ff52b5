//! Samplers for the killing time and pre-kill location.
//!
//! The kill time is the first crossing of the integrated hazard
//! `int_0^t kappa(Y_s) ds` over an independent Exp(1) threshold. For chains
//! the rate is constant between jumps, so killing competes with the jump
//! clock as an exponential race and the sampler is exact. On the ray the
//! crossing is solved by direct hazard inversion, or sampled by Poisson
//! thinning against a local rate bound; the two are distributionally
//! identical and tested against each other.

use crate::error::{Error, Result};
use crate::process::{GeneratorMatrix, RateFunction};
use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};

/// Default cap on simulation events per trajectory, guarding configurations
/// where killing is not almost sure.
pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

/// One killed trajectory's terminal data: the location occupied the instant
/// before the kill, the kill time, and the thinning rejection count (zero
/// for the exact samplers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitSample<L> {
    /// Pre-kill location (state index for chains, position for the ray).
    pub location: L,
    /// Kill time, strictly positive.
    pub time: f64,
    /// Rejected thinning proposals before the accepted kill.
    pub thinning_rejections: u64,
}

/// Exp(1) threshold plus the running integrated hazard of one trajectory.
///
/// The kill fires exactly when the accumulated hazard reaches the threshold;
/// `exp(-accumulated)` is the survival weight of the path so far.
#[derive(Debug, Clone, Copy)]
pub struct HazardAccumulator {
    threshold: f64,
    accumulated: f64,
}

impl HazardAccumulator {
    /// Accumulator with an explicit threshold (useful for injected,
    /// deterministic thresholds in tests).
    pub fn with_threshold(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidRate(format!(
                "hazard threshold must be positive and finite, got {threshold}"
            )));
        }
        Ok(Self {
            threshold,
            accumulated: 0.0,
        })
    }

    /// Draw a fresh Exp(1) threshold.
    pub fn draw(rng: &mut impl Rng) -> Self {
        Self {
            threshold: Exp1.sample(rng),
            accumulated: 0.0,
        }
    }

    /// Add a nonnegative hazard increment; returns true once the threshold
    /// is reached.
    pub fn accumulate(&mut self, delta: f64) -> bool {
        debug_assert!(delta >= 0.0, "hazard increments are nonnegative");
        self.accumulated += delta.max(0.0);
        self.crossed()
    }

    /// Whether the threshold has been reached.
    pub fn crossed(&self) -> bool {
        self.accumulated >= self.threshold
    }

    /// Hazard still to accumulate before the kill fires.
    pub fn remaining(&self) -> f64 {
        (self.threshold - self.accumulated).max(0.0)
    }

    /// Threshold xi.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Integrated hazard so far.
    pub fn accumulated(&self) -> f64 {
        self.accumulated
    }

    /// Survival weight `exp(-accumulated)` of the path so far.
    pub fn survival_weight(&self) -> f64 {
        (-self.accumulated).exp()
    }
}

/// Exact killed-chain sampler with precomputed jump tables.
///
/// Construction checks that a positive killing rate is reachable from every
/// state, so killing is almost sure on the finite chain; the event cap is a
/// second guard against misconfiguration.
#[derive(Debug, Clone)]
pub struct KilledChainSampler {
    hold_rate: Vec<f64>,   // q_i + kappa_i
    kill_prob: Vec<f64>,   // kappa_i / (q_i + kappa_i)
    kappa: Vec<f64>,
    // per state: (target, cumulative probability) over outgoing jumps
    jumps: Vec<Vec<(usize, f64)>>,
    event_cap: u64,
}

impl KilledChainSampler {
    /// Validate the pair and precompute jump tables.
    pub fn new(generator: &GeneratorMatrix, kappa: &RateFunction) -> Result<Self> {
        generator.validate()?;
        let n = generator.n();
        let table = kappa.as_table().ok_or_else(|| Error::RateOutOfDomain {
            query: "chain sampler".into(),
            reason: "killing rate must be a per-state table".into(),
        })?;
        if table.len() != n {
            return Err(Error::RateOutOfDomain {
                query: format!("table of {} rates", table.len()),
                reason: format!("chain has {n} states"),
            });
        }
        check_killing_reachable(generator, table)?;

        let mut hold_rate = Vec::with_capacity(n);
        let mut kill_prob = Vec::with_capacity(n);
        let mut jumps = Vec::with_capacity(n);
        for i in 0..n {
            let q_i = generator.exit_rate(i);
            let total = q_i + table[i];
            hold_rate.push(total);
            kill_prob.push(if total > 0.0 { table[i] / total } else { 0.0 });
            let mut row = Vec::new();
            let mut cum = 0.0;
            for j in 0..n {
                if j != i {
                    let r = generator.rate(i, j);
                    if r > 0.0 {
                        cum += r / q_i;
                        row.push((j, cum));
                    }
                }
            }
            if let Some(last) = row.last_mut() {
                last.1 = 1.0; // absorb rounding in the final cumulative weight
            }
            jumps.push(row);
        }
        Ok(Self {
            hold_rate,
            kill_prob,
            kappa: table.to_vec(),
            jumps,
            event_cap: DEFAULT_EVENT_CAP,
        })
    }

    /// Replace the per-trajectory event cap.
    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.hold_rate.len()
    }

    /// Killing rate of state `i`.
    pub fn kill_rate(&self, i: usize) -> f64 {
        self.kappa[i]
    }

    /// Sample one killed trajectory from `x0`.
    pub fn sample_exit(&self, x0: usize, rng: &mut impl Rng) -> Result<ExitSample<usize>> {
        self.sample_exit_observed(x0, rng, |_, _| {})
    }

    /// Sample one killed trajectory, reporting every `(state, dwell)` segment
    /// to the observer (the final segment ends exactly at the kill).
    pub fn sample_exit_observed(
        &self,
        x0: usize,
        rng: &mut impl Rng,
        mut observe: impl FnMut(usize, f64),
    ) -> Result<ExitSample<usize>> {
        if x0 >= self.n() {
            return Err(Error::RateOutOfDomain {
                query: format!("start state {x0}"),
                reason: format!("chain has {} states", self.n()),
            });
        }
        let mut state = x0;
        let mut t = 0.0;
        for _ in 0..self.event_cap {
            let total = self.hold_rate[state];
            debug_assert!(total > 0.0, "dead state passed construction");
            let dwell: f64 = Exp::new(total).expect("positive rate").sample(rng);
            t += dwell;
            observe(state, dwell);
            if rng.random::<f64>() < self.kill_prob[state] {
                return Ok(ExitSample {
                    location: state,
                    time: t,
                    thinning_rejections: 0,
                });
            }
            let row = &self.jumps[state];
            let u = rng.random::<f64>();
            let k = row.partition_point(|&(_, cum)| cum < u);
            state = row[k.min(row.len() - 1)].0;
        }
        Err(Error::KillingNotAlmostSure(format!(
            "no kill after {} events from state {x0}",
            self.event_cap
        )))
    }
}

/// States must all reach some positive killing rate through the jump graph.
fn check_killing_reachable(generator: &GeneratorMatrix, kappa: &[f64]) -> Result<()> {
    let n = generator.n();
    let mut reaches = vec![false; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| kappa[i] > 0.0).collect();
    for &i in &queue {
        reaches[i] = true;
    }
    if queue.is_empty() {
        return Err(Error::KillingNotAlmostSure(
            "killing rate is zero everywhere".into(),
        ));
    }
    while let Some(j) = queue.pop() {
        for i in 0..n {
            if !reaches[i] && generator.rate(i, j) > 0.0 {
                reaches[i] = true;
                queue.push(i);
            }
        }
    }
    if let Some(stuck) = (0..n).find(|&i| !reaches[i]) {
        return Err(Error::KillingNotAlmostSure(format!(
            "state {} (label {}) cannot reach any positive killing rate",
            stuck,
            generator.labels()[stuck]
        )));
    }
    Ok(())
}

/// Sample one killed chain trajectory (builds jump tables for this call;
/// use [`KilledChainSampler`] directly when drawing many trajectories).
pub fn sample_exit_ctmc(
    generator: &GeneratorMatrix,
    kappa: &RateFunction,
    x0: usize,
    rng: &mut impl Rng,
) -> Result<ExitSample<usize>> {
    KilledChainSampler::new(generator, kappa)?.sample_exit(x0, rng)
}

/// Deterministic hazard inversion: the exit reached when the integrated
/// hazard from `x0` hits `threshold`.
pub fn exit_at_hazard_threshold(
    kappa: &RateFunction,
    x0: f64,
    threshold: f64,
) -> Result<ExitSample<f64>> {
    let piecewise = kappa.as_piecewise().ok_or_else(|| Error::RateOutOfDomain {
        query: "ray sampler".into(),
        reason: "killing rate must be piecewise-polynomial".into(),
    })?;
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::RateOutOfDomain {
            query: format!("start {x0}"),
            reason: "ray positions are nonnegative".into(),
        });
    }
    let location = piecewise.solve_cumulative(x0, threshold)?;
    Ok(ExitSample {
        location,
        time: location - x0,
        thinning_rejections: 0,
    })
}

/// Exact ray sampler by hazard inversion: draw an Exp(1) threshold and solve
/// the integrated hazard crossing in closed form piece by piece.
pub fn sample_exit_ray_inversion(
    kappa: &RateFunction,
    x0: f64,
    rng: &mut impl Rng,
) -> Result<ExitSample<f64>> {
    let accumulator = HazardAccumulator::draw(rng);
    exit_at_hazard_threshold(kappa, x0, accumulator.threshold())
}

/// Ray sampler by Poisson thinning over windows of width `window`.
///
/// Proposals arrive at the exact local rate bound for each window and are
/// accepted with probability `kappa/bound`; the first accepted point is the
/// kill. Distributionally identical to [`sample_exit_ray_inversion`].
pub fn sample_exit_ray_thinning(
    kappa: &RateFunction,
    x0: f64,
    rng: &mut impl Rng,
    window: f64,
) -> Result<ExitSample<f64>> {
    let piecewise = kappa.as_piecewise().ok_or_else(|| Error::RateOutOfDomain {
        query: "ray sampler".into(),
        reason: "killing rate must be piecewise-polynomial".into(),
    })?;
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::RateOutOfDomain {
            query: format!("start {x0}"),
            reason: "ray positions are nonnegative".into(),
        });
    }
    if !(window > 0.0) || !window.is_finite() {
        return Err(Error::InvalidInterval { a: 0.0, b: window });
    }
    if !piecewise.integral_diverges() {
        return Err(Error::KillingNotAlmostSure(
            "rate has finite total integral on the ray".into(),
        ));
    }
    let mut rejections = 0u64;
    let mut proposals = 0u64;
    for k in 0.. {
        let w_lo = x0 + k as f64 * window;
        let w_hi = w_lo + window;
        let bound = kappa.bound_on(w_lo, w_hi)?;
        let proposal_gap = Exp::new(bound).expect("positive bound");
        let mut t_local = 0.0;
        loop {
            t_local += proposal_gap.sample(rng);
            if t_local >= window {
                break;
            }
            proposals += 1;
            if proposals > DEFAULT_EVENT_CAP {
                return Err(Error::KillingNotAlmostSure(format!(
                    "no accepted kill after {DEFAULT_EVENT_CAP} proposals"
                )));
            }
            let x = w_lo + t_local;
            if rng.random::<f64>() * bound < piecewise.eval(x) {
                return Ok(ExitSample {
                    location: x,
                    time: x - x0,
                    thinning_rejections: rejections,
                });
            }
            rejections += 1;
        }
    }
    unreachable!("window loop only exits by return")
}

/// Integrated hazard of a chain path given as `(state index, dwell)` pairs.
pub fn integrated_hazard_ctmc(kappa: &RateFunction, path: &[(usize, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(state, dwell) in path {
        total += kappa.rate_for_state(state)? * dwell;
    }
    Ok(total)
}

/// Integrated hazard of the ray segment `[from, to]`, in closed form.
pub fn integrated_hazard_ray(kappa: &RateFunction, from: f64, to: f64) -> Result<f64> {
    let piecewise = kappa.as_piecewise().ok_or_else(|| Error::RateOutOfDomain {
        query: "ray hazard".into(),
        reason: "killing rate must be piecewise-polynomial".into(),
    })?;
    if !(0.0 <= from && from <= to) || !to.is_finite() {
        return Err(Error::InvalidInterval { a: from, b: to });
    }
    Ok(piecewise.integral_between(from, to))
}
