//! The resurrected process: kill, instantaneous rebirth from a fixed
//! measure, repeat.
//!
//! Each kill is a regeneration time, so the invariant distribution is
//! estimated by the regenerative ratio-of-sums: total occupation divided by
//! total elapsed time over all completed cycles. Reweighting that estimate by
//! the killing rate predicts the law of the pre-kill location, which is the
//! identity the rest of the crate cross-checks.
//!
//! Cycles are simulated in parallel over fixed-size chunks with one
//! deterministic stream per cycle index, so estimates are bit-identical for
//! any worker count.

use crate::error::{Error, Result};
use crate::killing::{sample_exit_ray_inversion, KilledChainSampler};
use crate::process::{GeneratorMatrix, RateFunction};
use crate::rng::{trajectory_rng, Stage};
use crate::stats::{EmpiricalDistribution, Support};
use rand::Rng;
use rayon::prelude::*;

/// Rebirth measure of the resurrected process: a distribution over chain
/// states, or a fixed point on the ray.
#[derive(Debug, Clone, PartialEq)]
pub enum RebirthMeasure {
    /// Probability weights aligned with matrix state indices.
    Discrete(Vec<f64>),
    /// Point mass for the ray model.
    Point(f64),
}

impl RebirthMeasure {
    /// Validated discrete measure (nonnegative, sums to one within 1e-12).
    pub fn discrete(weights: Vec<f64>) -> Result<Self> {
        let mut total = 0.0;
        for &w in &weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!("weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(Self::Discrete(weights))
    }

    /// Point mass at a matrix state index.
    pub fn delta_state(index: usize, n: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::InvalidMeasure(format!(
                "state {index} outside chain of {n} states"
            )));
        }
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Ok(Self::Discrete(w))
    }

    /// Point mass on the ray.
    pub fn point(position: f64) -> Result<Self> {
        if !(position >= 0.0) || !position.is_finite() {
            return Err(Error::InvalidMeasure(format!("ray position {position}")));
        }
        Ok(Self::Point(position))
    }

    /// Weights, when discrete.
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            Self::Discrete(w) => Some(w),
            Self::Point(_) => None,
        }
    }
}

/// Fixed-width ray bins `[0, width), [width, 2 width), ..., [x_max, inf)`.
///
/// The final unbounded bin keeps the occupation identity exact when a cycle
/// overshoots the plotted range.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    width: f64,
    x_max: f64,
}

/// Integrated hazard beyond which the invariant tail is negligible:
/// `exp(-16.2) < 1e-7`, keeping truncated tail mass under 1e-6 for
/// unit-scale rates.
const TAIL_HAZARD: f64 = 16.2;

impl BinSpec {
    /// Explicit width and range.
    pub fn new(width: f64, x_max: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !(x_max > width) || !x_max.is_finite() {
            return Err(Error::Config(format!(
                "bad bin spec: width {width}, x_max {x_max}"
            )));
        }
        Ok(Self { width, x_max })
    }

    /// Range chosen so the analytic invariant tail mass beyond `x_max` is
    /// negligible: `x_max` is the hazard-16.2 crossing from `x0`, rounded up
    /// to the bin grid.
    pub fn auto(kappa: &RateFunction, x0: f64, width: f64) -> Result<Self> {
        let piecewise = kappa.as_piecewise().ok_or_else(|| Error::RateOutOfDomain {
            query: "bin spec".into(),
            reason: "ray bins need a piecewise rate".into(),
        })?;
        let crossing = piecewise.solve_cumulative(x0, TAIL_HAZARD)?;
        let cells = (crossing / width).ceil().max(2.0);
        Self::new(width, cells * width)
    }

    /// Bin width.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Bin edges including the final infinite overflow edge.
    pub fn edges(&self) -> Vec<f64> {
        let cells = (self.x_max / self.width).round() as usize;
        let mut edges: Vec<f64> = (0..=cells).map(|i| i as f64 * self.width).collect();
        edges.push(f64::INFINITY);
        edges
    }
}

/// Occupation and regeneration record of a resurrected-process run.
#[derive(Debug, Clone)]
pub struct RegenerationLog {
    support: Support,
    occupation: Vec<f64>,
    cycle_lengths: Vec<f64>,
    total_time: f64,
}

/// Relative slack on the occupation-vs-total-time accounting identity.
pub const OCCUPATION_TOL: f64 = 1e-9;

impl RegenerationLog {
    fn new(support: Support, occupation: Vec<f64>, cycle_lengths: Vec<f64>) -> Result<Self> {
        let total_time: f64 = cycle_lengths.iter().sum();
        let log = Self {
            support,
            occupation,
            cycle_lengths,
            total_time,
        };
        log.check_accounting()?;
        Ok(log)
    }

    fn check_accounting(&self) -> Result<()> {
        let occupied: f64 = self.occupation.iter().sum();
        if (occupied - self.total_time).abs() > OCCUPATION_TOL * self.total_time.max(1e-300) {
            return Err(Error::InvalidMeasure(format!(
                "occupation {occupied} disagrees with total time {}",
                self.total_time
            )));
        }
        for w in self.cycle_lengths.iter() {
            if !(*w > 0.0) {
                return Err(Error::InvalidMeasure(format!("cycle length {w}")));
            }
        }
        Ok(())
    }

    /// Number of completed cycles.
    pub fn n_cycles(&self) -> usize {
        self.cycle_lengths.len()
    }

    /// Total elapsed time over all cycles.
    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// Occupation masses (time units) per support cell.
    pub fn occupation(&self) -> &[f64] {
        &self.occupation
    }

    /// Support the occupation is recorded on.
    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Individual cycle lengths in simulation order.
    pub fn cycle_lengths(&self) -> &[f64] {
        &self.cycle_lengths
    }

    /// Regeneration times `T_1 < T_2 < ...` (cumulative cycle lengths).
    pub fn regeneration_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.cycle_lengths
            .iter()
            .map(|l| {
                t += l;
                t
            })
            .collect()
    }

    /// Merge two logs over the same support: occupations add, cycle lengths
    /// concatenate. Associative and order-independent up to rounding.
    pub fn merge(mut self, other: RegenerationLog) -> Result<RegenerationLog> {
        if self.support != other.support {
            return Err(Error::MismatchedSupport(
                "regeneration logs on different supports".into(),
            ));
        }
        for (a, b) in self.occupation.iter_mut().zip(&other.occupation) {
            *a += b;
        }
        self.cycle_lengths.extend_from_slice(&other.cycle_lengths);
        self.total_time += other.total_time;
        Ok(self)
    }

    /// Diagnostics for the finite-mean requirement behind the regenerative
    /// estimator.
    pub fn mean_stability(&self) -> MeanStability {
        mean_stability(&self.cycle_lengths)
    }
}

/// Divergence diagnostics of the running mean of cycle lengths.
///
/// When the mean excursion length is infinite, the longest single cycle
/// keeps a non-vanishing share of the total time and the running mean never
/// settles; both symptoms are monitored. With a finite mean both statistics
/// vanish as cycles accumulate, so false alarms die out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStability {
    /// Longest single cycle as a fraction of total time.
    pub max_share: f64,
    /// Mean over the second half of cycles divided by mean over the first.
    pub half_ratio: f64,
    /// True when the statistics point at a diverging mean; the invariant
    /// estimate should not be trusted.
    pub warn: bool,
}

/// Cycle count below which no divergence call is attempted.
const STABILITY_MIN_CYCLES: usize = 100;
/// Warn when one cycle exceeds this share of total time.
const MAX_SHARE_THRESHOLD: f64 = 0.01;
/// Warn when the half-sample means differ by more than this factor.
const HALF_RATIO_THRESHOLD: f64 = 1.5;

fn mean_stability(cycle_lengths: &[f64]) -> MeanStability {
    let k = cycle_lengths.len();
    let total: f64 = cycle_lengths.iter().sum();
    if k < STABILITY_MIN_CYCLES || total <= 0.0 {
        return MeanStability {
            max_share: 0.0,
            half_ratio: 1.0,
            warn: false,
        };
    }
    let max = cycle_lengths.iter().fold(0.0f64, |m, &l| m.max(l));
    let max_share = max / total;
    let half = k / 2;
    let first: f64 = cycle_lengths[..half].iter().sum::<f64>() / half as f64;
    let second: f64 = cycle_lengths[half..].iter().sum::<f64>() / (k - half) as f64;
    let half_ratio = second / first;
    let warn = max_share > MAX_SHARE_THRESHOLD
        || half_ratio > HALF_RATIO_THRESHOLD
        || half_ratio < 1.0 / HALF_RATIO_THRESHOLD;
    MeanStability {
        max_share,
        half_ratio,
        warn,
    }
}

/// Cycles per parallel chunk. Fixed so that chunk boundaries, and therefore
/// floating-point merge order, never depend on the worker count.
const CYCLES_PER_CHUNK: usize = 256;

fn run_chunked(
    n_cycles: usize,
    per_cycle: impl Fn(usize, &mut rand_chacha::ChaCha8Rng, &mut [f64]) -> Result<f64> + Sync,
    cells: usize,
    master_seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_chunks = n_cycles.div_ceil(CYCLES_PER_CHUNK);
    let partials: Result<Vec<(Vec<f64>, Vec<f64>)>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CYCLES_PER_CHUNK;
            let hi = ((chunk + 1) * CYCLES_PER_CHUNK).min(n_cycles);
            let mut occupation = vec![0.0; cells];
            let mut lengths = Vec::with_capacity(hi - lo);
            for cycle in lo..hi {
                let mut rng = trajectory_rng(master_seed, Stage::Resurrection, cycle as u64);
                lengths.push(per_cycle(cycle, &mut rng, &mut occupation)?);
            }
            Ok((occupation, lengths))
        })
        .collect();
    let partials = partials?;
    let mut occupation = vec![0.0; cells];
    let mut cycle_lengths = Vec::with_capacity(n_cycles);
    for (occ, lengths) in partials {
        for (a, b) in occupation.iter_mut().zip(&occ) {
            *a += b;
        }
        cycle_lengths.extend_from_slice(&lengths);
    }
    Ok((occupation, cycle_lengths))
}

/// Simulate `n_cycles` regeneration cycles of a resurrected chain.
pub fn simulate_resurrected_ctmc(
    generator: &GeneratorMatrix,
    kappa: &RateFunction,
    mu: &RebirthMeasure,
    n_cycles: usize,
    master_seed: u64,
) -> Result<RegenerationLog> {
    if n_cycles == 0 {
        return Err(Error::EmptyLog);
    }
    let weights = mu.weights().ok_or_else(|| {
        Error::InvalidMeasure("chain resurrection needs a discrete rebirth measure".into())
    })?;
    if weights.len() != generator.n() {
        return Err(Error::InvalidMeasure(format!(
            "{} rebirth weights on a chain of {} states",
            weights.len(),
            generator.n()
        )));
    }
    let sampler = KilledChainSampler::new(generator, kappa)?;
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let draw_start = |rng: &mut rand_chacha::ChaCha8Rng| -> usize {
        let u: f64 = rng.random();
        cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1)
    };
    let (occupation, cycle_lengths) = run_chunked(
        n_cycles,
        |_cycle, rng, occupation| {
            let start = draw_start(rng);
            let exit = sampler.sample_exit_observed(start, rng, |state, dwell| {
                occupation[state] += dwell;
            })?;
            Ok(exit.time)
        },
        generator.n(),
        master_seed,
    )?;
    RegenerationLog::new(
        Support::States(generator.labels().to_vec()),
        occupation,
        cycle_lengths,
    )
}

/// Simulate `n_cycles` regeneration cycles of the resurrected ray flow,
/// recording occupation exactly per bin (time in bin = overlap length under
/// the unit-velocity motion).
pub fn simulate_resurrected_ray(
    kappa: &RateFunction,
    mu: &RebirthMeasure,
    bins: &BinSpec,
    n_cycles: usize,
    master_seed: u64,
) -> Result<RegenerationLog> {
    if n_cycles == 0 {
        return Err(Error::EmptyLog);
    }
    let x0 = match mu {
        RebirthMeasure::Point(x) => *x,
        RebirthMeasure::Discrete(_) => {
            return Err(Error::InvalidMeasure(
                "ray resurrection needs a point rebirth measure".into(),
            ))
        }
    };
    let edges = bins.edges();
    let cells = edges.len() - 1;
    let width = bins.width();
    let finite_cells = cells - 1;
    let deposit = move |occupation: &mut [f64], from: f64, to: f64| {
        // overlap of [from, to] with each grid bin, then the overflow tail
        let first = ((from / width).floor() as usize).min(finite_cells);
        let last = ((to / width).floor() as usize).min(finite_cells);
        for cell in first..=last.min(finite_cells - 1) {
            let lo = (cell as f64 * width).max(from);
            let hi = ((cell + 1) as f64 * width).min(to);
            if hi > lo {
                occupation[cell] += hi - lo;
            }
        }
        let tail_start = finite_cells as f64 * width;
        if to > tail_start {
            occupation[finite_cells] += to - tail_start.max(from);
        }
    };
    let (occupation, cycle_lengths) = run_chunked(
        n_cycles,
        |_cycle, rng, occupation| {
            let exit = sample_exit_ray_inversion(kappa, x0, rng)?;
            deposit(occupation, x0, exit.location);
            Ok(exit.time)
        },
        cells,
        master_seed,
    )?;
    RegenerationLog::new(Support::Bins(edges), occupation, cycle_lengths)
}

/// Regenerative estimate of the invariant distribution: occupation divided
/// by total time, as a single ratio over all cycles.
pub fn invariant_estimate(log: &RegenerationLog) -> Result<EmpiricalDistribution> {
    if log.n_cycles() == 0 || !(log.total_time() > 0.0) {
        return Err(Error::EmptyLog);
    }
    EmpiricalDistribution::from_weights(log.support().clone(), log.occupation(), log.n_cycles())
}

/// Reweight a distribution by the killing rate and renormalize: the
/// predicted law of the pre-kill location.
///
/// State supports evaluate the per-state table positionally; bin supports
/// evaluate the rate at the bin midpoint (left edge for the overflow bin).
pub fn kappa_reweight(
    distribution: &EmpiricalDistribution,
    kappa: &RateFunction,
) -> Result<EmpiricalDistribution> {
    let weights: Vec<f64> = match distribution.support() {
        Support::States(labels) => (0..labels.len())
            .map(|i| Ok(distribution.mass()[i] * kappa.rate_for_state(i)?))
            .collect::<Result<_>>()?,
        Support::Bins(edges) => edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let at = if w[1].is_finite() {
                    0.5 * (w[0] + w[1])
                } else {
                    w[0]
                };
                Ok(distribution.mass()[i] * kappa.rate_at_position(at)?)
            })
            .collect::<Result<_>>()?,
    };
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(Error::ZeroReweight);
    }
    EmpiricalDistribution::from_weights(
        distribution.support().clone(),
        &weights,
        distribution.n_samples(),
    )
}
