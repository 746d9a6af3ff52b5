//! Scenario pipelines: exact solves, killed-trajectory simulation,
//! resurrected-process estimation, and the cross-validation report.
//!
//! Every random stage derives per-trajectory streams from the scenario seed,
//! and parallel work is merged over fixed-size chunks, so a report is a pure
//! function of its scenario regardless of worker count.

use crate::config::{Model, Scenario};
use crate::error::{Error, Result};
use crate::killing::{
    sample_exit_ray_inversion, sample_exit_ray_thinning, ExitSample, KilledChainSampler,
};
use crate::process::{GeneratorMatrix, PiecewisePolynomial, RateFunction};
use crate::resurrection::{
    invariant_estimate, kappa_reweight, simulate_resurrected_ctmc, simulate_resurrected_ray,
    MeanStability, RebirthMeasure,
};
use crate::rng::{trajectory_rng, Stage};
use crate::solver::{
    exit_law_exact, mean_exit_time_exact, qsd_exact, resurrected_invariant_exact, QsdResult,
};
use crate::stats::{
    chi_square_test, independence_test, ks_test, ks_two_sample, tv_distance,
    EmpiricalDistribution, Support,
};
use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

/// One named pass/fail line of a report.
#[derive(Debug, Clone)]
pub struct CheckLine {
    /// What was checked.
    pub name: String,
    /// Whether the check passed.
    pub pass: bool,
    /// Measured value and threshold.
    pub detail: String,
}

impl CheckLine {
    fn new(name: impl Into<String>, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

/// A named statistic in a report (KS/chi-square results and the like).
#[derive(Debug, Clone)]
pub struct TestResult {
    /// Test label.
    pub name: String,
    /// Test statistic.
    pub statistic: f64,
    /// p-value.
    pub p_value: f64,
}

/// Everything a scenario run produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    /// Scenario label.
    pub scenario: String,
    /// Seed the run used.
    pub seed: u64,
    /// Exact exit law (chains: resolvent route; ray: closed form).
    pub exact_exit: Option<EmpiricalDistribution>,
    /// Empirical exit law from killed trajectories.
    pub empirical_exit: Option<EmpiricalDistribution>,
    /// Exact resurrected invariant distribution, when available.
    pub invariant_exact: Option<EmpiricalDistribution>,
    /// Regenerative estimate of the resurrected invariant distribution.
    pub invariant_estimate: Option<EmpiricalDistribution>,
    /// Killing-rate reweighting of the invariant estimate.
    pub reweighted: Option<EmpiricalDistribution>,
    /// TV(exact exit, empirical exit).
    pub tv_exact_empirical: Option<f64>,
    /// TV(exact exit, reweighted invariant estimate).
    pub tv_exact_reweighted: Option<f64>,
    /// TV(empirical exit, reweighted invariant estimate).
    pub tv_empirical_reweighted: Option<f64>,
    /// Exact mean kill time from the start measure.
    pub mean_exit_exact: Option<f64>,
    /// Empirical mean kill time.
    pub mean_exit_empirical: Option<f64>,
    /// Quasi-stationary eigenpair, for QSD scenarios.
    pub qsd: Option<QsdResult>,
    /// Statistical test outcomes.
    pub tests: Vec<TestResult>,
    /// Cycle-length stability diagnostics of the resurrected run.
    pub stability: Option<MeanStability>,
    /// Non-fatal notes (skipped tests, integrability warnings).
    pub warnings: Vec<String>,
    /// Pass/fail lines; the run succeeds when all pass.
    pub checks: Vec<CheckLine>,
    /// Stage timings in seconds.
    pub timings: Vec<(String, f64)>,
}

impl Report {
    /// True when every enabled check passed.
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Run a closure inside a worker pool sized from the scenario override, the
/// `EXITLAW_THREADS` environment variable, or the default in that order.
pub fn with_worker_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    let resolved = threads.or_else(|| {
        std::env::var("EXITLAW_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    match resolved {
        Some(k) if k > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(f),
        _ => f(),
    }
}

/// Trajectories per parallel chunk; fixed so results never depend on the
/// worker count.
const TRAJECTORIES_PER_CHUNK: usize = 512;

fn sample_chain_exits(
    sampler: &KilledChainSampler,
    mu: &[f64],
    n: usize,
    master_seed: u64,
) -> Result<Vec<ExitSample<usize>>> {
    let cumulative: Vec<f64> = mu
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let n_chunks = n.div_ceil(TRAJECTORIES_PER_CHUNK);
    let chunks: Result<Vec<Vec<ExitSample<usize>>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * TRAJECTORIES_PER_CHUNK;
            let hi = ((chunk + 1) * TRAJECTORIES_PER_CHUNK).min(n);
            let mut out = Vec::with_capacity(hi - lo);
            for index in lo..hi {
                let mut rng = trajectory_rng(master_seed, Stage::Exit, index as u64);
                let u: f64 = rng.random();
                let start = cumulative
                    .partition_point(|&c| c <= u)
                    .min(cumulative.len() - 1);
                out.push(sampler.sample_exit(start, &mut rng)?);
            }
            Ok(out)
        })
        .collect();
    Ok(chunks?.into_iter().flatten().collect())
}

enum RayMethod {
    Inversion,
    Thinning { window: f64 },
}

fn sample_ray_exits(
    kappa: &RateFunction,
    x0: f64,
    n: usize,
    master_seed: u64,
    index_offset: u64,
    method: RayMethod,
) -> Result<Vec<ExitSample<f64>>> {
    let n_chunks = n.div_ceil(TRAJECTORIES_PER_CHUNK);
    let chunks: Result<Vec<Vec<ExitSample<f64>>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * TRAJECTORIES_PER_CHUNK;
            let hi = ((chunk + 1) * TRAJECTORIES_PER_CHUNK).min(n);
            let mut out = Vec::with_capacity(hi - lo);
            for index in lo..hi {
                let mut rng =
                    trajectory_rng(master_seed, Stage::Exit, index_offset + index as u64);
                let exit = match method {
                    RayMethod::Inversion => sample_exit_ray_inversion(kappa, x0, &mut rng)?,
                    RayMethod::Thinning { window } => {
                        sample_exit_ray_thinning(kappa, x0, &mut rng, window)?
                    }
                };
                out.push(exit);
            }
            Ok(out)
        })
        .collect();
    Ok(chunks?.into_iter().flatten().collect())
}

fn exact_distribution(support: Support, law: &[f64]) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::from_weights(support, law, 0)
}

fn state_counts(n_states: usize, exits: &[ExitSample<usize>]) -> Vec<u64> {
    let mut counts = vec![0u64; n_states];
    for e in exits {
        counts[e.location] += 1;
    }
    counts
}

/// Closed-form exit CDF on the ray: `1 - exp(-(K(x) - K(x0)))` for `x >= x0`.
pub fn ray_exit_cdf(kappa: &PiecewisePolynomial, x0: f64) -> impl Fn(f64) -> f64 + '_ {
    move |x: f64| {
        if x <= x0 {
            0.0
        } else {
            1.0 - (-(kappa.integral_to(x) - kappa.integral_to(x0))).exp()
        }
    }
}

/// Closed-form exit-law bin masses on the ray.
pub fn ray_exit_bin_masses(kappa: &PiecewisePolynomial, x0: f64, edges: &[f64]) -> Vec<f64> {
    let cdf = ray_exit_cdf(kappa, x0);
    edges
        .windows(2)
        .map(|w| {
            let hi = if w[1].is_finite() { cdf(w[1]) } else { 1.0 };
            (hi - cdf(w[0].max(x0))).max(0.0)
        })
        .collect()
}

/// Hazard level treated as the end of the invariant tail (`exp(-40)` is far
/// below any mass the comparisons can see).
const INVARIANT_TAIL_HAZARD: f64 = 40.0;

/// Analytic invariant bin masses of the resurrected ray flow: the normalized
/// integral of `exp(-(K(x) - K(x0)))` per bin, by composite Simpson with
/// fixed subdivision (the integrand is smooth, so this is exact to rounding
/// at the bin widths used here).
pub fn ray_invariant_bin_masses(
    kappa: &PiecewisePolynomial,
    x0: f64,
    edges: &[f64],
) -> Result<Vec<f64>> {
    let density = |x: f64| (-(kappa.integral_to(x) - kappa.integral_to(x0))).exp();
    let simpson = |a: f64, b: f64| {
        const PANELS: usize = 16;
        let h = (b - a) / PANELS as f64;
        let mut total = density(a) + density(b);
        for i in 1..PANELS {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            total += weight * density(a + i as f64 * h);
        }
        total * h / 3.0
    };
    let far = kappa.solve_cumulative(x0, INVARIANT_TAIL_HAZARD)?;
    let mut masses: Vec<f64> = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let lo = w[0].max(x0);
        let hi = if w[1].is_finite() { w[1] } else { far };
        masses.push(if hi > lo { simpson(lo, hi) } else { 0.0 });
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroReweight);
    }
    for m in masses.iter_mut() {
        *m /= total;
    }
    Ok(masses)
}

struct Timer {
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            started: Instant::now(),
        }
    }

    fn lap(&mut self, name: &str) {
        self.timings
            .push((name.to_string(), self.started.elapsed().as_secs_f64()));
        self.started = Instant::now();
    }
}

/// Full exit-law pipeline: exact solve (chains), killed trajectories,
/// resurrected cycles, reweighting, and all pairwise comparisons.
pub fn run_scenario(scenario: &Scenario) -> Result<Report> {
    with_worker_pool(scenario.threads, || match &scenario.model {
        Model::Chain {
            generator,
            kappa,
            mu,
        } => run_chain_scenario(scenario, generator, kappa, mu),
        Model::Ray { .. } => run_ray_scenario(scenario),
    })
}

fn run_chain_scenario(
    scenario: &Scenario,
    generator: &GeneratorMatrix,
    kappa: &RateFunction,
    mu: &[f64],
) -> Result<Report> {
    let thresholds = scenario.thresholds;
    let mut timer = Timer::new();
    let mut report = Report {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        ..Report::default()
    };
    let support = Support::States(generator.labels().to_vec());

    // exact quantities
    let law = exit_law_exact(generator, kappa, mu)?;
    report.exact_exit = Some(exact_distribution(support.clone(), &law)?);
    report.mean_exit_exact = Some(mean_exit_time_exact(generator, kappa, mu)?);
    let invariant_exact = resurrected_invariant_exact(generator, kappa, mu)?;
    report.invariant_exact = Some(exact_distribution(support.clone(), &invariant_exact)?);
    timer.lap("exact solves");

    // killed trajectories
    let sampler = KilledChainSampler::new(generator, kappa)?;
    let exits = sample_chain_exits(&sampler, mu, scenario.n_kills, scenario.seed)?;
    let counts = state_counts(generator.n(), &exits);
    let empirical =
        EmpiricalDistribution::from_state_samples(generator.labels(), &exits.iter().map(|e| e.location).collect::<Vec<_>>())?;
    report.mean_exit_empirical =
        Some(exits.iter().map(|e| e.time).sum::<f64>() / exits.len() as f64);
    report.empirical_exit = Some(empirical);
    timer.lap("killed trajectories");

    // resurrected cycles
    let mu_measure = RebirthMeasure::discrete(mu.to_vec())?;
    let log = simulate_resurrected_ctmc(
        generator,
        kappa,
        &mu_measure,
        scenario.n_regen_cycles,
        scenario.seed,
    )?;
    let stability = log.mean_stability();
    report.stability = Some(stability);
    let invariant = invariant_estimate(&log)?;
    let reweighted = kappa_reweight(&invariant, kappa)?;
    report.invariant_estimate = Some(invariant);
    report.reweighted = Some(reweighted);
    timer.lap("resurrected cycles");

    // comparisons
    let exact = report.exact_exit.as_ref().unwrap();
    let empirical = report.empirical_exit.as_ref().unwrap();
    let reweighted = report.reweighted.as_ref().unwrap();
    report.tv_exact_empirical = Some(tv_distance(exact, empirical)?);
    report.tv_exact_reweighted = Some(tv_distance(exact, reweighted)?);
    report.tv_empirical_reweighted = Some(tv_distance(empirical, reweighted)?);

    report.checks.push(CheckLine::new(
        "exit law TV (exact vs empirical)",
        report.tv_exact_empirical.unwrap() <= thresholds.tv_exact_empirical,
        format!(
            "{:.5} <= {}",
            report.tv_exact_empirical.unwrap(),
            thresholds.tv_exact_empirical
        ),
    ));

    match chi_square_test(&counts, exact.mass()) {
        Ok((stat, p)) => {
            report.tests.push(TestResult {
                name: "chi-square exit law".into(),
                statistic: stat,
                p_value: p,
            });
            report.checks.push(CheckLine::new(
                "chi-square exit law p",
                p > thresholds.p_min,
                format!("{p:.5} > {}", thresholds.p_min),
            ));
        }
        Err(Error::ExpectedCountTooSmall { .. }) => report
            .warnings
            .push("chi-square skipped: exit law too concentrated".into()),
        Err(e) => return Err(e),
    }

    if stability.warn {
        report.warnings.push(format!(
            "integrability guard: mean cycle length not converging \
             (max cycle share {:.4}, half-sample ratio {:.3}); \
             the reweighted invariant estimate is not trusted",
            stability.max_share, stability.half_ratio
        ));
    } else {
        report.checks.push(CheckLine::new(
            "reweighted invariant vs empirical exit TV",
            report.tv_empirical_reweighted.unwrap() <= thresholds.tv_reweighted_empirical,
            format!(
                "{:.5} <= {}",
                report.tv_empirical_reweighted.unwrap(),
                thresholds.tv_reweighted_empirical
            ),
        ));
    }
    timer.lap("comparisons");
    report.timings = timer.timings;
    Ok(report)
}

/// Quasi-stationary pipeline: eigenpair, exponential-lifetime and
/// independence tests from the QSD start, the reweighted-QSD exit identity,
/// the clock-mixture decomposition, and the resurrected fixed point.
pub fn run_qsd_scenario(scenario: &Scenario) -> Result<Report> {
    with_worker_pool(scenario.threads, || {
        let (generator, kappa) = match &scenario.model {
            Model::Chain {
                generator, kappa, ..
            } => (generator, kappa),
            Model::Ray { .. } => {
                return Err(Error::Config(
                    "quasi-stationary analysis needs a ctmc model".into(),
                ))
            }
        };
        let thresholds = scenario.thresholds;
        let mut timer = Timer::new();
        let mut report = Report {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            ..Report::default()
        };
        let support = Support::States(generator.labels().to_vec());
        let table = kappa.as_table().expect("chain model carries a table");

        let qsd = qsd_exact(generator, kappa)?;
        let law = exit_law_exact(generator, kappa, &qsd.pi)?;
        report.exact_exit = Some(exact_distribution(support.clone(), &law)?);
        report.mean_exit_exact = Some(1.0 / qsd.theta);

        // exit law from the QSD is the reweighted QSD, entrywise
        let max_dev = (0..generator.n())
            .map(|i| (law[i] - table[i] * qsd.pi[i] / qsd.theta).abs())
            .fold(0.0f64, f64::max);
        report.checks.push(CheckLine::new(
            "exit law equals reweighted QSD",
            max_dev <= 1e-9,
            format!("max deviation {max_dev:.3e} <= 1e-9"),
        ));

        // fixed point of the resurrection map at the QSD
        let pi_res = resurrected_invariant_exact(generator, kappa, &qsd.pi)?;
        let fp_dev = (0..generator.n())
            .map(|i| (pi_res[i] - qsd.pi[i]).abs())
            .fold(0.0f64, f64::max);
        report.checks.push(CheckLine::new(
            "resurrected invariant fixed point at QSD",
            fp_dev <= 1e-9,
            format!("max deviation {fp_dev:.3e} <= 1e-9"),
        ));

        // competing-clocks mixture when the rate has a positive floor
        let eps = table.iter().copied().fold(f64::INFINITY, f64::min);
        if eps > 0.0 {
            let reduced =
                RateFunction::table(table.iter().map(|k| k - eps).collect())?;
            let theta_prime = qsd.theta - eps;
            let mix_dev = match exit_law_exact(generator, &reduced, &qsd.pi) {
                Ok(reduced_law) => (0..generator.n())
                    .map(|i| {
                        let mixed = theta_prime / qsd.theta * reduced_law[i]
                            + eps / qsd.theta * qsd.pi[i];
                        (law[i] - mixed).abs()
                    })
                    .fold(0.0f64, f64::max),
                Err(e) => return Err(e),
            };
            report.checks.push(CheckLine::new(
                "competing-clocks mixture decomposition",
                mix_dev <= 1e-9,
                format!("max deviation {mix_dev:.3e} <= 1e-9 (floor {eps})"),
            ));
        } else {
            report
                .warnings
                .push("mixture decomposition skipped: killing rate has no positive floor".into());
        }
        timer.lap("exact solves");

        // kills from the QSD: exponential lifetime and independence
        let sampler = KilledChainSampler::new(generator, kappa)?;
        let exits = sample_chain_exits(&sampler, &qsd.pi, scenario.n_kills, scenario.seed)?;
        let times: Vec<f64> = exits.iter().map(|e| e.time).collect();
        report.mean_exit_empirical = Some(times.iter().sum::<f64>() / times.len() as f64);
        let theta = qsd.theta;
        let (ks_stat, ks_p) = ks_test(&times, |t| 1.0 - (-theta * t).exp())?;
        report.tests.push(TestResult {
            name: format!("KS kill time vs Exp({theta:.6})"),
            statistic: ks_stat,
            p_value: ks_p,
        });
        report.checks.push(CheckLine::new(
            "kill time exponential (KS p)",
            ks_p > thresholds.p_min,
            format!("{ks_p:.5} > {}", thresholds.p_min),
        ));

        let indices: Vec<usize> = exits.iter().map(|e| e.location).collect();
        report.empirical_exit = Some(EmpiricalDistribution::from_state_samples(
            generator.labels(),
            &indices,
        )?);
        report.tv_exact_empirical = Some(tv_distance(
            report.exact_exit.as_ref().unwrap(),
            report.empirical_exit.as_ref().unwrap(),
        )?);

        let pairs: Vec<(f64, f64)> = exits
            .iter()
            .map(|e| (e.time, generator.labels()[e.location] as f64))
            .collect();
        match independence_test(&pairs, 4, 4) {
            Ok((stat, p)) => {
                report.tests.push(TestResult {
                    name: "independence of kill time and location".into(),
                    statistic: stat,
                    p_value: p,
                });
                report.checks.push(CheckLine::new(
                    "kill time independent of location (p)",
                    p > thresholds.p_min,
                    format!("{p:.5} > {}", thresholds.p_min),
                ));
            }
            Err(Error::DegenerateMarginal(reason)) => {
                report
                    .warnings
                    .push(format!("independence test skipped: {reason}"));
            }
            Err(e) => return Err(e),
        }
        timer.lap("killed trajectories");

        // resurrected run from the QSD: the simulated fixed point
        let mu_measure = RebirthMeasure::discrete(qsd.pi.clone())?;
        let log = simulate_resurrected_ctmc(
            generator,
            kappa,
            &mu_measure,
            scenario.n_regen_cycles,
            scenario.seed,
        )?;
        report.stability = Some(log.mean_stability());
        let invariant = invariant_estimate(&log)?;
        let qsd_dist = exact_distribution(support, &qsd.pi)?;
        let tv_fp = tv_distance(&invariant, &qsd_dist)?;
        report.checks.push(CheckLine::new(
            "simulated resurrected invariant vs QSD TV",
            tv_fp <= thresholds.tv_reweighted_empirical,
            format!("{tv_fp:.5} <= {}", thresholds.tv_reweighted_empirical),
        ));
        let reweighted = kappa_reweight(&invariant, kappa)?;
        report.tv_empirical_reweighted = Some(tv_distance(
            report.empirical_exit.as_ref().unwrap(),
            &reweighted,
        )?);
        report.invariant_estimate = Some(invariant);
        report.invariant_exact = Some(qsd_dist);
        report.reweighted = Some(reweighted);
        report.qsd = Some(qsd);
        timer.lap("resurrected cycles");

        report.timings = timer.timings;
        Ok(report)
    })
}

/// Default thinning window width.
pub const THINNING_WINDOW: f64 = 1.0;

fn run_ray_scenario(scenario: &Scenario) -> Result<Report> {
    let (kappa, x0, bins) = match &scenario.model {
        Model::Ray { kappa, x0, bins } => (kappa, *x0, bins),
        Model::Chain { .. } => {
            return Err(Error::Config("ray pipeline needs a ray model".into()))
        }
    };
    let thresholds = scenario.thresholds;
    let piecewise = kappa.as_piecewise().expect("ray model carries pieces");
    let mut timer = Timer::new();
    let mut report = Report {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        ..Report::default()
    };
    let edges = bins.edges();
    let support = Support::Bins(edges.clone());

    // closed-form laws
    let exit_masses = ray_exit_bin_masses(piecewise, x0, &edges);
    report.exact_exit = Some(exact_distribution(support.clone(), &exit_masses)?);
    let invariant_masses = ray_invariant_bin_masses(piecewise, x0, &edges)?;
    report.invariant_exact = Some(exact_distribution(support.clone(), &invariant_masses)?);
    timer.lap("closed-form laws");

    // exits by inversion and thinning
    let n = scenario.n_kills;
    let inversion = sample_ray_exits(kappa, x0, n, scenario.seed, 0, RayMethod::Inversion)?;
    let thinning = sample_ray_exits(
        kappa,
        x0,
        n,
        scenario.seed,
        n as u64,
        RayMethod::Thinning {
            window: THINNING_WINDOW,
        },
    )?;
    let inv_locations: Vec<f64> = inversion.iter().map(|e| e.location).collect();
    let thin_locations: Vec<f64> = thinning.iter().map(|e| e.location).collect();
    report.mean_exit_empirical =
        Some(inversion.iter().map(|e| e.time).sum::<f64>() / n as f64);

    let cdf = ray_exit_cdf(piecewise, x0);
    let (d_inv, p_inv) = ks_test(&inv_locations, &cdf)?;
    let (d_thin, p_thin) = ks_test(&thin_locations, &cdf)?;
    let (d_two, p_two) = ks_two_sample(&inv_locations, &thin_locations)?;
    report.tests.push(TestResult {
        name: "KS inversion exits vs closed form".into(),
        statistic: d_inv,
        p_value: p_inv,
    });
    report.tests.push(TestResult {
        name: "KS thinning exits vs closed form".into(),
        statistic: d_thin,
        p_value: p_thin,
    });
    report.tests.push(TestResult {
        name: "KS inversion vs thinning (two-sample)".into(),
        statistic: d_two,
        p_value: p_two,
    });
    for (name, p) in [
        ("inversion exit law (KS p)", p_inv),
        ("thinning exit law (KS p)", p_thin),
        ("inversion vs thinning (KS p)", p_two),
    ] {
        report.checks.push(CheckLine::new(
            name,
            p > thresholds.p_min,
            format!("{p:.5} > {}", thresholds.p_min),
        ));
    }
    let rejections: u64 = thinning.iter().map(|e| e.thinning_rejections).sum();
    report
        .warnings
        .extend((rejections == 0 && !piecewise.eval(x0).eq(&0.0)).then(|| {
            format!("thinning accepted every proposal over {n} trajectories (tight bound)")
        }));
    report.empirical_exit = Some(EmpiricalDistribution::from_binned_samples(
        edges.clone(),
        &inv_locations,
    )?);
    report.tv_exact_empirical = Some(tv_distance(
        report.exact_exit.as_ref().unwrap(),
        report.empirical_exit.as_ref().unwrap(),
    )?);
    timer.lap("killed trajectories");

    // resurrected flow
    let mu = RebirthMeasure::point(x0)?;
    let log = simulate_resurrected_ray(kappa, &mu, bins, scenario.n_regen_cycles, scenario.seed)?;
    let stability = log.mean_stability();
    report.stability = Some(stability);
    let invariant = invariant_estimate(&log)?;
    let tv_inv = tv_distance(&invariant, report.invariant_exact.as_ref().unwrap())?;
    report.checks.push(CheckLine::new(
        "resurrected occupation vs closed form TV",
        tv_inv <= thresholds.tv_reweighted_empirical,
        format!("{tv_inv:.5} <= {}", thresholds.tv_reweighted_empirical),
    ));
    let reweighted = kappa_reweight(&invariant, kappa)?;
    let tv_rw = tv_distance(&reweighted, report.exact_exit.as_ref().unwrap())?;
    report.tv_exact_reweighted = Some(tv_rw);
    report.tv_empirical_reweighted = Some(tv_distance(
        &reweighted,
        report.empirical_exit.as_ref().unwrap(),
    )?);
    report.checks.push(CheckLine::new(
        "reweighted occupation vs exit law TV",
        tv_rw <= thresholds.tv_reweighted_empirical,
        format!("{tv_rw:.5} <= {}", thresholds.tv_reweighted_empirical),
    ));
    if stability.warn {
        report.warnings.push(
            "integrability guard: ray cycle lengths show a diverging mean".into(),
        );
    }
    report.invariant_estimate = Some(invariant);
    report.reweighted = Some(reweighted);
    timer.lap("resurrected cycles");

    report.timings = timer.timings;
    Ok(report)
}

/// Dispatch on the model kind exactly as the `ray` CLI subcommand does.
pub fn run_ray(scenario: &Scenario) -> Result<Report> {
    with_worker_pool(scenario.threads, || run_ray_scenario(scenario))
}

/// Exact-only pipeline for chains: no simulation stages.
pub fn run_exact(scenario: &Scenario) -> Result<Report> {
    let (generator, kappa, mu) = match &scenario.model {
        Model::Chain {
            generator,
            kappa,
            mu,
        } => (generator, kappa, mu),
        Model::Ray { .. } => {
            return Err(Error::Config("exact pipeline needs a ctmc model".into()))
        }
    };
    let mut timer = Timer::new();
    let mut report = Report {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        ..Report::default()
    };
    let support = Support::States(generator.labels().to_vec());
    let law = exit_law_exact(generator, kappa, mu)?;
    report.exact_exit = Some(exact_distribution(support.clone(), &law)?);
    report.mean_exit_exact = Some(mean_exit_time_exact(generator, kappa, mu)?);
    let invariant = resurrected_invariant_exact(generator, kappa, mu)?;
    report.invariant_exact = Some(exact_distribution(support.clone(), &invariant)?);
    // the exact mirror of the reweighting identity
    let reweighted_exact = kappa_reweight(report.invariant_exact.as_ref().unwrap(), kappa)?;
    let dev = report
        .exact_exit
        .as_ref()
        .unwrap()
        .mass()
        .iter()
        .zip(reweighted_exact.mass())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    report.reweighted = Some(reweighted_exact);
    report.checks.push(CheckLine::new(
        "reweighted resurrected invariant equals exit law",
        dev <= 1e-9,
        format!("max deviation {dev:.3e} <= 1e-9"),
    ));
    timer.lap("exact solves");
    report.timings = timer.timings;
    Ok(report)
}
