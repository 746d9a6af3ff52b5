//! Empirical distributions and the hypothesis tests the verification
//! pipelines rely on: total variation, one- and two-sample
//! Kolmogorov-Smirnov, chi-square goodness of fit, and a contingency-table
//! independence test.
//!
//! KS p-values use the asymptotic Kolmogorov distribution; chi-square
//! p-values use the regularized upper incomplete gamma function.

use crate::error::{Error, Result};
use statrs::function::gamma::gamma_ur;

/// Mass vectors must sum to one within this tolerance.
pub const MASS_SUM_TOL: f64 = 1e-12;

/// Support of an empirical distribution: discrete state labels, or ordered
/// bins given by their edges (`edges.len() = mass.len() + 1`; the final edge
/// may be `f64::INFINITY` for an overflow bin).
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Discrete labelled states.
    States(Vec<i64>),
    /// Half-open bins `[edges[i], edges[i+1])`.
    Bins(Vec<f64>),
}

impl Support {
    /// Number of mass cells this support carries.
    pub fn len(&self) -> usize {
        match self {
            Support::States(l) => l.len(),
            Support::Bins(e) => e.len().saturating_sub(1),
        }
    }

    /// True when the support carries no cells.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        match self {
            Support::States(labels) => {
                if labels.is_empty() {
                    return Err(Error::MismatchedSupport("empty state support".into()));
                }
            }
            Support::Bins(edges) => {
                if edges.len() < 2 {
                    return Err(Error::MismatchedSupport("fewer than two bin edges".into()));
                }
                for w in edges.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::MismatchedSupport(format!(
                            "bin edges not strictly increasing: {} then {}",
                            w[0], w[1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Weighted probability masses over a [`Support`], with the underlying sample
/// count kept for error bars.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    support: Support,
    mass: Vec<f64>,
    n_samples: usize,
}

impl EmpiricalDistribution {
    /// Build from masses that already sum to one.
    pub fn from_masses(support: Support, mass: Vec<f64>, n_samples: usize) -> Result<Self> {
        support.validate()?;
        if support.len() != mass.len() {
            return Err(Error::MismatchedSupport(format!(
                "{} mass cells on a support of size {}",
                mass.len(),
                support.len()
            )));
        }
        let mut total = 0.0;
        for &m in &mass {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::MismatchedSupport(format!("negative or non-finite mass {m}")));
            }
            total += m;
        }
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::MismatchedSupport(format!(
                "mass sums to {total}, expected 1"
            )));
        }
        Ok(Self {
            support,
            mass,
            n_samples,
        })
    }

    /// Normalize nonnegative weights into a distribution.
    pub fn from_weights(support: Support, weights: &[f64], n_samples: usize) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::MismatchedSupport("weights sum to zero".into()));
        }
        let mass = weights.iter().map(|w| w / total).collect();
        Self::from_masses(support, mass, n_samples)
    }

    /// Tally discrete state observations (matrix indices) over `labels`.
    pub fn from_state_samples(labels: &[i64], indices: &[usize]) -> Result<Self> {
        let mut counts = vec![0.0f64; labels.len()];
        for &i in indices {
            if i >= labels.len() {
                return Err(Error::MismatchedSupport(format!(
                    "state index {i} outside support of {} states",
                    labels.len()
                )));
            }
            counts[i] += 1.0;
        }
        Self::from_weights(Support::States(labels.to_vec()), &counts, indices.len())
    }

    /// Bin real observations over the given edges; values outside the edges
    /// are an error (use an infinite final edge for an overflow bin).
    pub fn from_binned_samples(edges: Vec<f64>, samples: &[f64]) -> Result<Self> {
        let support = Support::Bins(edges);
        support.validate()?;
        let edges = match &support {
            Support::Bins(e) => e.clone(),
            Support::States(_) => unreachable!(),
        };
        let mut counts = vec![0.0f64; edges.len() - 1];
        for &x in samples {
            let i = bin_index(&edges, x).ok_or_else(|| {
                Error::MismatchedSupport(format!("sample {x} outside bin range"))
            })?;
            counts[i] += 1.0;
        }
        Self::from_weights(support, &counts, samples.len())
    }

    /// Support cells.
    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Probability masses.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Sample count behind the estimate (0 for exact distributions).
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
}

/// Bin index of `x` in half-open bins over `edges`, if inside the range.
pub fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    if x < edges[0] {
        return None;
    }
    let last = *edges.last().unwrap();
    if x >= last {
        return None;
    }
    // partition_point gives the first edge strictly greater than x
    let i = edges.partition_point(|&e| e <= x);
    Some(i - 1)
}

/// Total variation distance between two distributions on a common support.
pub fn tv_distance(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    if p.support != q.support {
        return Err(Error::MismatchedSupport(
            "total variation needs a common support".into(),
        ));
    }
    Ok(0.5
        * p.mass
            .iter()
            .zip(&q.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Survival function of the asymptotic Kolmogorov distribution,
/// `P(K > x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
///
/// The dual theta-series form is used for small arguments where the
/// alternating series converges slowly.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // cdf = sqrt(2 pi)/x * sum_{k odd} exp(-k^2 pi^2 / (8 x^2))
        let mut cdf = 0.0;
        let a = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let mut k = 1.0;
        loop {
            let term = (-k * k * a).exp();
            cdf += term;
            if term < 1e-18 * cdf.max(1e-300) {
                break;
            }
            k += 2.0;
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * cdf;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        let mut k = 1.0;
        loop {
            let term = sign * (-2.0 * k * k * x * x).exp();
            s += term;
            if term.abs() < 1e-18 {
                break;
            }
            sign = -sign;
            k += 1.0;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov-Smirnov test against an evaluable CDF.
///
/// Returns the statistic `D = sup |F_n - F|` (both one-sided gaps measured at
/// the sample points) and the asymptotic p-value `P(K > sqrt(n) D)`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::TooFewSamples { got: n, need: 10 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok((d, kolmogorov_survival(nf.sqrt() * d)))
}

/// Two-sample Kolmogorov-Smirnov test.
///
/// The statistic is the sup-gap between the two empirical CDFs; the p-value
/// uses the asymptotic Kolmogorov distribution at the effective sample size
/// `n_a n_b / (n_a + n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 10 || b.len() < 10 {
        return Err(Error::TooFewSamples {
            got: a.len().min(b.len()),
            need: 10,
        });
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut d = 0.0f64;
    while ia < xa.len() && ib < xb.len() {
        let v = xa[ia].min(xb[ib]);
        while ia < xa.len() && xa[ia] == v {
            ia += 1;
        }
        while ib < xb.len() && xb[ib] == v {
            ib += 1;
        }
        fa = ia as f64 / na;
        fb = ib as f64 / nb;
        d = d.max((fa - fb).abs());
    }
    let _ = (fa, fb);
    let ne = na * nb / (na + nb);
    Ok((d, kolmogorov_survival(ne.sqrt() * d)))
}

/// Chi-square goodness-of-fit test of observed counts against expected cell
/// probabilities.
///
/// Adjacent cells are pooled until every expected count reaches 5 (the
/// supports used here are ordered, so adjacent pooling is the natural
/// grouping); at least two pooled cells must remain. Degrees of freedom are
/// `cells - 1` after pooling.
pub fn chi_square_test(observed: &[u64], expected_probs: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected_probs.len() {
        return Err(Error::MismatchedSupport(format!(
            "{} observed cells vs {} expected",
            observed.len(),
            expected_probs.len()
        )));
    }
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    // pool adjacent cells until expected >= 5
    let mut pooled: Vec<(f64, f64)> = Vec::new(); // (observed, expected count)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        acc_o += o as f64;
        acc_e += nf * p;
        if acc_e >= 5.0 {
            pooled.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        // merge the leftover tail into the final pooled cell
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc_o;
                last.1 += acc_e;
            }
            None => pooled.push((acc_o, acc_e)),
        }
    }
    if pooled.len() < 2 {
        return Err(Error::ExpectedCountTooSmall {
            min_expected: pooled.first().map_or(0.0, |c| c.1),
        });
    }
    if let Some(&(_, e)) = pooled.iter().find(|&&(_, e)| e < 5.0) {
        return Err(Error::ExpectedCountTooSmall { min_expected: e });
    }
    let stat: f64 = pooled
        .iter()
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (pooled.len() - 1) as f64;
    Ok((stat, chi_square_survival(stat, df)))
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_survival(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, stat / 2.0).clamp(0.0, 1.0)
}

/// Chi-square independence test on `(time, location)` pairs.
///
/// Time bins are placed at empirical quantiles (equal counts). Locations use
/// one bin per distinct value when there are at most `location_bins` of them,
/// and quantile bins otherwise. Degrees of freedom are
/// `(time_bins - 1) * (location_bins - 1)` for the realized bin counts.
pub fn independence_test(
    pairs: &[(f64, f64)],
    time_bins: usize,
    location_bins: usize,
) -> Result<(f64, f64)> {
    let n = pairs.len();
    let need = 50 * time_bins * location_bins;
    if n < need {
        return Err(Error::TooFewSamples { got: n, need });
    }
    let times: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let time_assign = quantile_bin_assignments(&times, time_bins)?;
    let n_time = *time_assign.iter().max().unwrap() + 1;
    if n_time < 2 {
        return Err(Error::DegenerateMarginal(
            "all kill times fall in a single bin".into(),
        ));
    }

    let locs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut distinct = locs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let loc_assign: Vec<usize> = if distinct.len() <= location_bins {
        if distinct.len() < 2 {
            return Err(Error::DegenerateMarginal(
                "all kill locations identical".into(),
            ));
        }
        locs.iter()
            .map(|x| distinct.partition_point(|d| d < x))
            .collect()
    } else {
        quantile_bin_assignments(&locs, location_bins)?
    };
    let n_loc = *loc_assign.iter().max().unwrap() + 1;
    if n_loc < 2 {
        return Err(Error::DegenerateMarginal(
            "all kill locations fall in a single bin".into(),
        ));
    }

    let mut table = vec![0.0f64; n_time * n_loc];
    for (&t, &l) in time_assign.iter().zip(&loc_assign) {
        table[t * n_loc + l] += 1.0;
    }
    let row_tot: Vec<f64> = (0..n_time)
        .map(|t| table[t * n_loc..(t + 1) * n_loc].iter().sum())
        .collect();
    let col_tot: Vec<f64> = (0..n_loc)
        .map(|l| (0..n_time).map(|t| table[t * n_loc + l]).sum())
        .collect();
    let nf = n as f64;
    let mut stat = 0.0;
    for t in 0..n_time {
        for l in 0..n_loc {
            let e = row_tot[t] * col_tot[l] / nf;
            if e > 0.0 {
                let o = table[t * n_loc + l];
                stat += (o - e) * (o - e) / e;
            }
        }
    }
    let df = ((n_time - 1) * (n_loc - 1)) as f64;
    Ok((stat, chi_square_survival(stat, df)))
}

/// Equal-count quantile bin assignment. Cut points fall between distinct
/// values so ties always share a bin; collapsed cuts reduce the bin count.
fn quantile_bin_assignments(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::DegenerateMarginal("need at least two bins".into()));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..bins)
        .map(|k| sorted[k * n / bins])
        .collect();
    cuts.dedup();
    cuts.retain(|&c| c > sorted[0]);
    let assign = values
        .iter()
        .map(|&x| cuts.partition_point(|&c| c <= x))
        .collect();
    Ok(assign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist2(a: f64, b: f64) -> EmpiricalDistribution {
        EmpiricalDistribution::from_masses(Support::States(vec![0, 1]), vec![a, b], 0).unwrap()
    }

    #[test]
    fn tv_examples() {
        let p = dist2(0.75, 0.25);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let da = dist2(1.0, 0.0);
        let db = dist2(0.0, 1.0);
        assert_eq!(tv_distance(&da, &db).unwrap(), 1.0);
        let q = dist2(0.5, 0.5);
        assert!((tv_distance(&p, &q).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tv_rejects_mismatched_support() {
        let p = dist2(0.5, 0.5);
        let q = EmpiricalDistribution::from_masses(Support::States(vec![3, 4]), vec![0.5, 0.5], 0)
            .unwrap();
        assert!(tv_distance(&p, &q).is_err());
    }

    #[test]
    fn distribution_invariants_enforced() {
        assert!(EmpiricalDistribution::from_masses(
            Support::States(vec![0, 1]),
            vec![0.7, 0.2],
            0
        )
        .is_err());
        assert!(EmpiricalDistribution::from_masses(
            Support::Bins(vec![0.0, 1.0, 0.5]),
            vec![0.5, 0.5],
            0
        )
        .is_err());
        assert!(
            EmpiricalDistribution::from_masses(Support::Bins(vec![0.0, 1.0]), vec![1.0], 9).is_ok()
        );
    }

    #[test]
    fn ks_equioscillating_quantiles() {
        // samples at F^{-1}((i - 1/2)/n) for the uniform cdf
        let n = 50;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let (d, _) = ks_test(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 1.0 / (2.0 * n as f64)).abs() < 1e-12, "D = {d}");
    }

    #[test]
    fn ks_detects_wrong_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let (_, p_right) = ks_test(&samples, |x| 1.0 - (-x).exp()).unwrap();
        assert!(p_right > 0.001, "self-test p = {p_right}");
        let (_, p_wrong) = ks_test(&samples, |x| 1.0 - (-2.0 * x).exp()).unwrap();
        assert!(p_wrong < 1e-6, "power check p = {p_wrong}");
    }

    #[test]
    fn ks_requires_samples() {
        assert!(matches!(
            ks_test(&[0.1; 5], |x| x),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn kolmogorov_series_forms_agree() {
        // the two series expansions must agree where both converge
        for i in 0..40 {
            let x = 0.3 + 0.05 * i as f64;
            let alternating = {
                let mut s = 0.0;
                let mut sign = 1.0;
                for k in 1..200 {
                    s += sign * (-2.0 * (k as f64) * (k as f64) * x * x).exp();
                    sign = -sign;
                }
                (2.0 * s).clamp(0.0, 1.0)
            };
            assert!(
                (kolmogorov_survival(x) - alternating).abs() < 1e-10,
                "mismatch at x = {x}"
            );
        }
    }

    #[test]
    fn ks_null_p_values_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut below = 0;
        for _ in 0..200 {
            let samples: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
            let (_, p) = ks_test(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
            if p < 0.1 {
                below += 1;
            }
        }
        let frac = below as f64 / 200.0;
        assert!((0.05..=0.17).contains(&frac), "fraction below 0.1: {frac}");
    }

    #[test]
    fn two_sample_ks_same_stream_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks_two_sample(&a, &b).unwrap();
        assert!(p > 0.001, "null p = {p}");
        let c: Vec<f64> = (0..5000).map(|_| rng.random::<f64>() * 0.8).collect();
        let (_, p_bad) = ks_two_sample(&a, &c).unwrap();
        assert!(p_bad < 1e-6, "shifted p = {p_bad}");
    }

    #[test]
    fn chi_square_exact_proportions() {
        let (stat, p) = chi_square_test(&[30, 30, 30], &[1.0 / 3.0; 3]).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn chi_square_table_value() {
        let (stat, p) = chi_square_test(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((stat - 4.0).abs() < 1e-12);
        assert!((p - 0.0455).abs() < 2e-4, "p = {p}");
    }

    #[test]
    fn chi_square_pools_small_cells() {
        // last two cells have expected counts 2.5 each and must pool
        let (stat, p) = chi_square_test(&[50, 45, 3, 2], &[0.5, 0.45, 0.025, 0.025]).unwrap();
        assert!(stat >= 0.0);
        assert!(p > 0.5);
    }

    #[test]
    fn chi_square_rejects_hopeless_cells() {
        assert!(matches!(
            chi_square_test(&[2, 1], &[0.5, 0.5]),
            Err(Error::ExpectedCountTooSmall { .. })
        ));
    }

    #[test]
    fn chi_square_relabel_invariant_without_pooling() {
        let obs = [40u64, 35, 25];
        let probs = [0.4, 0.35, 0.25];
        let (s1, p1) = chi_square_test(&obs, &probs).unwrap();
        let (s2, p2) = chi_square_test(&[25, 40, 35], &[0.25, 0.4, 0.35]).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
        assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn independence_null_and_alternative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<(f64, f64)> = (0..5000)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let (_, p) = independence_test(&pairs, 4, 4).unwrap();
        assert!(p > 0.001, "independent pairs p = {p}");

        let dependent: Vec<(f64, f64)> = pairs
            .iter()
            .map(|&(t, _)| (t, f64::from(u8::from(t > 0.5))))
            .collect();
        let (_, p_dep) = independence_test(&dependent, 4, 4).unwrap();
        assert!(p_dep < 1e-6, "dependent pairs p = {p_dep}");
    }

    #[test]
    fn independence_degenerate_location() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(f64, f64)> = (0..1000).map(|_| (rng.random::<f64>(), 2.0)).collect();
        assert!(matches!(
            independence_test(&pairs, 2, 2),
            Err(Error::DegenerateMarginal(_))
        ));
    }

    #[test]
    fn bin_index_half_open() {
        let edges = [0.0, 1.0, 2.0, f64::INFINITY];
        assert_eq!(bin_index(&edges, 0.0), Some(0));
        assert_eq!(bin_index(&edges, 0.999), Some(0));
        assert_eq!(bin_index(&edges, 1.0), Some(1));
        assert_eq!(bin_index(&edges, 1e12), Some(2));
        assert_eq!(bin_index(&edges, -0.1), None);
    }

    proptest! {
        #[test]
        fn tv_is_a_metric_on_common_support(
            raw_p in proptest::collection::vec(0.01f64..1.0, 4),
            raw_q in proptest::collection::vec(0.01f64..1.0, 4),
            raw_r in proptest::collection::vec(0.01f64..1.0, 4),
        ) {
            let support = Support::States(vec![0, 1, 2, 3]);
            let mk = |w: &[f64]| EmpiricalDistribution::from_weights(support.clone(), w, 0).unwrap();
            let (p, q, r) = (mk(&raw_p), mk(&raw_q), mk(&raw_r));
            let dpq = tv_distance(&p, &q).unwrap();
            let dqp = tv_distance(&q, &p).unwrap();
            let dpr = tv_distance(&p, &r).unwrap();
            let drq = tv_distance(&r, &q).unwrap();
            prop_assert!((dpq - dqp).abs() < 1e-15);
            prop_assert!(dpq <= dpr + drq + 1e-12);
            prop_assert!((0.0..=1.0).contains(&dpq));
        }
    }
}
