//! Unkilled dynamics and killing rates.
//!
//! Two dynamics classes are supported: finite continuous-time Markov chains
//! given by a conservative Q-matrix, and the deterministic unit-velocity ray
//! on `[0, inf)`. The killing rate is either a per-state table (chains) or a
//! piecewise polynomial (ray), so integrated hazards and local rate bounds
//! are available in closed form rather than by quadrature.

use crate::error::{Error, Result};

/// Absolute tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// First invariant violation found in a candidate generator matrix.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneratorViolation {
    /// Fewer than two states.
    #[error("need at least 2 states, got {n}")]
    TooFewStates { n: usize },
    /// An off-diagonal rate is negative.
    #[error("negative off-diagonal rate q[{row}][{col}] = {value}")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    /// A row does not sum to zero within [`ROW_SUM_TOL`].
    #[error("row {row} sums to {sum:e}, expected 0")]
    RowSumNonzero { row: usize, sum: f64 },
    /// An entry is NaN or infinite.
    #[error("non-finite rate q[{row}][{col}]")]
    NonFinite { row: usize, col: usize },
    /// Label list does not match the state count or has duplicates.
    #[error("bad state labels: {0}")]
    BadLabels(String),
}

/// Conservative Q-matrix of a finite CTMC.
///
/// Rows sum to zero, off-diagonal entries are nonnegative transition rates.
/// States carry integer labels (e.g. positions on a truncated lattice); the
/// matrix itself is indexed 0..n.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    rates: Vec<f64>, // row-major n*n
    labels: Vec<i64>,
}

impl GeneratorMatrix {
    /// Build from explicit rows with default labels `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let labels = (0..rows.len() as i64).collect();
        Self::from_rows_labeled(rows, labels)
    }

    /// Build from explicit rows and state labels.
    pub fn from_rows_labeled(rows: &[Vec<f64>], labels: Vec<i64>) -> Result<Self> {
        let n = rows.len();
        let mut rates = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidGenerator(GeneratorViolation::BadLabels(
                    format!("row length {} != state count {}", row.len(), n),
                )));
            }
            rates.extend_from_slice(row);
        }
        let g = Self { n, rates, labels };
        g.validate()?;
        Ok(g)
    }

    /// Truncated simple symmetric random walk on `{-n_trunc, ..., n_trunc}`.
    ///
    /// Interior states jump to both neighbours at rate 1; the boundary rows
    /// reflect (single rate-1 jump back inside).
    pub fn ssrw_truncated(n_trunc: usize) -> Self {
        let n = 2 * n_trunc + 1;
        let mut rates = vec![0.0; n * n];
        for i in 0..n {
            let mut total = 0.0;
            if i > 0 {
                rates[i * n + (i - 1)] = 1.0;
                total += 1.0;
            }
            if i + 1 < n {
                rates[i * n + (i + 1)] = 1.0;
                total += 1.0;
            }
            rates[i * n + i] = -total;
        }
        let labels = (-(n_trunc as i64)..=n_trunc as i64).collect();
        Self { n, rates, labels }
    }

    /// Nearest-neighbour path chain on `0..n` with all rates 1.
    pub fn path_chain(n: usize) -> Self {
        let mut rates = vec![0.0; n * n];
        for i in 0..n {
            let mut total = 0.0;
            if i > 0 {
                rates[i * n + (i - 1)] = 1.0;
                total += 1.0;
            }
            if i + 1 < n {
                rates[i * n + (i + 1)] = 1.0;
                total += 1.0;
            }
            rates[i * n + i] = -total;
        }
        Self {
            n,
            rates,
            labels: (0..n as i64).collect(),
        }
    }

    /// Check both generator invariants, reporting the first violation.
    pub fn validate(&self) -> std::result::Result<(), GeneratorViolation> {
        if self.n < 2 {
            return Err(GeneratorViolation::TooFewStates { n: self.n });
        }
        if self.labels.len() != self.n {
            return Err(GeneratorViolation::BadLabels(format!(
                "{} labels for {} states",
                self.labels.len(),
                self.n
            )));
        }
        for i in 0..self.n {
            for j in 0..self.n {
                let q = self.rates[i * self.n + j];
                if !q.is_finite() {
                    return Err(GeneratorViolation::NonFinite { row: i, col: j });
                }
                if i != j && q < 0.0 {
                    return Err(GeneratorViolation::NegativeOffDiagonal {
                        row: i,
                        col: j,
                        value: q,
                    });
                }
            }
            let sum: f64 = self.rates[i * self.n..(i + 1) * self.n].iter().sum();
            if sum.abs() > ROW_SUM_TOL {
                return Err(GeneratorViolation::RowSumNonzero { row: i, sum });
            }
        }
        let mut sorted = self.labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.n {
            return Err(GeneratorViolation::BadLabels("duplicate labels".into()));
        }
        Ok(())
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Rate from state `i` to state `j` (matrix indices).
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.n + j]
    }

    /// Total jump rate out of state `i` (`-q[i][i]`).
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rates[i * self.n + i]
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rates[i * self.n..(i + 1) * self.n]
    }

    /// State labels in matrix order.
    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Matrix index of a label, if present.
    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }
}

/// Dense polynomial with coefficients in ascending powers of x.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// `coeffs[k]` multiplies `x^k`. Trailing zeros are kept as given.
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// Constant polynomial.
    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// Coefficients in ascending powers.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Degree after stripping trailing zeros; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .unwrap_or(0)
    }

    /// True when all coefficients are zero.
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Derivative polynomial.
    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::constant(0.0);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Polynomial { coeffs }
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Polynomial {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(0.0);
        for (k, &c) in self.coeffs.iter().enumerate() {
            coeffs.push(c / (k + 1) as f64);
        }
        Polynomial { coeffs }
    }

    /// Real roots inside `[lo, hi]`, each polished by a few Newton steps.
    ///
    /// Closed forms for degree <= 2; companion-matrix eigenvalues above that.
    pub fn real_roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let deg = self.degree();
        let scale = self
            .coeffs
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
            .max(1.0);
        let keep = |r: f64| r >= lo - 1e-12 && r <= hi + 1e-12;
        let mut roots = match deg {
            0 => Vec::new(),
            1 => vec![-self.coeffs[0] / self.coeffs[1]],
            2 => {
                let (c, b, a) = (self.coeffs[0], self.coeffs[1], self.coeffs[2]);
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    Vec::new()
                } else {
                    // Citardauq pairing avoids cancellation for the small root.
                    let q = -0.5 * (b + b.signum() * disc.sqrt());
                    if q == 0.0 {
                        vec![0.0]
                    } else {
                        vec![q / a, c / q]
                    }
                }
            }
            _ => {
                let lead = self.coeffs[deg];
                let m = deg;
                let mut comp = nalgebra::DMatrix::<f64>::zeros(m, m);
                for k in 1..m {
                    comp[(k, k - 1)] = 1.0;
                }
                for k in 0..m {
                    comp[(k, m - 1)] = -self.coeffs[k] / lead;
                }
                comp.complex_eigenvalues()
                    .iter()
                    .filter(|ev| ev.im.abs() <= 1e-8 * (1.0 + ev.re.abs()))
                    .map(|ev| ev.re)
                    .collect()
            }
        };
        let deriv = self.derivative();
        for r in roots.iter_mut() {
            for _ in 0..4 {
                let d = deriv.eval(*r);
                if d == 0.0 {
                    break;
                }
                let step = self.eval(*r) / d;
                if !step.is_finite() || step.abs() > 1e-3 * scale.max(r.abs() + 1.0) {
                    break;
                }
                *r -= step;
            }
        }
        roots.retain(|&r| keep(r));
        roots.iter_mut().for_each(|r| *r = r.clamp(lo, hi));
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * (1.0 + a.abs()));
        roots
    }

    /// Exact extremum over `[lo, hi]`: endpoints plus interior critical points.
    fn extremum_on(&self, lo: f64, hi: f64, maximize: bool) -> f64 {
        let mut candidates = vec![lo, hi];
        candidates.extend(self.derivative().real_roots_in(lo, hi));
        let vals = candidates.into_iter().map(|x| self.eval(x));
        if maximize {
            vals.fold(f64::NEG_INFINITY, f64::max)
        } else {
            vals.fold(f64::INFINITY, f64::min)
        }
    }
}

/// Negative dips below this (relative) scale are treated as rounding noise.
const NEG_NOISE_TOL: f64 = 1e-12;

/// Piecewise-polynomial function on `[0, inf)`.
///
/// Piece `i` covers `[breaks[i], breaks[i+1])`; the last piece extends to
/// infinity. Nonnegativity is checked exactly per piece via critical points.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolynomial {
    breaks: Vec<f64>,
    polys: Vec<Polynomial>,
    // cumulative integral from 0 up to each break, and per-piece antiderivatives
    cum_at_break: Vec<f64>,
    antis: Vec<Polynomial>,
}

impl PiecewisePolynomial {
    /// Build from breakpoints (strictly increasing, starting at 0) and one
    /// polynomial per piece.
    pub fn new(breaks: Vec<f64>, polys: Vec<Polynomial>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != polys.len() {
            return Err(Error::InvalidRate(format!(
                "{} breakpoints for {} pieces",
                breaks.len(),
                polys.len()
            )));
        }
        if breaks[0] != 0.0 {
            return Err(Error::InvalidRate(format!(
                "first breakpoint must be 0, got {}",
                breaks[0]
            )));
        }
        for w in breaks.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidRate(format!(
                    "breakpoints not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (i, p) in polys.iter().enumerate() {
            if p.coeffs().iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidRate(format!("non-finite coefficient in piece {i}")));
            }
            let lo = breaks[i];
            let hi = match breaks.get(i + 1) {
                Some(&b) => b,
                // Unbounded piece: min lies at the left end, at a critical
                // point inside the Cauchy root bound, or at infinity.
                None => {
                    if p.is_zero() {
                        continue;
                    }
                    let deg = p.degree();
                    if deg > 0 && p.coeffs()[deg] < 0.0 {
                        return Err(Error::InvalidRate(format!(
                            "piece {i} tends to -inf on its unbounded interval"
                        )));
                    }
                    let lead = p.coeffs()[deg].abs().max(f64::MIN_POSITIVE);
                    let cauchy = 1.0 + p.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs() / lead));
                    lo.max(cauchy) + 1.0
                }
            };
            let scale = p.coeffs().iter().fold(1.0f64, |m, c| m.max(c.abs()));
            let min = p.extremum_on(lo, hi, false);
            if min < -NEG_NOISE_TOL * scale {
                return Err(Error::InvalidRate(format!(
                    "piece {i} dips to {min:e} on [{lo}, {hi})"
                )));
            }
        }
        let antis: Vec<Polynomial> = polys.iter().map(Polynomial::antiderivative).collect();
        let mut cum_at_break = vec![0.0; breaks.len()];
        for i in 1..breaks.len() {
            cum_at_break[i] = cum_at_break[i - 1]
                + (antis[i - 1].eval(breaks[i]) - antis[i - 1].eval(breaks[i - 1]));
        }
        Ok(Self {
            breaks,
            polys,
            cum_at_break,
            antis,
        })
    }

    /// Breakpoints.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    fn piece_of(&self, x: f64) -> usize {
        match self.breaks.binary_search_by(|b| b.total_cmp(&x)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Value at `x >= 0`, with negative rounding noise clamped to zero.
    pub fn eval(&self, x: f64) -> f64 {
        let v = self.polys[self.piece_of(x)].eval(x);
        v.max(0.0)
    }

    /// Integral from 0 to `x`.
    pub fn integral_to(&self, x: f64) -> f64 {
        let i = self.piece_of(x);
        self.cum_at_break[i] + self.antis[i].eval(x) - self.antis[i].eval(self.breaks[i])
    }

    /// Integral over `[a, b]`.
    pub fn integral_between(&self, a: f64, b: f64) -> f64 {
        (self.integral_to(b) - self.integral_to(a)).max(0.0)
    }

    /// True when the total integral over `[x, inf)` diverges for every x.
    ///
    /// For a nonnegative polynomial tail this holds exactly when the last
    /// piece is not identically zero.
    pub fn integral_diverges(&self) -> bool {
        !self.polys[self.polys.len() - 1].is_zero()
    }

    /// Exact maximum over `[a, b]` via endpoints and per-piece critical points.
    pub fn max_on(&self, a: f64, b: f64) -> f64 {
        let (i0, i1) = (self.piece_of(a), self.piece_of(b));
        let mut best = f64::NEG_INFINITY;
        for i in i0..=i1 {
            let lo = self.breaks[i].max(a);
            let hi = match self.breaks.get(i + 1) {
                Some(&nb) => nb.min(b),
                None => b,
            };
            if hi < lo {
                continue;
            }
            best = best.max(self.polys[i].extremum_on(lo, hi, true));
        }
        best.max(0.0)
    }

    /// Smallest `x >= from` with `integral_to(x) - integral_to(from) = target`.
    ///
    /// Walks pieces accumulating hazard, then solves inside the crossing piece
    /// by Newton steps safeguarded by bisection, to 1e-12 absolute on the
    /// integral. Requires a divergent tail integral.
    pub fn solve_cumulative(&self, from: f64, target: f64) -> Result<f64> {
        if !self.integral_diverges() {
            return Err(Error::KillingNotAlmostSure(
                "rate has finite total integral on the ray".into(),
            ));
        }
        let base = self.integral_to(from);
        let goal = base + target;
        let mut lo = from;
        let mut i = self.piece_of(from);
        loop {
            match self.breaks.get(i + 1) {
                Some(&b) => {
                    if self.integral_to(b) >= goal {
                        return Ok(self.solve_in_bracket(lo, b, goal));
                    }
                    lo = b;
                    i += 1;
                }
                None => {
                    // Last piece: bracket by doubling, guaranteed to cross.
                    let mut hi = if lo > 0.0 { lo * 2.0 } else { 1.0 };
                    while self.integral_to(hi) < goal {
                        hi *= 2.0;
                    }
                    return Ok(self.solve_in_bracket(lo, hi, goal));
                }
            }
        }
    }

    fn solve_in_bracket(&self, mut lo: f64, mut hi: f64, goal: f64) -> f64 {
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.integral_to(x) - goal;
            if f.abs() <= 1e-12 {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.eval(x);
            let newton = if d > 0.0 { x - f / d } else { f64::NAN };
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
                return x;
            }
        }
        x
    }
}

/// State-dependent killing rate: per-state table for chains, piecewise
/// polynomial for the ray.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    /// One nonnegative rate per state, aligned with matrix indices.
    Table(Vec<f64>),
    /// Piecewise-polynomial rate on `[0, inf)`.
    Piecewise(PiecewisePolynomial),
}

impl RateFunction {
    /// Per-state table, validated nonnegative and finite.
    pub fn table(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidRate(format!("rate for state {i} is {v}")));
            }
        }
        Ok(Self::Table(values))
    }

    /// Constant per-state table.
    pub fn uniform_table(rate: f64, n: usize) -> Result<Self> {
        Self::table(vec![rate; n])
    }

    /// Piecewise-polynomial rate from breakpoints and coefficient lists
    /// (ascending powers).
    pub fn piecewise(breaks: Vec<f64>, coeff_lists: Vec<Vec<f64>>) -> Result<Self> {
        let polys = coeff_lists.into_iter().map(Polynomial::new).collect();
        Ok(Self::Piecewise(PiecewisePolynomial::new(breaks, polys)?))
    }

    /// Rate for a chain state by matrix index.
    pub fn rate_for_state(&self, index: usize) -> Result<f64> {
        match self {
            Self::Table(values) => values.get(index).copied().ok_or(Error::RateOutOfDomain {
                query: format!("state {index}"),
                reason: format!("table has {} states", values.len()),
            }),
            Self::Piecewise(_) => Err(Error::RateOutOfDomain {
                query: format!("state {index}"),
                reason: "rate is piecewise on the ray, not a state table".into(),
            }),
        }
    }

    /// Rate at a ray position `x >= 0`.
    pub fn rate_at_position(&self, x: f64) -> Result<f64> {
        match self {
            Self::Piecewise(p) => {
                if x < 0.0 || !x.is_finite() {
                    return Err(Error::RateOutOfDomain {
                        query: format!("position {x}"),
                        reason: "ray positions are nonnegative".into(),
                    });
                }
                Ok(p.eval(x))
            }
            Self::Table(_) => Err(Error::RateOutOfDomain {
                query: format!("position {x}"),
                reason: "rate is a state table, not a ray function".into(),
            }),
        }
    }

    /// Upper bound on the rate over `[a, b]`, exact for the polynomial pieces
    /// up to a few ulps of headroom so that pointwise evaluations never exceed
    /// the bound in floating point.
    pub fn bound_on(&self, a: f64, b: f64) -> Result<f64> {
        let p = match self {
            Self::Piecewise(p) => p,
            Self::Table(_) => {
                return Err(Error::RateOutOfDomain {
                    query: format!("interval [{a}, {b}]"),
                    reason: "local bounds apply to ray rates only".into(),
                })
            }
        };
        if !(0.0 <= a && a < b && b.is_finite()) {
            return Err(Error::InvalidInterval { a, b });
        }
        let m = p.max_on(a, b);
        Ok(m + 4.0 * f64::EPSILON * m.abs().max(1.0))
    }

    /// The underlying piecewise polynomial, when ray-kind.
    pub fn as_piecewise(&self) -> Option<&PiecewisePolynomial> {
        match self {
            Self::Piecewise(p) => Some(p),
            Self::Table(_) => None,
        }
    }

    /// The underlying per-state table, when table-kind.
    pub fn as_table(&self) -> Option<&[f64]> {
        match self {
            Self::Table(v) => Some(v),
            Self::Piecewise(_) => None,
        }
    }
}

/// Deterministic unit-velocity motion on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayModel {
    start: f64,
}

impl RayModel {
    /// Start position `x0 >= 0`.
    pub fn new(start: f64) -> Result<Self> {
        if !(start >= 0.0) || !start.is_finite() {
            return Err(Error::RateOutOfDomain {
                query: format!("start {start}"),
                reason: "ray starts are nonnegative".into(),
            });
        }
        Ok(Self { start })
    }

    /// Start position.
    pub fn start(&self) -> f64 {
        self.start
    }

    /// Position after time `t`: exactly `start + t`.
    pub fn position_at(&self, t: f64) -> f64 {
        self.start + t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validate_accepts_symmetric_two_state() {
        let q = GeneratorMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert!(q.validate().is_ok());
        assert_eq!(q.exit_rate(0), 1.0);
    }

    #[test]
    fn validate_rejects_bad_row_sum() {
        let err = GeneratorMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, 0.0]]).unwrap_err();
        match err {
            Error::InvalidGenerator(GeneratorViolation::RowSumNonzero { row, sum }) => {
                assert_eq!(row, 1);
                assert!((sum - 1.0).abs() < 1e-15);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_negative_off_diagonal() {
        let err = GeneratorMatrix::from_rows(&[vec![-1.0, 1.0], vec![-1.0, 1.0]]).unwrap_err();
        match err {
            Error::InvalidGenerator(GeneratorViolation::NegativeOffDiagonal {
                row, col, ..
            }) => {
                assert_eq!((row, col), (1, 0));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_single_state() {
        let err = GeneratorMatrix::from_rows(&[vec![0.0]]).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidGenerator(GeneratorViolation::TooFewStates { n: 1 })
        ));
    }

    #[test]
    fn accepted_generator_kills_ones_vector() {
        let q = GeneratorMatrix::ssrw_truncated(50);
        assert!(q.validate().is_ok());
        for i in 0..q.n() {
            let s: f64 = q.row(i).iter().sum();
            assert!(s.abs() <= ROW_SUM_TOL, "row {i} sums to {s}");
        }
    }

    #[test]
    fn ssrw_labels_and_reflection() {
        let q = GeneratorMatrix::ssrw_truncated(3);
        assert_eq!(q.labels(), &[-3, -2, -1, 0, 1, 2, 3]);
        assert_eq!(q.index_of(0), Some(3));
        assert_eq!(q.exit_rate(0), 1.0); // boundary reflects
        assert_eq!(q.exit_rate(3), 2.0); // interior
    }

    #[test]
    fn table_lookup_and_domain_errors() {
        let k = RateFunction::table(vec![1.0, 1.0]).unwrap();
        assert_eq!(k.rate_for_state(0).unwrap(), 1.0);
        assert!(k.rate_for_state(5).is_err());
        assert!(k.rate_at_position(1.0).is_err());
        assert!(RateFunction::table(vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn piecewise_identity_and_square() {
        let lin = RateFunction::piecewise(vec![0.0], vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(lin.rate_at_position(2.5).unwrap(), 2.5);
        let sq = RateFunction::piecewise(vec![0.0], vec![vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(sq.rate_at_position(3.0).unwrap(), 9.0);
        assert!(sq.rate_at_position(-1.0).is_err());
    }

    #[test]
    fn eval_is_deterministic() {
        let k = RateFunction::piecewise(vec![0.0, 1.0], vec![vec![0.5, 0.25], vec![0.75]]).unwrap();
        let a = k.rate_at_position(0.7319).unwrap();
        let b = k.rate_at_position(0.7319).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn rejects_negative_piece() {
        // x - 1 is negative on [0, 1)
        assert!(RateFunction::piecewise(vec![0.0], vec![vec![-1.0, 1.0]]).is_err());
        // decreasing unbounded tail
        assert!(RateFunction::piecewise(vec![0.0], vec![vec![1.0, -0.1]]).is_err());
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(RateFunction::piecewise(vec![0.0, 1.0, 1.0], vec![vec![1.0]; 3]).is_err());
        assert!(RateFunction::piecewise(vec![0.5], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn bound_monotone_piece_is_right_endpoint() {
        let lin = RateFunction::piecewise(vec![0.0], vec![vec![0.0, 1.0]]).unwrap();
        let b = lin.bound_on(0.0, 4.0).unwrap();
        assert!((b - 4.0).abs() < 1e-12);
        assert!(b >= 4.0);
    }

    #[test]
    fn bound_constant() {
        let c = RateFunction::piecewise(vec![0.0], vec![vec![1.0]]).unwrap();
        let b = c.bound_on(2.0, 7.5).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_quadratic_interior_critical_point() {
        // x(4 - x) = 4x - x^2 peaks at x = 2 with value 4.
        let k = RateFunction::piecewise(vec![0.0, 4.0], vec![vec![0.0, 4.0, -1.0], vec![0.0]])
            .unwrap();
        let b = k.bound_on(0.0, 4.0).unwrap();
        assert!((b - 4.0).abs() < 1e-12, "bound was {b}");
    }

    #[test]
    fn bound_rejects_bad_interval() {
        let c = RateFunction::piecewise(vec![0.0], vec![vec![1.0]]).unwrap();
        assert!(matches!(
            c.bound_on(3.0, 3.0),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(c.bound_on(-1.0, 2.0).is_err());
        let t = RateFunction::table(vec![1.0, 2.0]).unwrap();
        assert!(t.bound_on(0.0, 1.0).is_err());
    }

    #[test]
    fn integral_and_divergence() {
        let lin = RateFunction::piecewise(vec![0.0], vec![vec![0.0, 1.0]]).unwrap();
        let p = lin.as_piecewise().unwrap();
        assert!((p.integral_between(0.0, 2.0) - 2.0).abs() < 1e-14);
        assert!(p.integral_diverges());

        let bump = RateFunction::piecewise(vec![0.0, 1.0], vec![vec![1.0], vec![0.0]]).unwrap();
        assert!(!bump.as_piecewise().unwrap().integral_diverges());
    }

    #[test]
    fn solve_cumulative_crosses_pieces() {
        // rate 1 on [0,1), rate 2 on [1,inf): hazard 1.8 -> 1 + 0.8/2 = 1.4
        let k = RateFunction::piecewise(vec![0.0, 1.0], vec![vec![1.0], vec![2.0]]).unwrap();
        let x = k.as_piecewise().unwrap().solve_cumulative(0.0, 1.8).unwrap();
        assert!((x - 1.4).abs() < 1e-12);
    }

    #[test]
    fn solve_cumulative_quadratic_hazard() {
        // kappa(x) = x from x0 = 0: hazard t^2/2 = xi -> t = sqrt(2 xi)
        let k = RateFunction::piecewise(vec![0.0], vec![vec![0.0, 1.0]]).unwrap();
        let x = k.as_piecewise().unwrap().solve_cumulative(0.0, 0.5).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_position_is_exact() {
        let ray = RayModel::new(0.25).unwrap();
        assert_eq!(ray.position_at(1.5), 1.75);
        assert!(RayModel::new(-0.1).is_err());
    }

    proptest! {
        // Squares of random quadratics are nonnegative polynomials of degree 4,
        // exercising the companion-matrix critical-point path.
        #[test]
        fn bound_dominates_sampled_evaluations(
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            c in -2.0f64..2.0,
            lo in 0.0f64..3.0,
            width in 0.1f64..4.0,
        ) {
            // (a + bx + cx^2)^2 expanded
            let coeffs = vec![
                a * a,
                2.0 * a * b,
                b * b + 2.0 * a * c,
                2.0 * b * c,
                c * c,
            ];
            let k = RateFunction::piecewise(vec![0.0], vec![coeffs]).unwrap();
            let hi = lo + width;
            let bound = k.bound_on(lo, hi).unwrap();
            for i in 0..1000 {
                let x = lo + width * (i as f64 + 0.5) / 1000.0;
                let v = k.rate_at_position(x).unwrap();
                prop_assert!(v <= bound, "rate {v} at {x} exceeds bound {bound}");
            }
        }

        #[test]
        fn generated_generators_validate(n in 2usize..8) {
            let q = GeneratorMatrix::path_chain(n);
            prop_assert!(q.validate().is_ok());
        }
    }
}
