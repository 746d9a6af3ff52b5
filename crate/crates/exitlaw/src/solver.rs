//! Exact computations on finite killed chains: resolvent solves, the exit
//! law, mean exit times, the resurrected invariant distribution, and the
//! quasi-stationary eigenpair.
//!
//! These are the ground-truth oracles for every simulation test. Two
//! independent algebraic routes are kept deliberately separate: the exit law
//! comes from a resolvent (linear) solve, while the resurrected invariant
//! comes from the null space of the resurrection generator, so agreement
//! between them is a real cross-check rather than a tautology.
//!
//! Dense LU with partial pivoting throughout; the truncated-lattice models
//! used here stay well under a few thousand states.

use crate::error::{Error, Result};
use crate::process::{GeneratorMatrix, RateFunction};
use nalgebra::{DMatrix, DVector};

/// Residual tolerance for linear solves, relative to the right-hand side.
pub const SOLVE_TOL: f64 = 1e-10;

/// Generator of the killed semigroup, `M = Q - diag(kappa)`.
#[derive(Debug, Clone)]
pub struct KilledGenerator {
    matrix: DMatrix<f64>,
    kappa: Vec<f64>,
}

impl KilledGenerator {
    /// The matrix `M`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The killing rates on the diagonal shift.
    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Row sums, which must equal `-kappa` entrywise.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.matrix.row(i).sum()
    }
}

/// Quasi-stationary eigenpair: the distribution `pi` and its killing rate
/// `theta`, satisfying `pi' M = -theta pi'`.
#[derive(Debug, Clone)]
pub struct QsdResult {
    /// Quasi-stationary distribution.
    pub pi: Vec<f64>,
    /// Quasi-stationary killing rate (exponential lifetime rate from `pi`).
    pub theta: f64,
}

fn kappa_table<'a>(generator: &GeneratorMatrix, kappa: &'a RateFunction) -> Result<&'a [f64]> {
    let table = kappa.as_table().ok_or_else(|| Error::RateOutOfDomain {
        query: "killed generator".into(),
        reason: "killing rate must be a per-state table".into(),
    })?;
    if table.len() != generator.n() {
        return Err(Error::RateOutOfDomain {
            query: format!("table of {} rates", table.len()),
            reason: format!("chain has {} states", generator.n()),
        });
    }
    Ok(table)
}

/// Assemble `M = Q - diag(kappa)`, refusing rates under which killing is not
/// almost sure (no positive rate reachable from some state).
pub fn killed_generator(generator: &GeneratorMatrix, kappa: &RateFunction) -> Result<KilledGenerator> {
    generator.validate()?;
    let table = kappa_table(generator, kappa)?;
    let n = generator.n();
    let mut reaches = vec![false; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| table[i] > 0.0).collect();
    for &i in &queue {
        reaches[i] = true;
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
            "state {stuck} (label {}) cannot reach any positive killing rate",
            generator.labels()[stuck]
        )));
    }
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            matrix[(i, j)] = generator.rate(i, j);
        }
        matrix[(i, i)] -= table[i];
    }
    Ok(KilledGenerator {
        matrix,
        kappa: table.to_vec(),
    })
}

fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::SingularSystem(what.to_string()))?;
    let residual = (a * &x - b).amax();
    let scale = b.amax().max(f64::MIN_POSITIVE);
    if residual > SOLVE_TOL * scale {
        return Err(Error::SingularSystem(format!(
            "{what}: residual {residual:e} exceeds {SOLVE_TOL:e} x rhs scale"
        )));
    }
    Ok(x)
}

/// Solve `(diag(kappa) - Q) g = f`: the resolvent applied to `f`.
pub fn resolvent_solve(
    generator: &GeneratorMatrix,
    kappa: &RateFunction,
    f: &[f64],
) -> Result<Vec<f64>> {
    let killed = killed_generator(generator, kappa)?;
    let n = generator.n();
    if f.len() != n {
        return Err(Error::MismatchedSupport(format!(
            "rhs of length {} on a chain of {n} states",
            f.len()
        )));
    }
    let a = -&killed.matrix; // diag(kappa) - Q
    let g = solve_checked(&a, &DVector::from_column_slice(f), "resolvent solve")?;
    Ok(g.iter().copied().collect())
}

fn check_probability_vector(mu: &[f64], n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::InvalidMeasure(format!(
            "{} weights on a chain of {n} states",
            mu.len()
        )));
    }
    let mut total = 0.0;
    for &w in mu {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidMeasure(format!("weight {w}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
    }
    Ok(())
}

/// Exact law of the pre-kill location started from `mu`:
/// `mu' (diag(kappa) - Q)^{-1} diag(kappa)`, entrywise nonnegative and
/// summing to one within [`SOLVE_TOL`] (that unit sum is the `R kappa = 1`
/// identity).
pub fn exit_law_exact(
    generator: &GeneratorMatrix,
    kappa: &RateFunction,
    mu: &[f64],
) -> Result<Vec<f64>> {
    let killed = killed_generator(generator, kappa)?;
    check_probability_vector(mu, generator.n())?;
    let a_t = (-&killed.matrix).transpose();
    let h = solve_checked(&a_t, &DVector::from_column_slice(mu), "exit law solve")?;
    let mut law: Vec<f64> = h
        .iter()
        .zip(&killed.kappa)
        .map(|(hj, kj)| hj * kj)
        .collect();
    let total: f64 = law.iter().sum();
    if (total - 1.0).abs() > SOLVE_TOL {
        return Err(Error::SingularSystem(format!(
            "exit law sums to {total}, violating the unit-mass identity"
        )));
    }
    for v in law.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::SingularSystem(format!(
                    "exit law entry {v:e} is negative beyond rounding noise"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(law)
}

/// Mean kill time from `mu`: `mu' (diag(kappa) - Q)^{-1} 1`.
pub fn mean_exit_time_exact(
    generator: &GeneratorMatrix,
    kappa: &RateFunction,
    mu: &[f64],
) -> Result<f64> {
    check_probability_vector(mu, generator.n())?;
    let lifetimes = resolvent_solve(generator, kappa, &vec![1.0; generator.n()])?;
    Ok(mu.iter().zip(&lifetimes).map(|(m, g)| m * g).sum())
}

/// Adjacency of strictly positive off-diagonal rates.
fn adjacency(matrix: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = matrix.nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && matrix[(i, j)] > 0.0)
                .collect()
        })
        .collect()
}

fn reachable(adj: &[Vec<usize>], starts: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue: Vec<usize> = starts.to_vec();
    for &s in starts {
        seen[s] = true;
    }
    while let Some(i) = queue.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push(j);
            }
        }
    }
    seen
}

/// Kosaraju strongly connected components, in discovery order.
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    // iterative DFS with explicit post-order
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < adj[node].len() {
                let child = adj[node][*next];
                *next += 1;
                if !seen[child] {
                    seen[child] = true;
                    stack.push((child, 0));
                }
            } else {
                order.push(node);
                stack.pop();
            }
        }
    }
    let mut radj = vec![Vec::new(); n];
    for (i, row) in adj.iter().enumerate() {
        for &j in row {
            radj[j].push(i);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut components = Vec::new();
    for &start in order.iter().rev() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut queue = vec![start];
        while let Some(i) = queue.pop() {
            for &j in &radj[i] {
                if comp[j] == usize::MAX {
                    comp[j] = id;
                    members.push(j);
                    queue.push(j);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Normalized left null vector of `a` (solves `pi' a = 0`, `sum pi = 1`) by
/// replacing one balance equation with the normalization.
fn left_null_vector(a: &DMatrix<f64>, what: &str) -> Result<Vec<f64>> {
    let n = a.nrows();
    let mut system = a.transpose();
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = solve_checked(&system, &rhs, what)?;
    let total: f64 = pi.iter().sum();
    let mut out: Vec<f64> = pi.iter().map(|p| p / total).collect();
    // residual against the full balance equations
    let residual = (a.transpose() * DVector::from_column_slice(&out)).amax();
    if residual > SOLVE_TOL {
        return Err(Error::SingularSystem(format!(
            "{what}: balance residual {residual:e}"
        )));
    }
    for v in out.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::SingularSystem(format!(
                    "{what}: entry {v:e} negative beyond rounding noise"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Stationary distribution of an irreducible conservative generator.
pub fn stationary_distribution(generator: &GeneratorMatrix) -> Result<Vec<f64>> {
    generator.validate()?;
    let n = generator.n();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = generator.rate(i, j);
        }
    }
    let components = strongly_connected_components(&adjacency(&q));
    if components.len() != 1 {
        return Err(reducible_error(generator, &components));
    }
    left_null_vector(&q, "stationary distribution")
}

fn reducible_error(generator: &GeneratorMatrix, components: &[Vec<usize>]) -> Error {
    let classes = components
        .iter()
        .map(|c| c.iter().map(|&i| generator.labels()[i]).collect())
        .collect();
    Error::Reducible { classes }
}

/// Exact invariant distribution of the `mu`-resurrected process.
///
/// Assembles the resurrection generator `Q_res = Q - diag(kappa) + kappa mu'`
/// (every state jumps to a `mu`-distributed rebirth at its killing rate) and
/// solves for its normalized left null vector. Demands irreducibility on the
/// reachable closure of `support(mu)` and reports the communicating classes
/// otherwise.
pub fn resurrected_invariant_exact(
    generator: &GeneratorMatrix,
    kappa: &RateFunction,
    mu: &[f64],
) -> Result<Vec<f64>> {
    let killed = killed_generator(generator, kappa)?;
    check_probability_vector(mu, generator.n())?;
    let n = generator.n();
    let mut q_res = killed.matrix.clone();
    for i in 0..n {
        for j in 0..n {
            q_res[(i, j)] += killed.kappa[i] * mu[j];
        }
    }
    let adj = adjacency(&q_res);
    let support: Vec<usize> = (0..n).filter(|&j| mu[j] > 0.0).collect();
    let closure = reachable(&adj, &support);
    let members: Vec<usize> = (0..n).filter(|&i| closure[i]).collect();
    let sub = DMatrix::from_fn(members.len(), members.len(), |a, b| {
        q_res[(members[a], members[b])]
    });
    let sub_components = strongly_connected_components(&adjacency(&sub));
    if sub_components.len() != 1 {
        let remapped: Vec<Vec<usize>> = sub_components
            .iter()
            .map(|c| c.iter().map(|&i| members[i]).collect())
            .collect();
        return Err(reducible_error(generator, &remapped));
    }
    let pi_sub = left_null_vector(&sub, "resurrected invariant")?;
    let mut pi = vec![0.0; n];
    for (k, &i) in members.iter().enumerate() {
        pi[i] = pi_sub[k];
    }
    Ok(pi)
}

/// Maximum power-iteration sweeps for the quasi-stationary eigenpair.
pub const QSD_MAX_ITERATIONS: usize = 100_000;

/// Quasi-stationary eigenpair of `M = Q - diag(kappa)`.
///
/// Power iteration on the nonnegative surrogate `B = I + h M` with
/// `h = 0.5 / max|M_ii|`, which keeps every entry of the iteration matrix
/// nonnegative with a positive diagonal, so the Perron left eigenvector is
/// the quasi-stationary distribution and `theta = (1 - lambda_B)/h`.
pub fn qsd_exact(generator: &GeneratorMatrix, kappa: &RateFunction) -> Result<QsdResult> {
    let killed = killed_generator(generator, kappa)?;
    let m = &killed.matrix;
    let n = m.nrows();
    let components = strongly_connected_components(&adjacency(m));
    if components.len() != 1 {
        return Err(reducible_error(generator, &components));
    }
    let max_diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max);
    if max_diag == 0.0 {
        return Err(Error::KillingNotAlmostSure(
            "generator and killing rate are both zero".into(),
        ));
    }
    let h = 0.5 / max_diag;
    let b = DMatrix::identity(n, n) + h * m;
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut theta = 0.0;
    let mut residual = f64::INFINITY;
    for iteration in 0..QSD_MAX_ITERATIONS {
        let w = b.tr_mul(&v); // B' v, i.e. left multiplication v' B
        let lambda: f64 = w.sum();
        v = w / lambda;
        theta = (1.0 - lambda) / h;
        // residual of pi' M = -theta pi'
        residual = (m.tr_mul(&v) + theta * &v).amax();
        // converge well past the guaranteed tolerance so downstream
        // identities hold at 1e-10 even after summing n terms
        if residual <= 5e-13 {
            break;
        }
        if iteration == QSD_MAX_ITERATIONS - 1 && residual > SOLVE_TOL {
            return Err(Error::NonConvergence {
                iterations: QSD_MAX_ITERATIONS,
                residual,
            });
        }
    }
    let _ = residual;
    let pi: Vec<f64> = v.iter().copied().collect();
    let theta_from_rate: f64 = pi.iter().zip(&killed.kappa).map(|(p, k)| p * k).sum();
    if (theta_from_rate - theta).abs() > SOLVE_TOL {
        return Err(Error::NonConvergence {
            iterations: QSD_MAX_ITERATIONS,
            residual: (theta_from_rate - theta).abs(),
        });
    }
    Ok(QsdResult { pi, theta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> GeneratorMatrix {
        GeneratorMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    fn table(v: &[f64]) -> RateFunction {
        RateFunction::table(v.to_vec()).unwrap()
    }

    #[test]
    fn killed_generator_subtracts_rates() {
        let k = killed_generator(&two_state(), &table(&[1.0, 1.0])).unwrap();
        assert_eq!(k.matrix()[(0, 0)], -2.0);
        assert_eq!(k.matrix()[(0, 1)], 1.0);
        assert_eq!(k.matrix()[(1, 1)], -2.0);
        assert!((k.row_sum(0) + 1.0).abs() < 1e-12);

        let k2 = killed_generator(&two_state(), &table(&[2.0, 0.0])).unwrap();
        assert_eq!(k2.matrix()[(0, 0)], -3.0);
        assert_eq!(k2.matrix()[(1, 1)], -1.0);
    }

    #[test]
    fn killed_generator_rejects_zero_killing() {
        assert!(matches!(
            killed_generator(&two_state(), &table(&[0.0, 0.0])),
            Err(Error::KillingNotAlmostSure(_))
        ));
    }

    #[test]
    fn resolvent_of_kappa_is_ones() {
        let g = resolvent_solve(&two_state(), &table(&[1.0, 1.0]), &[1.0, 1.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);

        let kappa = [0.3, 1.7];
        let g = resolvent_solve(&two_state(), &table(&kappa), &kappa).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolvent_hand_inverse() {
        // (diag(1,1) - Q) = [[2,-1],[-1,2]], inverse (1/3)[[2,1],[1,2]]
        let g = resolvent_solve(&two_state(), &table(&[1.0, 1.0]), &[1.0, 0.0]).unwrap();
        assert!((g[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((g[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn resolvent_of_ones_is_lifetime() {
        let g = resolvent_solve(&two_state(), &table(&[1.0, 1.0]), &[1.0, 1.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exit_law_from_point_mass() {
        let law = exit_law_exact(&two_state(), &table(&[1.0, 1.0]), &[1.0, 0.0]).unwrap();
        assert!((law[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((law[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exit_law_from_stationary_under_constant_killing() {
        // asymmetric chain: stationary (1/3, 2/3); constant killing leaves it
        let q = GeneratorMatrix::from_rows(&[vec![-2.0, 2.0], vec![1.0, -1.0]]).unwrap();
        let mu = stationary_distribution(&q).unwrap();
        assert!((mu[0] - 1.0 / 3.0).abs() < 1e-12);
        let law = exit_law_exact(&q, &table(&[0.7, 0.7]), &mu).unwrap();
        assert!((law[0] - mu[0]).abs() < 1e-11);
        assert!((law[1] - mu[1]).abs() < 1e-11);
    }

    #[test]
    fn exit_law_symmetric_uniform() {
        let law =
            exit_law_exact(&two_state(), &table(&[1.5, 1.5]), &[0.5, 0.5]).unwrap();
        assert!((law[0] - 0.5).abs() < 1e-12 && (law[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mean_exit_time_examples() {
        let t = mean_exit_time_exact(&two_state(), &table(&[1.0, 1.0]), &[0.25, 0.75]).unwrap();
        assert!((t - 1.0).abs() < 1e-12);

        // kappa = (1,0): (diag(kappa)-Q) g = 1 gives g = (2,3)
        let t_b = mean_exit_time_exact(&two_state(), &table(&[1.0, 0.0]), &[0.0, 1.0]).unwrap();
        assert!((t_b - 3.0).abs() < 1e-12);

        let q = GeneratorMatrix::ssrw_truncated(30);
        let n = q.n();
        let mut mu = vec![0.0; n];
        mu[15] = 1.0;
        let t = mean_exit_time_exact(&q, &RateFunction::uniform_table(1.0, n).unwrap(), &mu)
            .unwrap();
        assert!((t - 1.0).abs() < 1e-10);
    }

    #[test]
    fn resurrected_invariant_two_state() {
        // Q_res = [[-1,1],[2,-2]] has left null vector (2/3, 1/3)
        let pi =
            resurrected_invariant_exact(&two_state(), &table(&[1.0, 1.0]), &[1.0, 0.0]).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rebirth_from_stationary_is_invisible() {
        let q = GeneratorMatrix::from_rows(&[vec![-2.0, 2.0], vec![1.0, -1.0]]).unwrap();
        let mu = stationary_distribution(&q).unwrap();
        let pi = resurrected_invariant_exact(&q, &table(&[0.9, 0.9]), &mu).unwrap();
        assert!((pi[0] - mu[0]).abs() < 1e-11);
        assert!((pi[1] - mu[1]).abs() < 1e-11);
    }

    #[test]
    fn resurrected_ssrw_geometric_interior_ratio() {
        let q = GeneratorMatrix::ssrw_truncated(200);
        let n = q.n();
        let kappa = RateFunction::uniform_table(1.0, n).unwrap();
        let mut mu = vec![0.0; n];
        mu[q.index_of(0).unwrap()] = 1.0;
        let pi = resurrected_invariant_exact(&q, &kappa, &mu).unwrap();
        let golden = (3.0 - 5.0f64.sqrt()) / 2.0;
        for label in 5..=50 {
            let i = q.index_of(label).unwrap();
            let j = q.index_of(label + 1).unwrap();
            let ratio = pi[j] / pi[i];
            assert!(
                (ratio - golden).abs() < 1e-6,
                "ratio at {label}: {ratio} vs {golden}"
            );
        }
    }

    #[test]
    fn reducible_resurrection_reports_classes() {
        // two disconnected 2-blocks; mu on block one only, kappa on block one
        let q = GeneratorMatrix::from_rows(&[
            vec![-1.0, 1.0, 0.0, 0.0],
            vec![1.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0, 1.0],
            vec![0.0, 0.0, 1.0, -1.0],
        ])
        .unwrap();
        // reachable closure of mu = {0,1}, strongly connected: fine
        let kappa = table(&[1.0, 1.0, 1.0, 1.0]);
        let pi = resurrected_invariant_exact(&q, &kappa, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(pi[2] == 0.0 && pi[3] == 0.0);
        assert!((pi[0] + pi[1] - 1.0).abs() < 1e-12);

        // one-way bridge out of the support's class: closure not strongly connected
        let q2 = GeneratorMatrix::from_rows(&[
            vec![-2.0, 1.0, 1.0, 0.0],
            vec![1.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0, 1.0],
            vec![0.0, 0.0, 1.0, -1.0],
        ])
        .unwrap();
        // kappa zero on {2,3} so no rebirth edges lead back out of it
        let err =
            resurrected_invariant_exact(&q2, &table(&[1.0, 1.0, 0.0, 0.0]), &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(err, Err(Error::Reducible { .. }) | Err(Error::KillingNotAlmostSure(_))));
    }

    #[test]
    fn qsd_constant_killing_is_stationary() {
        let res = qsd_exact(&two_state(), &table(&[0.8, 0.8])).unwrap();
        assert!((res.pi[0] - 0.5).abs() < 1e-10);
        assert!((res.theta - 0.8).abs() < 1e-10);
    }

    #[test]
    fn qsd_two_state_eigen_oracle() {
        // M = [[-3,1],[1,-1]]: eigenvalues -2 +/- sqrt(2); theta = 2 - sqrt(2),
        // pi proportional to (1, 1 + sqrt(2))
        let res = qsd_exact(&two_state(), &table(&[2.0, 0.0])).unwrap();
        let theta_expect = 2.0 - 2.0f64.sqrt();
        assert!((res.theta - theta_expect).abs() < 1e-10, "theta {}", res.theta);
        let denom = 2.0 + 2.0f64.sqrt();
        assert!((res.pi[0] - 1.0 / denom).abs() < 1e-10);
        assert!((res.pi[1] - (1.0 + 2.0f64.sqrt()) / denom).abs() < 1e-10);
        // theta equals the pi-average of kappa: 2 * pi_0
        let avg = 2.0 * res.pi[0];
        assert!((avg - res.theta).abs() < 1e-10);
    }

    #[test]
    fn qsd_left_eigen_residual() {
        let q = GeneratorMatrix::path_chain(5);
        let kappa = table(&[0.3, 0.0, 1.1, 0.2, 0.7]);
        let res = qsd_exact(&q, &kappa).unwrap();
        let killed = killed_generator(&q, &kappa).unwrap();
        let pi = DVector::from_column_slice(&res.pi);
        let residual = (killed.matrix().tr_mul(&pi) + res.theta * &pi).amax();
        assert!(residual < 1e-10, "residual {residual:e}");
        let avg: f64 = res
            .pi
            .iter()
            .zip(kappa.as_table().unwrap())
            .map(|(p, k)| p * k)
            .sum();
        assert!((avg - res.theta).abs() < 1e-10);
    }

    #[test]
    fn qsd_rejects_reducible_chain() {
        let q = GeneratorMatrix::from_rows(&[
            vec![-1.0, 1.0, 0.0],
            vec![1.0, -1.0, 0.0],
            vec![1.0, 0.0, -1.0],
        ])
        .unwrap();
        assert!(matches!(
            qsd_exact(&q, &table(&[1.0, 1.0, 1.0])),
            Err(Error::Reducible { .. })
        ));
    }

    #[test]
    fn prop_qsd_exit_law_is_reweighted_qsd() {
        let q = GeneratorMatrix::path_chain(4);
        let kappa = table(&[0.5, 1.5, 0.4, 2.2]);
        let res = qsd_exact(&q, &kappa).unwrap();
        let law = exit_law_exact(&q, &kappa, &res.pi).unwrap();
        for i in 0..4 {
            let expected = kappa.as_table().unwrap()[i] * res.pi[i] / res.theta;
            assert!(
                (law[i] - expected).abs() < 1e-9,
                "entry {i}: {} vs {expected}",
                law[i]
            );
        }
    }

    #[test]
    fn fixed_point_at_qsd() {
        let q = GeneratorMatrix::path_chain(4);
        let kappa = table(&[0.5, 1.5, 0.4, 2.2]);
        let res = qsd_exact(&q, &kappa).unwrap();
        let pi_res = resurrected_invariant_exact(&q, &kappa, &res.pi).unwrap();
        for i in 0..4 {
            assert!(
                (pi_res[i] - res.pi[i]).abs() < 1e-9,
                "entry {i}: {} vs {}",
                pi_res[i],
                res.pi[i]
            );
        }
    }

    #[test]
    fn mixture_decomposition_identity() {
        // kappa >= eps: exit law from the QSD splits into the eps-clock
        // mixture of pi and the (kappa - eps)-killed exit law
        let q = GeneratorMatrix::path_chain(3);
        let kappa_v = [1.0, 2.0, 3.0];
        let kappa = table(&kappa_v);
        let eps = 1.0;
        let res = qsd_exact(&q, &kappa).unwrap();
        let law = exit_law_exact(&q, &kappa, &res.pi).unwrap();
        let reduced = table(&[0.0, 1.0, 2.0]);
        let law_reduced = exit_law_exact(&q, &reduced, &res.pi).unwrap();
        let theta_prime = res.theta - eps;
        for i in 0..3 {
            let mixed = theta_prime / (theta_prime + eps) * law_reduced[i]
                + eps / (theta_prime + eps) * res.pi[i];
            assert!(
                (law[i] - mixed).abs() < 1e-9,
                "entry {i}: {} vs {mixed}",
                law[i]
            );
        }
    }

    #[test]
    fn resolvent_preserves_nonnegativity() {
        let q = GeneratorMatrix::path_chain(6);
        let kappa = table(&[0.2, 0.9, 0.1, 1.4, 0.6, 0.3]);
        let g = resolvent_solve(&q, &kappa, &[0.0, 1.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        for &v in &g {
            assert!(v >= -1e-12, "resolvent went negative: {v}");
        }
    }
}
