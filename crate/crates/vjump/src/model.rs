//! Model and parameter representations shared by the simulator, the
//! likelihood approximations and the inference machinery.
//!
//! An n-state velocity-jump model moves an agent at the fixed velocity of
//! its current hidden state; the state holds for an exponential time with a
//! per-state rate and then jumps to another state according to a
//! row-stochastic network matrix with zero diagonal. Observations are taken
//! every `delta_t` time units with additive Gaussian noise.

use crate::error::{Error, Result};
use crate::stats;

/// Row-sum slack accepted for the network matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A fully bound numeric model. Immutable after construction; all
/// invariants are checked by [`VelocityJumpModel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityJumpModel {
    n: usize,
    velocities: Vec<f64>,
    rates: Vec<f64>,
    /// Natural logs of the rates. Kept alongside so that binding a
    /// parameter vector and extracting it back is lossless.
    log_rates: Vec<f64>,
    network: Vec<f64>, // row-major n*n, zero diagonal
    sigma: f64,
    delta_t: f64,
}

impl VelocityJumpModel {
    pub fn new(
        velocities: Vec<f64>,
        rates: Vec<f64>,
        network: Vec<Vec<f64>>,
        sigma: f64,
        delta_t: f64,
    ) -> Result<Self> {
        let n = velocities.len();
        if n == 0 || rates.len() != n || network.len() != n {
            return Err(Error::Template(format!(
                "inconsistent state counts: {} velocities, {} rates, {} network rows",
                n,
                rates.len(),
                network.len()
            )));
        }
        for (state, &rate) in rates.iter().enumerate() {
            if !(rate > 0.0) {
                return Err(Error::InvalidRate { state, value: rate });
            }
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidSigma(sigma));
        }
        if !(delta_t > 0.0) {
            return Err(Error::InvalidDeltaT(delta_t));
        }
        let mut flat = vec![0.0; n * n];
        for (row, entries) in network.iter().enumerate() {
            if entries.len() != n {
                return Err(Error::Template(format!(
                    "network row {row} has {} entries, expected {n}",
                    entries.len()
                )));
            }
            let mut sum = 0.0;
            for (col, &p) in entries.iter().enumerate() {
                if row == col {
                    if p != 0.0 {
                        return Err(Error::InvalidProbability {
                            row,
                            col,
                            value: p,
                        });
                    }
                    continue;
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidProbability {
                        row,
                        col,
                        value: p,
                    });
                }
                sum += p;
                flat[row * n + col] = p;
            }
            // A single state has nowhere to jump; its (empty) row is exempt.
            if n > 1 && (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowSumMismatch { row, sum });
            }
        }
        let log_rates = rates.iter().map(|r| r.ln()).collect();
        Ok(Self {
            n,
            velocities,
            rates,
            log_rates,
            network: flat,
            sigma,
            delta_t,
        })
    }

    pub(crate) fn override_log_rates(&mut self, log_rates: Vec<(usize, f64)>) {
        for (state, log_rate) in log_rates {
            self.log_rates[state] = log_rate;
        }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn velocity(&self, state: usize) -> f64 {
        self.velocities[state]
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn rate(&self, state: usize) -> f64 {
        self.rates[state]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Natural log of a switching rate, exactly as bound.
    pub fn log_rate(&self, state: usize) -> f64 {
        self.log_rates[state]
    }

    /// Jump probability from `from` to `to`; the diagonal is zero.
    pub fn jump_probability(&self, from: usize, to: usize) -> f64 {
        self.network[from * self.n + to]
    }

    pub fn network_row(&self, from: usize) -> &[f64] {
        &self.network[from * self.n..(from + 1) * self.n]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Stationary distribution of the hidden-state chain; used as the
    /// initial law for simulation and for every likelihood.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        stationary_distribution(self)
    }
}

/// How one scalar of the model is specified in a template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueSpec {
    Free,
    Fixed(f64),
}

/// One off-diagonal network entry in a template row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbEntry {
    Free,
    Fixed(f64),
    /// One minus the other entries of the row.
    Complement,
}

/// Declarative structure of an n-state model: which velocities, rates,
/// network entries and the noise are free parameters and which are fixed.
///
/// Free parameters are ordered velocities first (by state), then rates (as
/// natural-log values), then network probabilities (row-major), then the
/// noise standard deviation. Each network row with at least one non-fixed
/// entry carries exactly one complement entry holding the remaining
/// probability mass; if none is given explicitly, the last non-fixed entry
/// of the row becomes the complement.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTemplate {
    velocities: Vec<ValueSpec>,
    rates: Vec<ValueSpec>,
    /// Off-diagonal entries per row, keyed by (column, spec), column-ascending.
    rows: Vec<Vec<(usize, ProbEntry)>>,
    noise: ValueSpec,
    delta_t: f64,
    k: usize,
}

impl ModelTemplate {
    pub fn new(
        velocities: Vec<ValueSpec>,
        rates: Vec<ValueSpec>,
        network_rows: Vec<Vec<ProbEntry>>,
        noise: ValueSpec,
        delta_t: f64,
    ) -> Result<Self> {
        let n = velocities.len();
        if n == 0 {
            return Err(Error::Template("need at least one state".into()));
        }
        if rates.len() != n || network_rows.len() != n {
            return Err(Error::Template(format!(
                "inconsistent state counts: {} velocities, {} rates, {} network rows",
                n,
                rates.len(),
                network_rows.len()
            )));
        }
        if !(delta_t > 0.0) {
            return Err(Error::InvalidDeltaT(delta_t));
        }
        let mut rows = Vec::with_capacity(n);
        for (r, entries) in network_rows.into_iter().enumerate() {
            if entries.len() != n - 1 {
                return Err(Error::Template(format!(
                    "row {r} needs {} off-diagonal entries, got {}",
                    n - 1,
                    entries.len()
                )));
            }
            let columns: Vec<usize> = (0..n).filter(|&c| c != r).collect();
            let mut row: Vec<(usize, ProbEntry)> = columns.into_iter().zip(entries).collect();
            let n_complement = row
                .iter()
                .filter(|(_, e)| matches!(e, ProbEntry::Complement))
                .count();
            let n_non_fixed = row
                .iter()
                .filter(|(_, e)| !matches!(e, ProbEntry::Fixed(_)))
                .count();
            match (n_non_fixed, n_complement) {
                (0, 0) => {
                    let sum: f64 = row
                        .iter()
                        .map(|(_, e)| match e {
                            ProbEntry::Fixed(v) => *v,
                            _ => unreachable!(),
                        })
                        .sum();
                    if n > 1 && (sum - 1.0).abs() > ROW_SUM_TOL {
                        return Err(Error::Template(format!(
                            "fully fixed row {r} sums to {sum}, expected 1"
                        )));
                    }
                }
                (_, 0) => {
                    // Default rule: the last non-fixed entry completes the row.
                    let last = row
                        .iter()
                        .rposition(|(_, e)| !matches!(e, ProbEntry::Fixed(_)))
                        .unwrap();
                    row[last].1 = ProbEntry::Complement;
                }
                (_, 1) => {}
                _ => {
                    return Err(Error::Template(format!(
                        "row {r} has {n_complement} complement entries, at most one is allowed"
                    )));
                }
            }
            rows.push(row);
        }
        let k = velocities
            .iter()
            .chain(rates.iter())
            .filter(|s| matches!(s, ValueSpec::Free))
            .count()
            + rows
                .iter()
                .flatten()
                .filter(|(_, e)| matches!(e, ProbEntry::Free))
                .count()
            + usize::from(matches!(noise, ValueSpec::Free));
        Ok(Self {
            velocities,
            rates,
            rows,
            noise,
            delta_t,
            k,
        })
    }

    /// Number of free parameters.
    pub fn n_free(&self) -> usize {
        self.k
    }

    pub fn n_states(&self) -> usize {
        self.velocities.len()
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Names of the free parameters in binding order, e.g. `v1`,
    /// `log_lambda2`, `p31`, `sigma`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.k);
        for (s, spec) in self.velocities.iter().enumerate() {
            if matches!(spec, ValueSpec::Free) {
                names.push(format!("v{}", s + 1));
            }
        }
        for (s, spec) in self.rates.iter().enumerate() {
            if matches!(spec, ValueSpec::Free) {
                names.push(format!("log_lambda{}", s + 1));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            for (c, entry) in row {
                if matches!(entry, ProbEntry::Free) {
                    names.push(format!("p{}{}", r + 1, c + 1));
                }
            }
        }
        if matches!(self.noise, ValueSpec::Free) {
            names.push("sigma".into());
        }
        names
    }

    /// Indices of the velocity slots inside the free-parameter ordering.
    pub fn velocity_slots(&self) -> Vec<usize> {
        (0..self
            .velocities
            .iter()
            .filter(|s| matches!(s, ValueSpec::Free))
            .count())
            .collect()
    }

    /// Index of the free noise slot, if the noise is estimated.
    pub fn sigma_slot(&self) -> Option<usize> {
        matches!(self.noise, ValueSpec::Free).then_some(self.k - 1)
    }

    /// Bind a parameter vector to a concrete model. Rate slots hold natural
    /// logs and are exponentiated here; complement entries are computed from
    /// the rest of their row.
    pub fn bind(&self, theta: &[f64]) -> Result<VelocityJumpModel> {
        if theta.len() != self.k {
            return Err(Error::LengthMismatch {
                want: self.k,
                got: theta.len(),
            });
        }
        let mut it = theta.iter().copied();
        let velocities: Vec<f64> = self
            .velocities
            .iter()
            .map(|s| match s {
                ValueSpec::Free => it.next().unwrap(),
                ValueSpec::Fixed(v) => *v,
            })
            .collect();
        let mut bound_log_rates = Vec::new();
        let rates: Vec<f64> = self
            .rates
            .iter()
            .enumerate()
            .map(|(s, spec)| match spec {
                ValueSpec::Free => {
                    let log_rate = it.next().unwrap();
                    bound_log_rates.push((s, log_rate));
                    log_rate.exp()
                }
                ValueSpec::Fixed(v) => *v,
            })
            .collect();
        let n = self.n_states();
        let mut network = vec![vec![0.0; n]; n];
        for (r, row) in self.rows.iter().enumerate() {
            let mut complement_col = None;
            let mut partial = 0.0;
            for (c, entry) in row {
                let value = match entry {
                    ProbEntry::Free => it.next().unwrap(),
                    ProbEntry::Fixed(v) => *v,
                    ProbEntry::Complement => {
                        complement_col = Some(*c);
                        continue;
                    }
                };
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::InvalidProbability {
                        row: r,
                        col: *c,
                        value,
                    });
                }
                partial += value;
                network[r][*c] = value;
            }
            if let Some(c) = complement_col {
                let value = 1.0 - partial;
                if !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(&value) {
                    return Err(Error::InvalidProbability {
                        row: r,
                        col: c,
                        value,
                    });
                }
                network[r][c] = value.clamp(0.0, 1.0);
            }
        }
        let sigma = match self.noise {
            ValueSpec::Free => it.next().unwrap(),
            ValueSpec::Fixed(v) => v,
        };
        if !(sigma >= 0.0) {
            return Err(Error::InvalidSigma(sigma));
        }
        let mut model = VelocityJumpModel::new(velocities, rates, network, sigma, self.delta_t)?;
        model.override_log_rates(bound_log_rates);
        Ok(model)
    }

    /// Extract the free parameters of a bound model, inverting [`bind`].
    ///
    /// [`bind`]: ModelTemplate::bind
    pub fn extract(&self, model: &VelocityJumpModel) -> Result<Vec<f64>> {
        if model.n_states() != self.n_states() {
            return Err(Error::Template(format!(
                "model has {} states, template has {}",
                model.n_states(),
                self.n_states()
            )));
        }
        let mut theta = Vec::with_capacity(self.k);
        for (s, spec) in self.velocities.iter().enumerate() {
            if matches!(spec, ValueSpec::Free) {
                theta.push(model.velocity(s));
            }
        }
        for (s, spec) in self.rates.iter().enumerate() {
            if matches!(spec, ValueSpec::Free) {
                theta.push(model.log_rate(s));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            for (c, entry) in row {
                if matches!(entry, ProbEntry::Free) {
                    theta.push(model.jump_probability(r, *c));
                }
            }
        }
        if matches!(self.noise, ValueSpec::Free) {
            theta.push(model.sigma());
        }
        Ok(theta)
    }
}

/// Independent uniform prior box over the free parameters, in template
/// order. Enters the Metropolis-Hastings ratio only as a support indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPrior {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl UniformPrior {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidPrior(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidPrior(format!(
                    "slot {i}: lower bound {lo} must be below upper bound {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.lower.len()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&t, (&lo, &hi))| t >= lo && t <= hi)
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| rng.random_range(lo..hi))
            .collect()
    }
}

/// Stationary distribution of the continuous-time hidden-state chain with
/// generator `Q[a][b] = lambda_a * p_ab` off the diagonal.
///
/// States outside the single closed communicating class get weight zero;
/// more than one closed class means the distribution is not unique and is
/// reported as [`Error::ReducibleChain`].
pub fn stationary_distribution(model: &VelocityJumpModel) -> Result<Vec<f64>> {
    let n = model.n_states();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Reachability closure over edges with positive jump probability.
    let mut reach = vec![false; n * n];
    for a in 0..n {
        reach[a * n + a] = true;
        for b in 0..n {
            if a != b && model.jump_probability(a, b) > 0.0 {
                reach[a * n + b] = true;
            }
        }
    }
    for k in 0..n {
        for a in 0..n {
            if reach[a * n + k] {
                for b in 0..n {
                    if reach[k * n + b] {
                        reach[a * n + b] = true;
                    }
                }
            }
        }
    }
    // A state is in a closed class if everything it reaches reaches back.
    let closed: Vec<bool> = (0..n)
        .map(|a| (0..n).all(|b| !reach[a * n + b] || reach[b * n + a]))
        .collect();
    let class: Vec<usize> = (0..n).filter(|&a| closed[a]).collect();
    // Count distinct closed classes among the closed states.
    let mut n_classes = 0;
    let mut seen = vec![false; n];
    for &a in &class {
        if !seen[a] {
            n_classes += 1;
            for &b in &class {
                if reach[a * n + b] && reach[b * n + a] {
                    seen[b] = true;
                }
            }
        }
    }
    if n_classes != 1 {
        return Err(Error::ReducibleChain);
    }

    // Solve pi Q = 0, sum(pi) = 1 restricted to the closed class: columns of
    // Q^T as rows, with the last equation replaced by the normalisation.
    let m = class.len();
    let mut a_mat = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (i, &si) in class.iter().enumerate() {
        for (j, &sj) in class.iter().enumerate() {
            // Q[sj][si]
            let q = if si == sj {
                -model.rate(sj)
            } else {
                model.rate(sj) * model.jump_probability(sj, si)
            };
            a_mat[i * m + j] = q;
        }
    }
    for j in 0..m {
        a_mat[(m - 1) * m + j] = 1.0;
    }
    rhs[m - 1] = 1.0;
    let solution =
        solve_with_refinement(&a_mat, &rhs, m).ok_or(Error::ReducibleChain)?;

    let mut pi = vec![0.0; n];
    for (i, &s) in class.iter().enumerate() {
        pi[s] = solution[i].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

/// Dense solve with two steps of iterative refinement; the balance systems
/// of skewed random networks can be conditioned badly enough that a plain
/// elimination misses the 1e-10 residual target.
fn solve_with_refinement(a: &[f64], rhs: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut x = solve_dense(&mut a.to_vec(), &mut rhs.to_vec(), m)?;
    for _ in 0..2 {
        let mut residual = rhs.to_vec();
        for (i, r) in residual.iter_mut().enumerate() {
            for j in 0..m {
                *r -= a[i * m + j] * x[j];
            }
        }
        let correction = solve_dense(&mut a.to_vec(), &mut residual, m)?;
        for (xi, c) in x.iter_mut().zip(correction) {
            *xi += c;
        }
    }
    Some(x)
}

/// Gaussian elimination with partial pivoting on a dense m x m system.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&r1, &r2| {
                a[r1 * m + col]
                    .abs()
                    .partial_cmp(&a[r2 * m + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * m + col].abs() < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for j in 0..m {
                a.swap(col * m + j, pivot_row * m + j);
            }
            rhs.swap(col, pivot_row);
        }
        for row in col + 1..m {
            let factor = a[row * m + col] / a[col * m + col];
            for j in col..m {
                a[row * m + j] -= factor * a[col * m + j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let mut sum = rhs[row];
        for j in row + 1..m {
            sum -= a[row * m + j] * x[j];
        }
        x[row] = sum / a[row * m + row];
    }
    Some(x)
}

/// Stationary distribution via power iteration on the uniformised chain;
/// an independent cross-check for [`stationary_distribution`].
pub fn stationary_by_power_iteration(model: &VelocityJumpModel, tol: f64) -> Vec<f64> {
    let n = model.n_states();
    if n == 1 {
        return vec![1.0];
    }
    let eta = model.rates().iter().cloned().fold(0.0, f64::max) * 1.5;
    // P_u = I + Q / eta, row-stochastic.
    let mut p_u = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let q = if a == b {
                -model.rate(a)
            } else {
                model.rate(a) * model.jump_probability(a, b)
            };
            p_u[a * n + b] = if a == b { 1.0 + q / eta } else { q / eta };
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..2_000_000 {
        let mut next = vec![0.0; n];
        for (a, &w) in pi.iter().enumerate() {
            for b in 0..n {
                next[b] += w * p_u[a * n + b];
            }
        }
        let delta: f64 = next
            .iter()
            .zip(&pi)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        pi = next;
        if delta < tol {
            break;
        }
    }
    pi
}

/// Residual `max_b |(pi Q)_b|`; zero at the stationary distribution. The
/// diagonal of the generator is `-lambda_a * sum(row a)`, which vanishes
/// for a single state with nowhere to jump.
pub fn stationary_residual(model: &VelocityJumpModel, pi: &[f64]) -> f64 {
    let n = model.n_states();
    let mut worst: f64 = 0.0;
    for b in 0..n {
        let row_sum: f64 = model.network_row(b).iter().sum();
        let mut flow = -pi[b] * model.rate(b) * row_sum;
        for a in 0..n {
            if a != b {
                flow += pi[a] * model.rate(a) * model.jump_probability(a, b);
            }
        }
        worst = worst.max(flow.abs());
    }
    worst
}

/// The forward/backward two-state template of the synthetic studies:
/// free velocities, free log-rates, deterministic switching, free noise.
pub fn two_state_template(delta_t: f64) -> ModelTemplate {
    ModelTemplate::new(
        vec![ValueSpec::Free, ValueSpec::Free],
        vec![ValueSpec::Free, ValueSpec::Free],
        vec![vec![ProbEntry::Complement], vec![ProbEntry::Complement]],
        ValueSpec::Free,
        delta_t,
    )
    .expect("valid template")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_model() -> VelocityJumpModel {
        VelocityJumpModel::new(
            vec![2000.0, -1500.0],
            vec![1.0, 0.5],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            50.0,
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn bind_two_state_reference_parameters() {
        let template = two_state_template(0.3);
        assert_eq!(template.n_free(), 5);
        let theta = [2000.0, -1500.0, 1.0_f64.ln(), 0.5_f64.ln(), 50.0];
        let model = template.bind(&theta).unwrap();
        assert_eq!(model.velocities(), &[2000.0, -1500.0]);
        assert!((model.rate(0) - 1.0).abs() < 1e-15);
        assert!((model.rate(1) - 0.5).abs() < 1e-15);
        assert_eq!(model.jump_probability(0, 1), 1.0);
        assert_eq!(model.jump_probability(1, 0), 1.0);
        assert_eq!(model.sigma(), 50.0);
        assert_eq!(
            template.param_names(),
            ["v1", "v2", "log_lambda1", "log_lambda2", "sigma"]
        );
    }

    /// Three states, rows of [free, complement] structure with p12 = p21 = 0,
    /// matching the network used for the stationary-state studies.
    fn three_state_template() -> ModelTemplate {
        ModelTemplate::new(
            vec![ValueSpec::Free, ValueSpec::Free, ValueSpec::Fixed(0.0)],
            vec![ValueSpec::Free, ValueSpec::Free, ValueSpec::Free],
            vec![
                vec![ProbEntry::Fixed(0.0), ProbEntry::Complement],
                vec![ProbEntry::Fixed(0.0), ProbEntry::Complement],
                vec![ProbEntry::Free, ProbEntry::Complement],
            ],
            ValueSpec::Free,
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn bind_three_state_complement_row() {
        let template = three_state_template();
        assert_eq!(template.n_free(), 7);
        assert_eq!(
            template.param_names(),
            [
                "v1",
                "v2",
                "log_lambda1",
                "log_lambda2",
                "log_lambda3",
                "p31",
                "sigma"
            ]
        );
        let theta = [
            2000.0,
            -1500.0,
            0.0,
            0.5_f64.ln(),
            0.5_f64.ln(),
            0.7,
            50.0,
        ];
        let model = template.bind(&theta).unwrap();
        let row = model.network_row(2);
        assert_eq!(row[0], 0.7);
        assert!((row[1] - 0.3).abs() < 1e-15); // complement of the row
        assert_eq!(row[2], 0.0);
        assert_eq!(model.network_row(0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn bind_rejects_out_of_range_probability() {
        let template = three_state_template();
        let theta = [2000.0, -1500.0, 0.0, 0.0, 0.0, 1.2, 50.0];
        assert!(matches!(
            template.bind(&theta),
            Err(Error::InvalidProbability { .. })
        ));
    }

    #[test]
    fn bind_rejects_wrong_length_and_negative_sigma() {
        let template = two_state_template(0.3);
        assert!(matches!(
            template.bind(&[1.0, 2.0]),
            Err(Error::LengthMismatch { want: 5, got: 2 })
        ));
        assert!(matches!(
            template.bind(&[2000.0, -1500.0, 0.0, 0.0, -1.0]),
            Err(Error::InvalidSigma(_))
        ));
    }

    #[test]
    fn default_complement_is_last_non_fixed_column() {
        // Row [Free, Free] becomes [Free, Complement].
        let template = ModelTemplate::new(
            vec![ValueSpec::Free; 3],
            vec![ValueSpec::Free; 3],
            vec![
                vec![ProbEntry::Free, ProbEntry::Free],
                vec![ProbEntry::Free, ProbEntry::Free],
                vec![ProbEntry::Free, ProbEntry::Free],
            ],
            ValueSpec::Free,
            0.3,
        )
        .unwrap();
        // 3 velocities + 3 log-rates + 3 free probabilities + sigma.
        assert_eq!(template.n_free(), 10);
        let names = template.param_names();
        assert!(names.contains(&"p12".to_string()));
        assert!(!names.contains(&"p13".to_string()));
    }

    #[test]
    fn bind_extract_round_trip() {
        let template = three_state_template();
        let theta = [1800.0, -1200.0, 0.2, -0.4, 0.9, 0.35, 42.0];
        let model = template.bind(&theta).unwrap();
        let back = template.extract(&model).unwrap();
        assert_eq!(back, theta);
    }

    #[test]
    fn single_state_model_is_allowed() {
        let model =
            VelocityJumpModel::new(vec![1000.0], vec![1.0], vec![vec![0.0]], 0.0, 1.0).unwrap();
        assert_eq!(model.stationary_distribution().unwrap(), vec![1.0]);
    }

    #[test]
    fn stationary_two_state_balance() {
        let pi = two_state_model().stationary_distribution().unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((pi[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn stationary_equal_rates_is_uniform() {
        let model = VelocityJumpModel::new(
            vec![2000.0, -1500.0],
            vec![0.8, 0.8],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            50.0,
            0.3,
        )
        .unwrap();
        let pi = model.stationary_distribution().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14);
        assert!((pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn stationary_matches_power_iteration_on_three_state() {
        let model = VelocityJumpModel::new(
            vec![2000.0, -1500.0, 0.0],
            vec![1.0, 0.5, 0.5],
            vec![
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0],
                vec![0.7, 0.3, 0.0],
            ],
            50.0,
            0.3,
        )
        .unwrap();
        let pi = model.stationary_distribution().unwrap();
        let oracle = stationary_by_power_iteration(&model, 1e-15);
        for (a, b) in pi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{pi:?} vs {oracle:?}");
        }
        assert!(stationary_residual(&model, &pi) < 1e-10);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        // Two closed pairs {0,1} and {2,3} with no cross flow.
        let model = VelocityJumpModel::new(
            vec![1.0, -1.0, 2.0, -2.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            model.stationary_distribution(),
            Err(Error::ReducibleChain)
        ));
    }

    #[test]
    fn transient_state_gets_zero_weight() {
        // State 2 feeds {0,1} but is never entered.
        let model = VelocityJumpModel::new(
            vec![1.0, -1.0, 0.0],
            vec![1.0, 0.5, 1.0],
            vec![
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.5, 0.5, 0.0],
            ],
            1.0,
            1.0,
        )
        .unwrap();
        let pi = model.stationary_distribution().unwrap();
        assert_eq!(pi[2], 0.0);
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn prior_support_and_sampling() {
        let prior =
            UniformPrior::new(vec![0.0, -3000.0, -4.0], vec![4000.0, 0.0, 4.0]).unwrap();
        assert!(prior.contains(&[1.0, -1.0, 0.0]));
        assert!(!prior.contains(&[-1.0, -1.0, 0.0]));
        assert!(!prior.contains(&[1.0, -1.0]));
        let mut rng = crate::rng::stream_rng(1, 0, 0);
        for _ in 0..100 {
            assert!(prior.contains(&prior.sample(&mut rng)));
        }
        assert!(UniformPrior::new(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn row_sum_violation_is_a_hard_error() {
        let err = VelocityJumpModel::new(
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![vec![0.0, 0.9], vec![1.0, 0.0]],
            1.0,
            1.0,
        );
        assert!(matches!(err, Err(Error::RowSumMismatch { row: 0, .. })));
    }

    #[test]
    fn random_valid_models_have_stationary_with_tiny_residual() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(99, 0, 0);
        for _ in 0..1000 {
            let n = rng.random_range(1..=5usize);
            let velocities: Vec<f64> = (0..n).map(|_| rng.random_range(-2000.0..2000.0)).collect();
            let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
            let mut network = vec![vec![0.0; n]; n];
            for r in 0..n {
                let mut weights: Vec<f64> =
                    (0..n - 1).map(|_| rng.random_range(0.01..1.0)).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                // Force exact unit row sum after normalisation error.
                let mut acc = 0.0;
                let cols: Vec<usize> = (0..n).filter(|&c| c != r).collect();
                for (i, &c) in cols.iter().enumerate() {
                    if i + 1 == cols.len() {
                        network[r][c] = 1.0 - acc;
                    } else {
                        network[r][c] = weights[i];
                        acc += weights[i];
                    }
                }
            }
            let model =
                VelocityJumpModel::new(velocities, rates, network, 10.0, 0.3).unwrap();
            let pi = model.stationary_distribution().unwrap();
            assert!(pi.iter().all(|&p| p >= 0.0));
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(stationary_residual(&model, &pi) < 1e-10);
        }
    }
}
