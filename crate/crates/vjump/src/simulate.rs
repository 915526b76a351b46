//! Exact stochastic simulation of the velocity-jump process and generation
//! of noisy discrete-time observations.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::model::VelocityJumpModel;
use crate::rng::simulation_rng;

/// One exact realisation of the process: piecewise-linear position with the
/// hidden-state sequence and jump times.
#[derive(Debug, Clone)]
pub struct ExactPath {
    /// Segment start times; `times[0] == 0`, strictly increasing, all < duration.
    times: Vec<f64>,
    /// Hidden state per segment; same length as `times`.
    states: Vec<usize>,
    /// Position at each segment start; the path starts at 0.
    positions: Vec<f64>,
    velocities: Vec<f64>,
    duration: f64,
}

impl ExactPath {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// Exact position at time `t in [0, duration]`.
    pub fn position_at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        // Last segment starting at or before t.
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        self.positions[idx] + self.velocities[self.states[idx]] * (t - self.times[idx])
    }

    /// State occupied at time `t` (the segment covering `t`).
    pub fn state_at(&self, t: f64) -> usize {
        let t = t.clamp(0.0, self.duration);
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        self.states[idx]
    }
}

/// Evolve a hidden state and position over `duration`, appending any jumps
/// to the output buffers. Shared by the path simulator and the particle
/// filter propagation step.
pub(crate) fn evolve<R: Rng>(
    model: &VelocityJumpModel,
    state: &mut usize,
    position: &mut f64,
    duration: f64,
    rng: &mut R,
    mut on_jump: impl FnMut(f64, usize, f64),
) {
    if model.n_states() == 1 {
        *position += model.velocity(0) * duration;
        return;
    }
    let mut t = 0.0;
    loop {
        let hold = Exp::new(model.rate(*state)).expect("positive rate").sample(rng);
        if t + hold >= duration {
            *position += model.velocity(*state) * (duration - t);
            return;
        }
        t += hold;
        *position += model.velocity(*state) * hold;
        *state = sample_next_state(model, *state, rng);
        on_jump(t, *state, *position);
    }
}

fn sample_next_state<R: Rng>(model: &VelocityJumpModel, from: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let row = model.network_row(from);
    let mut acc = 0.0;
    for (next, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return next;
        }
    }
    // Guard against the row summing to 1 - epsilon.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(from)
}

fn sample_initial_state<R: Rng>(pi: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s, &p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    pi.len() - 1
}

/// Simulate an exact path of the given duration. The initial state is drawn
/// from the stationary distribution; holding times are exponential with the
/// per-state rate and destinations follow the network matrix.
pub fn simulate_path<R: Rng>(
    model: &VelocityJumpModel,
    duration: f64,
    rng: &mut R,
) -> Result<ExactPath> {
    if !(duration > 0.0) {
        return Err(Error::InvalidDeltaT(duration));
    }
    let pi = model.stationary_distribution()?;
    let mut state = sample_initial_state(&pi, rng);
    let mut position = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![state];
    let mut positions = vec![0.0];
    evolve(model, &mut state, &mut position, duration, rng, |t, s, x| {
        times.push(t);
        states.push(s);
        positions.push(x);
    });
    Ok(ExactPath {
        times,
        states,
        positions,
        velocities: model.velocities().to_vec(),
        duration,
    })
}

/// A discrete-time noisy track: measured locations at `t_i = i * delta_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    delta_t: f64,
    /// `n_increments + 1` measured locations.
    locations: Vec<f64>,
    sigma: f64,
    /// Master seed of the run that produced this track, when known.
    seed: Option<u64>,
}

impl Track {
    pub fn from_locations(delta_t: f64, locations: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(delta_t > 0.0) {
            return Err(Error::InvalidDeltaT(delta_t));
        }
        if locations.len() < 2 {
            return Err(Error::EmptySeries);
        }
        Ok(Self {
            delta_t,
            locations,
            sigma,
            seed: None,
        })
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.locations.len())
            .map(|i| i as f64 * self.delta_t)
            .collect()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n_increments(&self) -> usize {
        self.locations.len() - 1
    }

    /// Consecutive location increments of this track.
    pub fn increments(&self) -> IncrementSeries {
        let y0 = self.locations[0];
        // Differences of y0-anchored positions telescope back to y_N - y_0
        // under exact summation.
        let anchored: Vec<f64> = self.locations.iter().map(|y| y - y0).collect();
        let delta_y = anchored.windows(2).map(|w| w[1] - w[0]).collect();
        IncrementSeries {
            delta_y,
            delta_t: self.delta_t,
            correlated: true,
        }
    }
}

/// Ordered location increments, either consecutive within one track
/// (`correlated`) or independent single-interval draws.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSeries {
    delta_y: Vec<f64>,
    delta_t: f64,
    correlated: bool,
}

impl IncrementSeries {
    pub fn new(delta_y: Vec<f64>, delta_t: f64, correlated: bool) -> Result<Self> {
        if delta_y.is_empty() {
            return Err(Error::EmptySeries);
        }
        if !(delta_t > 0.0) {
            return Err(Error::InvalidDeltaT(delta_t));
        }
        Ok(Self {
            delta_y,
            delta_t,
            correlated,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.delta_y
    }

    pub fn len(&self) -> usize {
        self.delta_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_y.is_empty()
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn correlated(&self) -> bool {
        self.correlated
    }
}

/// Observe a path at `count` regular intervals with Gaussian measurement
/// noise: `y_i = x(i * delta_t) + eps_i`, `eps_i ~ Normal(0, sigma^2)`,
/// producing `count + 1` locations.
pub fn observe<R: Rng>(
    path: &ExactPath,
    delta_t: f64,
    sigma: f64,
    count: usize,
    rng: &mut R,
) -> Result<Track> {
    if !(delta_t > 0.0) {
        return Err(Error::InvalidDeltaT(delta_t));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    if count as f64 * delta_t > path.duration() * (1.0 + 1e-12) {
        return Err(Error::PathTooShort {
            duration: path.duration(),
            count,
            delta_t,
        });
    }
    let locations = (0..=count)
        .map(|i| {
            let noise: f64 = StandardNormal.sample(rng);
            path.position_at(i as f64 * delta_t) + sigma * noise
        })
        .collect();
    Ok(Track {
        delta_t,
        locations,
        sigma,
        seed: None,
    })
}

/// Simulate a full track of `n_increments` observations from replicate
/// stream `replicate` of `master_seed`.
pub fn simulate_track(
    model: &VelocityJumpModel,
    n_increments: usize,
    master_seed: u64,
    replicate: u64,
) -> Result<Track> {
    let mut rng = simulation_rng(master_seed, replicate);
    let duration = n_increments as f64 * model.delta_t();
    let path = simulate_path(model, duration, &mut rng)?;
    let mut track = observe(&path, model.delta_t(), model.sigma(), n_increments, &mut rng)?;
    track.seed = Some(master_seed);
    Ok(track)
}

/// Draw `count` independent single-interval increments; each one uses a
/// fresh stationary initial state and a fresh pair of measurement errors.
pub fn independent_increments<R: Rng>(
    model: &VelocityJumpModel,
    count: usize,
    rng: &mut R,
) -> Result<IncrementSeries> {
    if count == 0 {
        return Err(Error::EmptySeries);
    }
    let pi = model.stationary_distribution()?;
    let delta_t = model.delta_t();
    let sigma = model.sigma();
    let delta_y = (0..count)
        .map(|_| {
            let mut state = sample_initial_state(&pi, rng);
            let mut displacement = 0.0;
            evolve(model, &mut state, &mut displacement, delta_t, rng, |_, _, _| {});
            let e0: f64 = StandardNormal.sample(rng);
            let e1: f64 = StandardNormal.sample(rng);
            displacement + sigma * (e1 - e0)
        })
        .collect();
    Ok(IncrementSeries {
        delta_y,
        delta_t,
        correlated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VelocityJumpModel;
    use crate::rng::stream_rng;
    use crate::stats;

    fn two_state() -> VelocityJumpModel {
        VelocityJumpModel::new(
            vec![2000.0, -1500.0],
            vec![1.0, 0.5],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            50.0,
            0.3,
        )
        .unwrap()
    }

    fn single_state(v: f64, sigma: f64) -> VelocityJumpModel {
        VelocityJumpModel::new(vec![v], vec![1.0], vec![vec![0.0]], sigma, 0.3).unwrap()
    }

    #[test]
    fn single_state_path_is_a_straight_line() {
        let model = VelocityJumpModel::new(vec![1000.0], vec![1.0], vec![vec![0.0]], 0.0, 1.0)
            .unwrap();
        let mut rng = stream_rng(1, 0, 0);
        let path = simulate_path(&model, 1.0, &mut rng).unwrap();
        assert_eq!(path.n_jumps(), 0);
        assert!((path.position_at(1.0) - 1000.0).abs() < 1e-12);
        assert!((path.position_at(0.25) - 250.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_gives_bit_identical_paths() {
        let model = two_state();
        let a = simulate_path(&model, 60.0, &mut stream_rng(7, 0, 3)).unwrap();
        let b = simulate_path(&model, 60.0, &mut stream_rng(7, 0, 3)).unwrap();
        assert_eq!(a.jump_times(), b.jump_times());
        assert_eq!(a.states(), b.states());
        let t_probe = [0.0, 13.37, 59.999, 60.0];
        for &t in &t_probe {
            assert_eq!(a.position_at(t), b.position_at(t));
        }
    }

    #[test]
    fn consecutive_states_differ_and_position_is_continuous() {
        let model = two_state();
        let path = simulate_path(&model, 200.0, &mut stream_rng(11, 0, 0)).unwrap();
        for pair in path.states().windows(2) {
            assert_ne!(pair[0], pair[1]);
        }
        // Position just before and at each jump time agree.
        for &t in &path.jump_times()[1..] {
            let before = path.position_at(t - 1e-9);
            let at = path.position_at(t);
            assert!((before - at).abs() < 1e-3);
        }
    }

    #[test]
    fn mean_jump_count_matches_stationary_intensity() {
        // E[jumps in (0, T)] = T * sum_s pi_s lambda_s = 60 * 2/3 = 40.
        let model = two_state();
        let replicates = 10_000;
        let counts: Vec<f64> = (0..replicates)
            .map(|i| {
                simulate_path(&model, 60.0, &mut stream_rng(21, 0, i)).unwrap().n_jumps() as f64
            })
            .collect();
        let mean = stats::mean(&counts);
        let se = stats::sample_std(&counts) / (replicates as f64).sqrt();
        assert!(
            (mean - 40.0).abs() < 3.0 * se,
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn first_holding_time_passes_ks_against_exponential() {
        // Conditioned on starting in state 0, the first holding time is
        // Exponential(lambda_0). KS at the 1e-3 level over 1e5 samples.
        let model = two_state();
        let mut samples = Vec::new();
        let mut i = 0u64;
        while samples.len() < 100_000 {
            let mut rng = stream_rng(33, 0, i);
            i += 1;
            // Long enough that a path with zero jumps is impossible in
            // practice (P < 1e-13 for lambda = 0.5, T = 60).
            let path = simulate_path(&model, 60.0, &mut rng).unwrap();
            if path.states()[0] == 0 && path.n_jumps() > 0 {
                samples.push(path.jump_times()[1]);
            }
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        let lambda = model.rate(0);
        let mut d: f64 = 0.0;
        for (i, &t) in samples.iter().enumerate() {
            let cdf = 1.0 - (-lambda * t).exp();
            let hi = (i as f64 + 1.0) / n - cdf;
            let lo = cdf - i as f64 / n;
            d = d.max(hi).max(lo);
        }
        // Kolmogorov critical value at alpha = 1e-3.
        let critical = (-(0.5e-3f64).ln() / 2.0).sqrt() / n.sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    #[test]
    fn observe_without_noise_reads_the_path_exactly() {
        let model = two_state();
        let mut rng = stream_rng(5, 0, 0);
        let path = simulate_path(&model, 60.0, &mut rng).unwrap();
        let track = observe(&path, 0.3, 0.0, 200, &mut rng).unwrap();
        assert_eq!(track.locations().len(), 201);
        for (i, &y) in track.locations().iter().enumerate() {
            assert_eq!(y, path.position_at(i as f64 * 0.3));
        }
    }

    #[test]
    fn constant_velocity_track_has_constant_increments() {
        let model = single_state(2000.0, 0.0);
        let track = simulate_track(&model, 10, 3, 0).unwrap();
        for &dy in track.increments().values() {
            assert!((dy - 600.0).abs() < 1e-9);
        }
    }

    #[test]
    fn observe_rejects_short_paths() {
        let model = two_state();
        let mut rng = stream_rng(5, 0, 1);
        let path = simulate_path(&model, 10.0, &mut rng).unwrap();
        assert!(matches!(
            observe(&path, 0.3, 50.0, 200, &mut rng),
            Err(Error::PathTooShort { .. })
        ));
    }

    #[test]
    fn track_has_expected_shape_for_reference_config() {
        let model = two_state();
        let track = simulate_track(&model, 200, 42, 0).unwrap();
        assert_eq!(track.locations().len(), 201);
        assert_eq!(track.n_increments(), 200);
        assert_eq!(track.increments().values().len(), 200);
        let times = track.times();
        assert_eq!(times[200], 200.0 * 0.3);
    }

    #[test]
    fn increments_sum_telescopes_to_track_span() {
        let model = two_state();
        for rep in 0..20 {
            let track = simulate_track(&model, 200, 1234, rep).unwrap();
            let inc = track.increments();
            let sum = stats::compensated_sum(inc.values());
            let span = track.locations()[200] - track.locations()[0];
            assert!(
                (sum - span).abs() <= 1e-9 * span.abs().max(1.0),
                "rep {rep}: {sum} vs {span}"
            );
        }
    }

    #[test]
    fn independent_increments_have_no_lag1_correlation() {
        let model = two_state();
        let mut rng = stream_rng(17, 0, 0);
        let series = independent_increments(&model, 100_000, &mut rng).unwrap();
        assert!(!series.correlated());
        let rho = stats::lag1_autocorrelation(series.values());
        assert!(rho.abs() < 0.01, "lag-1 autocorrelation {rho}");
    }

    #[test]
    fn single_state_increments_match_normal_moments() {
        // delta_y = v dt + e1 - e0 ~ Normal(600, 2 sigma^2).
        let model = single_state(2000.0, 50.0);
        let mut rng = stream_rng(19, 0, 0);
        let series = independent_increments(&model, 100_000, &mut rng).unwrap();
        let n = series.len() as f64;
        let mean = stats::mean(series.values());
        let var = stats::sample_variance(series.values());
        let se_mean = (2.0 * 50.0 * 50.0 / n).sqrt();
        assert!((mean - 600.0).abs() < 3.0 * se_mean);
        let se_var = 2.0f64.sqrt() * 2.0 * 50.0 * 50.0 / n.sqrt();
        assert!((var - 5000.0).abs() < 3.0 * se_var);
    }

    #[test]
    fn single_state_track_increment_lag1_covariance_is_minus_sigma_squared() {
        // Shared measurement errors couple adjacent increments: cov = -sigma^2.
        let model = single_state(2000.0, 50.0);
        let replicates = 400;
        let mut covs = Vec::with_capacity(replicates as usize);
        for rep in 0..replicates {
            let track = simulate_track(&model, 400, 777, rep).unwrap();
            let d = track.increments();
            let v = d.values();
            let m = stats::mean(v);
            let cov: f64 = v
                .windows(2)
                .map(|w| (w[0] - m) * (w[1] - m))
                .sum::<f64>()
                / (v.len() - 1) as f64;
            covs.push(cov);
        }
        let mean_cov = stats::mean(&covs);
        let se = stats::sample_std(&covs) / (replicates as f64).sqrt();
        assert!(
            (mean_cov + 2500.0).abs() < 3.0 * se,
            "mean lag-1 covariance {mean_cov}, se {se}"
        );
    }

    #[test]
    fn independent_increment_series_of_length_one() {
        let model = two_state();
        let mut rng = stream_rng(3, 0, 0);
        let series = independent_increments(&model, 1, &mut rng).unwrap();
        assert_eq!(series.len(), 1);
    }
}
