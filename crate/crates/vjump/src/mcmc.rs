//! Adaptive Metropolis-Hastings MCMC over free-parameter space.
//!
//! Each chain runs a symmetric Gaussian random walk. During burnin the
//! proposal covariance is re-estimated after every segment as
//! `temperature * (2.38^2 / k) * Cov(segment samples)` and the chain
//! restarts from the segment's last state; adaptation stops when burnin
//! ends, so the recorded kernel is fixed. Uniform priors enter only as a
//! support indicator: proposals outside the box are rejected outright and
//! the acceptance test inside the support reduces to the likelihood ratio,
//! `accept iff ln u < min(0, logpi* - logpi)`.
//!
//! A run drives several chains in parallel, each on its own counter-based
//! RNG stream, and checks the potential scale reduction factor per
//! parameter. While any R-hat is 1.1 or larger the recorded samples are
//! demoted to burnin and the chains continue for twice as many iterations,
//! up to a doubling cap; hitting the cap reports non-convergence instead of
//! failing.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::diagnostics::gelman_rubin;
use crate::error::{Error, Result};
use crate::model::UniformPrior;
use crate::rng::{chain_rng, dataset_seed};
use crate::stats::SymMatrix;

/// Settings of one adaptive MCMC run.
#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub n_chains: usize,
    /// Total burnin iterations, split into `n_adaptive` segments.
    pub burnin: usize,
    /// Number of adaptive covariance updates (segments) in the burnin.
    pub n_adaptive: usize,
    /// Recorded iterations after burnin.
    pub n_iterations: usize,
    /// Initial proposal covariance.
    pub sigma0: SymMatrix,
    /// Temperature factor scaling every adapted covariance.
    pub temperature: f64,
    pub seed: u64,
    /// How many times a non-converged run may double its recorded length.
    pub max_doublings: usize,
}

impl McmcConfig {
    /// Defaults from the synthetic studies: four chains, 10000 burnin
    /// iterations with 10 adaptive updates, 10000 recorded iterations.
    pub fn new(sigma0_diag: &[f64], seed: u64) -> Self {
        Self {
            n_chains: 4,
            burnin: 10_000,
            n_adaptive: 10,
            n_iterations: 10_000,
            sigma0: SymMatrix::diagonal(sigma0_diag),
            temperature: 1.0,
            seed,
            max_doublings: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::InvalidConfig("need at least one chain".into()));
        }
        if self.n_adaptive == 0 || self.burnin % self.n_adaptive != 0 {
            return Err(Error::InvalidConfig(format!(
                "burnin {} must be divisible by the number of adaptive updates {}",
                self.burnin, self.n_adaptive
            )));
        }
        if self.n_iterations < 2 {
            return Err(Error::InvalidConfig(
                "need at least two recorded iterations".into(),
            ));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.sigma0.cholesky().is_none() {
            return Err(Error::SingularCovariance);
        }
        Ok(())
    }
}

/// Recorded output of a single chain.
#[derive(Debug, Clone)]
pub struct ChainResult {
    /// Recorded parameter vectors, one row per iteration.
    pub samples: Vec<Vec<f64>>,
    /// Log-likelihood trace aligned with `samples`.
    pub loglik: Vec<f64>,
    /// Fraction of proposals accepted.
    pub acceptance_rate: f64,
    /// Proposal covariance in force while recording.
    pub proposal_cov: SymMatrix,
}

/// Output of a multi-chain adaptive run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub chains: Vec<ChainResult>,
    /// Potential scale reduction factor per parameter.
    pub r_hat: Vec<f64>,
    /// Sample with the highest recorded log-likelihood across chains.
    pub theta_hat: Vec<f64>,
    pub max_loglik: f64,
    /// True when every R-hat fell below 1.1.
    pub converged: bool,
    /// Doublings of the recorded length that were needed.
    pub doublings: usize,
    pub runtime: Duration,
}

impl RunResult {
    /// Pooled posterior standard deviation per parameter.
    pub fn posterior_std(&self) -> Vec<f64> {
        let k = self.theta_hat.len();
        (0..k)
            .map(|p| {
                let pooled: Vec<f64> = self
                    .chains
                    .iter()
                    .flat_map(|c| c.samples.iter().map(move |s| s[p]))
                    .collect();
                crate::stats::sample_std(&pooled)
            })
            .collect()
    }

    /// Pooled marginal posterior quantile of one parameter.
    pub fn posterior_quantile(&self, param: usize, q: f64) -> f64 {
        let pooled: Vec<f64> = self
            .chains
            .iter()
            .flat_map(|c| c.samples.iter().map(move |s| s[param]))
            .collect();
        crate::stats::quantile(&pooled, q)
    }

    pub fn n_recorded(&self) -> usize {
        self.chains.first().map_or(0, |c| c.samples.len())
    }
}

fn propose<R: Rng>(theta: &[f64], chol: &[f64], rng: &mut R) -> Vec<f64> {
    let k = theta.len();
    let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = theta.to_vec();
    for i in 0..k {
        let mut step = 0.0;
        for (j, zj) in z.iter().enumerate().take(i + 1) {
            step += chol[i * k + j] * zj;
        }
        out[i] += step;
    }
    out
}

/// One Metropolis-Hastings chain with a fixed Gaussian proposal.
///
/// Records `n_iter` states starting with `theta0` itself; proposals outside
/// the prior support are rejected unconditionally. `loglik` may return
/// `-inf` (rejected) but must be finite at the start.
pub fn metropolis_hastings<L, R>(
    loglik: L,
    prior: &UniformPrior,
    theta0: &[f64],
    cov: &SymMatrix,
    n_iter: usize,
    rng: &mut R,
) -> Result<ChainResult>
where
    L: Fn(&[f64]) -> f64,
    R: Rng,
{
    if !prior.contains(theta0) {
        return Err(Error::InvalidStart);
    }
    let mut log_pi = loglik(theta0);
    if !log_pi.is_finite() {
        return Err(Error::InvalidStart);
    }
    let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
    let mut theta = theta0.to_vec();
    let mut samples = Vec::with_capacity(n_iter);
    let mut logliks = Vec::with_capacity(n_iter);
    samples.push(theta.clone());
    logliks.push(log_pi);
    let mut accepted = 0usize;
    for _ in 1..n_iter {
        let candidate = propose(&theta, &chol, rng);
        if prior.contains(&candidate) {
            let log_pi_star = loglik(&candidate);
            let log_alpha = (log_pi_star - log_pi).min(0.0);
            let u: f64 = rng.random();
            if u.ln() < log_alpha {
                theta = candidate;
                log_pi = log_pi_star;
                accepted += 1;
            }
        }
        samples.push(theta.clone());
        logliks.push(log_pi);
    }
    let proposals = n_iter.saturating_sub(1);
    Ok(ChainResult {
        samples,
        loglik: logliks,
        acceptance_rate: if proposals == 0 {
            0.0
        } else {
            accepted as f64 / proposals as f64
        },
        proposal_cov: cov.clone(),
    })
}

/// `temperature * (2.38^2 / k) * Cov(samples)`, regularised by
/// `1e-10 * trace / k` on the diagonal if not positive definite.
fn adapted_covariance(samples: &[Vec<f64>], temperature: f64, k: usize) -> Result<SymMatrix> {
    let scale = temperature * 2.38 * 2.38 / k as f64;
    let mut cov = SymMatrix::covariance_of(samples).scale(scale);
    if cov.cholesky().is_none() {
        cov.add_to_diagonal(1e-10 * cov.trace() / k as f64);
        if cov.cholesky().is_none() {
            return Err(Error::SingularCovariance);
        }
    }
    Ok(cov)
}

struct ChainState {
    rng: ChaCha8Rng,
    theta: Vec<f64>,
    cov: SymMatrix,
}

fn init_and_burnin<L>(
    loglik: &L,
    prior: &UniformPrior,
    config: &McmcConfig,
    theta0: Option<&[f64]>,
    chain_index: u64,
) -> Result<ChainState>
where
    L: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = chain_rng(config.seed, chain_index);
    let theta0 = match theta0 {
        Some(t) => {
            if !prior.contains(t) || !loglik(t).is_finite() {
                return Err(Error::InvalidStart);
            }
            t.to_vec()
        }
        None => {
            // Prior draws can land in degenerate-likelihood regions (for
            // example sigma at the lower box edge); retry a bounded number
            // of times before giving up.
            let mut start = None;
            for _ in 0..1000 {
                let candidate = prior.sample(&mut rng);
                if loglik(&candidate).is_finite() {
                    start = Some(candidate);
                    break;
                }
            }
            start.ok_or(Error::InvalidStart)?
        }
    };
    let k = prior.dim();
    let segment = config.burnin / config.n_adaptive;
    let mut state = ChainState {
        rng,
        theta: theta0,
        cov: config.sigma0.clone(),
    };
    if config.burnin > 0 {
        for _ in 0..config.n_adaptive {
            let result = metropolis_hastings(
                loglik,
                prior,
                &state.theta.clone(),
                &state.cov,
                segment,
                &mut state.rng,
            )?;
            state.cov = adapted_covariance(&result.samples, config.temperature, k)?;
            state.theta = result.samples.last().unwrap().clone();
        }
    }
    Ok(state)
}

/// Multi-chain adaptive run: per-chain adaptive burnin, a recorded phase
/// with a fixed kernel, R-hat checks with doubling on non-convergence, and
/// the maximum-likelihood sample across all recorded iterations.
///
/// `theta0s`, when given, supplies one start per chain (otherwise starts
/// are drawn from the prior).
pub fn adaptive_run<L>(
    loglik: &L,
    prior: &UniformPrior,
    config: &McmcConfig,
    theta0s: Option<&[Vec<f64>]>,
) -> Result<RunResult>
where
    L: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    if let Some(starts) = theta0s {
        if starts.len() != config.n_chains {
            return Err(Error::InvalidConfig(format!(
                "{} starting points for {} chains",
                starts.len(),
                config.n_chains
            )));
        }
    }
    let start_time = Instant::now();
    let mut states: Vec<ChainState> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            init_and_burnin(
                loglik,
                prior,
                config,
                theta0s.map(|s| s[c].as_slice()),
                c as u64,
            )
        })
        .collect::<Result<_>>()?;

    let mut n_record = config.n_iterations;
    let mut doublings = 0;
    let (chains, r_hat, converged) = loop {
        let chains: Vec<ChainResult> = states
            .par_iter_mut()
            .map(|state| {
                metropolis_hastings(
                    loglik,
                    prior,
                    &state.theta.clone(),
                    &state.cov,
                    n_record,
                    &mut state.rng,
                )
            })
            .collect::<Result<_>>()?;
        let sample_sets: Vec<&[Vec<f64>]> = chains.iter().map(|c| c.samples.as_slice()).collect();
        let r_hat = if config.n_chains >= 2 {
            gelman_rubin(&sample_sets)?
        } else {
            vec![1.0; prior.dim()]
        };
        let converged = r_hat.iter().all(|&r| r < 1.1);
        if converged || doublings == config.max_doublings {
            break (chains, r_hat, converged);
        }
        // Not converged: what was recorded becomes burnin and the chains
        // continue for twice as long.
        for (state, chain) in states.iter_mut().zip(&chains) {
            state.theta = chain.samples.last().unwrap().clone();
        }
        n_record *= 2;
        doublings += 1;
    };

    let mut theta_hat = chains[0].samples[0].clone();
    let mut max_loglik = f64::NEG_INFINITY;
    for chain in &chains {
        for (sample, &ll) in chain.samples.iter().zip(&chain.loglik) {
            if ll > max_loglik {
                max_loglik = ll;
                theta_hat = sample.clone();
            }
        }
    }
    Ok(RunResult {
        chains,
        r_hat,
        theta_hat,
        max_loglik,
        converged,
        doublings,
        runtime: start_time.elapsed(),
    })
}

/// Run one independent calibration per dataset with per-dataset seeds
/// derived from the run seed; failures stay isolated to their dataset.
pub fn batch_runs<D, F, L>(
    datasets: &[D],
    loglik_factory: F,
    prior: &UniformPrior,
    config: &McmcConfig,
) -> Vec<Result<RunResult>>
where
    D: Sync,
    F: Fn(&D) -> L + Sync,
    L: Fn(&[f64]) -> f64 + Sync,
{
    datasets
        .par_iter()
        .enumerate()
        .map(|(index, dataset)| {
            let mut dataset_config = config.clone();
            dataset_config.seed = dataset_seed(config.seed, index as u64);
            adaptive_run(&loglik_factory(dataset), prior, &dataset_config, None)
        })
        .collect()
}
