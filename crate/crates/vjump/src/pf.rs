//! Bootstrap particle filter estimating the exact-model log-likelihood of
//! a track; the baseline against which the approximate track likelihood is
//! benchmarked for accuracy, degeneracy and runtime.
//!
//! Prior-proposal filter with multinomial resampling at every step.
//! Particles carry (hidden state, exact position); initialisation draws the
//! position from `Normal(y_0, sigma^2)` and the state from the stationary
//! distribution. Each observation propagates every particle through the
//! exact process over one interval, weights it by the observation density,
//! accumulates `ln(mean weight)` and resamples. If every log-weight of a
//! step is `-inf` the estimate is degenerate: the filter stops and reports
//! `-inf` with the flag set.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::IncrementKernel;
use crate::model::VelocityJumpModel;
use crate::rng::particle_filter_rng;
use crate::simulate::{evolve, Track};
use crate::stats::{log_sum_exp, normal_logpdf};

/// Output of one particle-filter likelihood estimate.
#[derive(Debug, Clone)]
pub struct PfResult {
    pub loglik: f64,
    /// All weights underflowed at some step; `loglik` is `-inf`.
    pub degenerate: bool,
    /// Effective sample size after each observation (before resampling).
    pub ess_trace: Vec<f64>,
    pub runtime: Duration,
}

/// Bootstrap particle-filter estimate of the track log-likelihood.
pub fn pf_loglik<R: Rng>(
    model: &VelocityJumpModel,
    track: &Track,
    n_particles: usize,
    rng: &mut R,
) -> Result<PfResult> {
    if model.sigma() <= 0.0 {
        return Err(Error::ZeroNoise);
    }
    if n_particles < 2 {
        return Err(Error::TooFewParticles(n_particles));
    }
    let start = Instant::now();
    let sigma = model.sigma();
    let var = sigma * sigma;
    let pi = model.stationary_distribution()?;
    let y = track.locations();
    let delta_t = track.delta_t();

    let mut states: Vec<usize> = Vec::with_capacity(n_particles);
    let mut positions: Vec<f64> = Vec::with_capacity(n_particles);
    for _ in 0..n_particles {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut s = pi.len() - 1;
        for (i, &p) in pi.iter().enumerate() {
            acc += p;
            if u < acc {
                s = i;
                break;
            }
        }
        states.push(s);
        let z: f64 = StandardNormal.sample(rng);
        positions.push(y[0] + sigma * z);
    }

    let mut loglik = 0.0;
    let mut ess_trace = Vec::with_capacity(y.len() - 1);
    let mut log_weights = vec![0.0f64; n_particles];
    let mut degenerate = false;

    for &observation in &y[1..] {
        for p in 0..n_particles {
            evolve(
                model,
                &mut states[p],
                &mut positions[p],
                delta_t,
                rng,
                |_, _, _| {},
            );
            log_weights[p] = normal_logpdf(observation, positions[p], var);
        }
        let log_sum = log_sum_exp(&log_weights);
        if log_sum == f64::NEG_INFINITY {
            degenerate = true;
            loglik = f64::NEG_INFINITY;
            break;
        }
        // ln(mean w) and the normalised weights in one pass.
        loglik += log_sum - (n_particles as f64).ln();
        let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - log_sum).exp()).collect();
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        ess_trace.push(ess);

        // Multinomial resampling in a fixed particle order.
        let mut cumulative = weights.clone();
        for i in 1..n_particles {
            cumulative[i] += cumulative[i - 1];
        }
        let mut new_states = Vec::with_capacity(n_particles);
        let mut new_positions = Vec::with_capacity(n_particles);
        for _ in 0..n_particles {
            let u: f64 = rng.random();
            let idx = match cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) | Err(i) => i.min(n_particles - 1),
            };
            new_states.push(states[idx]);
            new_positions.push(positions[idx]);
        }
        states = new_states;
        positions = new_positions;
    }

    Ok(PfResult {
        loglik,
        degenerate,
        ess_trace,
        runtime: start.elapsed(),
    })
}

/// One row of the comparison table: a particle-filter replicate.
#[derive(Debug, Clone)]
pub struct PfComparisonRow {
    pub n_particles: usize,
    pub replicate: usize,
    pub loglik: f64,
    pub degenerate: bool,
    pub runtime_s: f64,
}

/// Particle filter vs deterministic track likelihood on one track.
#[derive(Debug, Clone)]
pub struct PfComparison {
    pub rows: Vec<PfComparisonRow>,
    /// Deterministic approximate track log-likelihood of the same track.
    pub track_loglik: f64,
    pub track_runtime_s: f64,
}

/// Summary of the replicates at one particle count.
#[derive(Debug, Clone)]
pub struct PfSummary {
    pub n_particles: usize,
    pub replicates: usize,
    pub degenerate_fraction: f64,
    /// Mean over non-degenerate replicates.
    pub mean_loglik: f64,
    /// Standard deviation over non-degenerate replicates.
    pub std_loglik: f64,
    pub mean_runtime_s: f64,
}

impl PfComparison {
    pub fn summary(&self, n_particles: usize) -> PfSummary {
        let rows: Vec<&PfComparisonRow> = self
            .rows
            .iter()
            .filter(|r| r.n_particles == n_particles)
            .collect();
        let finite: Vec<f64> = rows
            .iter()
            .filter(|r| !r.degenerate)
            .map(|r| r.loglik)
            .collect();
        let degenerate = rows.iter().filter(|r| r.degenerate).count();
        PfSummary {
            n_particles,
            replicates: rows.len(),
            degenerate_fraction: degenerate as f64 / rows.len() as f64,
            mean_loglik: if finite.is_empty() {
                f64::NEG_INFINITY
            } else {
                crate::stats::mean(&finite)
            },
            std_loglik: if finite.len() < 2 {
                0.0
            } else {
                crate::stats::sample_std(&finite)
            },
            mean_runtime_s: crate::stats::mean(
                &rows.iter().map(|r| r.runtime_s).collect::<Vec<f64>>(),
            ),
        }
    }
}

/// Run `replicates` particle-filter estimates per particle count against
/// the deterministic track likelihood of the same track. Replicate `r` of
/// particle count index `c` uses particle-filter stream
/// `c * replicates + r` of `master_seed`.
pub fn compare_harness(
    model: &VelocityJumpModel,
    track: &Track,
    n_particles_list: &[usize],
    replicates: usize,
    master_seed: u64,
) -> Result<PfComparison> {
    let kernel = IncrementKernel::new(model)?;
    let series = track.increments();
    // Median of several timed evaluations; a single run at this scale is
    // all jitter.
    let mut track_loglik = 0.0;
    let mut timings = Vec::with_capacity(5);
    for _ in 0..5 {
        let t0 = Instant::now();
        track_loglik = kernel.track_loglik(&series)?;
        timings.push(t0.elapsed().as_secs_f64());
    }
    let track_runtime_s = crate::stats::median(&timings);

    let mut rows = Vec::with_capacity(n_particles_list.len() * replicates);
    for (c, &n_particles) in n_particles_list.iter().enumerate() {
        let batch: Vec<PfComparisonRow> = (0..replicates)
            .into_par_iter()
            .map(|replicate| {
                let stream = (c * replicates + replicate) as u64;
                let mut rng = particle_filter_rng(master_seed, stream);
                let result = pf_loglik(model, track, n_particles, &mut rng)?;
                Ok(PfComparisonRow {
                    n_particles,
                    replicate,
                    loglik: result.loglik,
                    degenerate: result.degenerate,
                    runtime_s: result.runtime.as_secs_f64(),
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(batch);
    }
    Ok(PfComparison {
        rows,
        track_loglik,
        track_runtime_s,
    })
}
