//! Information-criterion model selection and the noise-inflation
//! diagnostic.
//!
//! Both criteria penalise the maximum log-likelihood over the recorded
//! posterior samples: `AIC = 2k - 2 log L`, `BIC = k ln N - 2 log L` with
//! `N` the number of location increments used in the calibration. The
//! candidate with the lowest criterion value wins; exact ties go to the
//! smaller `k`, then to input order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Akaike information criterion, `2k - 2 max_loglik`.
pub fn aic(k: usize, max_loglik: f64) -> Result<f64> {
    if !max_loglik.is_finite() {
        return Err(Error::NonFinite(max_loglik));
    }
    Ok(2.0 * k as f64 - 2.0 * max_loglik)
}

/// Bayesian information criterion, `k ln(N) - 2 max_loglik`.
pub fn bic(k: usize, n_data: usize, max_loglik: f64) -> Result<f64> {
    if !max_loglik.is_finite() {
        return Err(Error::NonFinite(max_loglik));
    }
    if n_data == 0 {
        return Err(Error::MismatchedN);
    }
    Ok(k as f64 * (n_data as f64).ln() - 2.0 * max_loglik)
}

/// Relative difference `(sigma_simple - sigma_complex) / sigma_simple`
/// between the noise estimates of a simpler and a more complex model; a
/// large positive value flags noise inflation in the simpler model.
pub fn noise_relative_diff(sigma_simple: f64, sigma_complex: f64) -> Result<f64> {
    if sigma_simple == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok((sigma_simple - sigma_complex) / sigma_simple)
}

/// One fitted model entering a selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    /// Number of estimated parameters.
    pub k: usize,
    /// Number of location increments in the calibration data.
    pub n_data: usize,
    pub max_loglik: f64,
    /// Estimated noise standard deviation (sigma slot of the best sample).
    pub sigma_hat: f64,
}

/// Per-candidate criterion values inside a [`SelectionReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub name: String,
    pub k: usize,
    pub n_data: usize,
    pub max_loglik: f64,
    pub sigma_hat: f64,
    pub aic: f64,
    pub bic: f64,
    /// `(sigma_simplest - sigma_this) / sigma_simplest` against the
    /// smallest-k candidate.
    pub noise_relative_diff: f64,
}

/// Outcome of comparing candidate models on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<ScoredCandidate>,
    pub chosen_by_aic: String,
    pub chosen_by_bic: String,
    /// True when both criteria pick the same candidate.
    pub agreement: bool,
}

fn argmin_with_ties(values: &[f64], ks: &[usize]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best]
            || (values[i] == values[best] && ks[i] < ks[best])
        {
            best = i;
        }
    }
    best
}

/// Score candidates with both criteria and pick the winners. All
/// candidates must share the data count `N`; the noise diagnostic is taken
/// against the smallest-k candidate (first such on ties).
pub fn select(candidates: &[Candidate]) -> Result<SelectionReport> {
    if candidates.len() < 2 {
        return Err(Error::NotEnoughInputs {
            want: 2,
            got: candidates.len(),
        });
    }
    let n_data = candidates[0].n_data;
    if candidates.iter().any(|c| c.n_data != n_data) {
        return Err(Error::MismatchedN);
    }
    let simplest = candidates
        .iter()
        .enumerate()
        .min_by_key(|(i, c)| (c.k, *i))
        .map(|(i, _)| i)
        .unwrap();
    let sigma_ref = candidates[simplest].sigma_hat;
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        scored.push(ScoredCandidate {
            name: c.name.clone(),
            k: c.k,
            n_data: c.n_data,
            max_loglik: c.max_loglik,
            sigma_hat: c.sigma_hat,
            aic: aic(c.k, c.max_loglik)?,
            bic: bic(c.k, c.n_data, c.max_loglik)?,
            noise_relative_diff: noise_relative_diff(sigma_ref, c.sigma_hat)?,
        });
    }
    let ks: Vec<usize> = scored.iter().map(|c| c.k).collect();
    let aics: Vec<f64> = scored.iter().map(|c| c.aic).collect();
    let bics: Vec<f64> = scored.iter().map(|c| c.bic).collect();
    let aic_winner = argmin_with_ties(&aics, &ks);
    let bic_winner = argmin_with_ties(&bics, &ks);
    Ok(SelectionReport {
        chosen_by_aic: scored[aic_winner].name.clone(),
        chosen_by_bic: scored[bic_winner].name.clone(),
        agreement: aic_winner == bic_winner,
        candidates: scored,
    })
}
