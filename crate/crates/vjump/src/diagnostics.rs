//! Convergence diagnostics for multi-chain MCMC output.

use crate::error::{Error, Result};

/// Gelman-Rubin potential scale reduction factor per parameter, computed
/// over whole recorded chains.
///
/// With `m` chains of length `n`: `W` is the mean within-chain variance,
/// `B/n` the variance of the chain means, and
/// `R = sqrt(((n-1)/n W + B/n) / W)`. Zero within-chain variance maps to 1
/// when the chains also agree and to `+inf` when they do not.
pub fn gelman_rubin<S: AsRef<[Vec<f64>]>>(chains: &[S]) -> Result<Vec<f64>> {
    if chains.len() < 2 {
        return Err(Error::ShapeMismatch);
    }
    let n = chains[0].as_ref().len();
    if n < 10 {
        return Err(Error::ShapeMismatch);
    }
    let k = chains[0].as_ref()[0].len();
    for chain in chains {
        let chain = chain.as_ref();
        if chain.len() != n || chain.iter().any(|row| row.len() != k) {
            return Err(Error::ShapeMismatch);
        }
    }
    let m = chains.len() as f64;
    let n_f = n as f64;
    let mut r_hat = Vec::with_capacity(k);
    for p in 0..k {
        let mut means = Vec::with_capacity(chains.len());
        let mut vars = Vec::with_capacity(chains.len());
        for chain in chains {
            let chain = chain.as_ref();
            let mean = chain.iter().map(|row| row[p]).sum::<f64>() / n_f;
            let var = chain
                .iter()
                .map(|row| (row[p] - mean) * (row[p] - mean))
                .sum::<f64>()
                / (n_f - 1.0);
            means.push(mean);
            vars.push(var);
        }
        let w: f64 = vars.iter().sum::<f64>() / m;
        let grand = means.iter().sum::<f64>() / m;
        let b_over_n: f64 = means
            .iter()
            .map(|mu| (mu - grand) * (mu - grand))
            .sum::<f64>()
            / (m - 1.0);
        let r = if w == 0.0 {
            if b_over_n == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            (((n_f - 1.0) / n_f * w + b_over_n) / w).sqrt()
        };
        r_hat.push(r);
    }
    Ok(r_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_constant_chains_give_one() {
        let chain = vec![vec![3.0, -1.0]; 100];
        let chains = vec![chain.clone(), chain.clone(), chain];
        let r = gelman_rubin(&chains).unwrap();
        assert_eq!(r, vec![1.0, 1.0]);
    }

    #[test]
    fn constant_but_different_chains_give_infinity() {
        let a = vec![vec![0.0]; 50];
        let b = vec![vec![1.0]; 50];
        let r = gelman_rubin(&[a, b]).unwrap();
        assert_eq!(r, vec![f64::INFINITY]);
    }

    #[test]
    fn iid_normal_chains_are_close_to_one() {
        let mut rng = crate::rng::stream_rng(13, 0, 0);
        let chains: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| {
                (0..10_000)
                    .map(|_| vec![rng.sample::<f64, _>(rand_distr::StandardNormal)])
                    .collect()
            })
            .collect();
        let r = gelman_rubin(&chains).unwrap();
        assert!(r[0] >= 1.0 - 1e-12);
        assert!(r[0] < 1.01, "R-hat {}", r[0]);
    }

    #[test]
    fn far_separated_chains_exceed_five() {
        let mut rng = crate::rng::stream_rng(14, 0, 0);
        let a: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![rng.sample::<f64, _>(rand_distr::StandardNormal)])
            .collect();
        let b: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![100.0 + rng.sample::<f64, _>(rand_distr::StandardNormal)])
            .collect();
        let r = gelman_rubin(&[a, b]).unwrap();
        // B/n ~ 5000, W ~ 1 => R ~ sqrt(5001) ~ 70.
        assert!(r[0] > 5.0, "R-hat {}", r[0]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = vec![vec![0.0]; 50];
        let short = vec![vec![0.0]; 5];
        assert!(matches!(
            gelman_rubin(&[a.clone()]),
            Err(Error::ShapeMismatch)
        ));
        assert!(matches!(
            gelman_rubin(&[short.clone(), short]),
            Err(Error::ShapeMismatch)
        ));
        let b = vec![vec![0.0]; 49];
        assert!(matches!(gelman_rubin(&[a, b]), Err(Error::ShapeMismatch)));
    }
}
