//! Small numerical helpers: moments, covariance, Cholesky, histograms,
//! compensated summation and Gaussian special functions.

/// Natural log of the standard normal density scale, `-0.5 * ln(2*pi)`.
pub const NEG_HALF_LN_TWO_PI: f64 = -0.918_938_533_204_672_7;

/// Normal density with mean `mu` and variance `var`.
pub fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    let d = x - mu;
    (NEG_HALF_LN_TWO_PI - 0.5 * var.ln() - 0.5 * d * d / var).exp()
}

/// Log of the normal density with mean `mu` and variance `var`.
pub fn normal_logpdf(x: f64, mu: f64, var: f64) -> f64 {
    let d = x - mu;
    NEG_HALF_LN_TWO_PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Phi(hi) - Phi(lo)` for `lo <= hi`, evaluated so that same-side tails do
/// not cancel. Returns 0 when both tails underflow.
pub fn normal_cdf_diff(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    let s = std::f64::consts::SQRT_2;
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo / s) - libm::erfc(hi / s))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi / s) - libm::erfc(-lo / s))
    } else {
        0.5 * (libm::erf(hi / s) - libm::erf(lo / s))
    }
}

/// Log-sum-exp over a slice; `-inf` entries are ignored, all `-inf` gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Neumaier compensated sum; recovers the exact sum to within one rounding.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (1/(n-1)).
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn sample_std(values: &[f64]) -> f64 {
    sample_variance(values).sqrt()
}

/// Median (averages the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Empirical quantile by linear interpolation of the order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(values: &[f64]) -> f64 {
    let n = values.len();
    let m = mean(values);
    let var: f64 = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    let cov: f64 = values
        .windows(2)
        .map(|w| (w[0] - m) * (w[1] - m))
        .sum::<f64>()
        / (n - 1) as f64;
    cov / var
}

/// Symmetric matrix stored dense row-major; used for proposal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, &d) in diag.iter().enumerate() {
            data[i * dim + i] = d;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add_to_diagonal(&mut self, value: f64) {
        for i in 0..self.dim {
            let v = self.get(i, i) + value;
            self.set(i, i, v);
        }
    }

    /// Sample covariance of row vectors (1/(n-1) normalisation).
    pub fn covariance_of(samples: &[Vec<f64>]) -> Self {
        let n = samples.len();
        let k = samples[0].len();
        let mut means = vec![0.0; k];
        for row in samples {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut data = vec![0.0; k * k];
        for row in samples {
            for i in 0..k {
                let di = row[i] - means[i];
                for j in i..k {
                    data[i * k + j] += di * (row[j] - means[j]);
                }
            }
        }
        let norm = 1.0 / (n - 1) as f64;
        for i in 0..k {
            for j in i..k {
                let v = data[i * k + j] * norm;
                data[i * k + j] = v;
                data[j * k + i] = v;
            }
        }
        Self { dim: k, data }
    }

    /// Lower-triangular Cholesky factor, or `None` if not positive definite.
    pub fn cholesky(&self) -> Option<Vec<f64>> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for p in 0..j {
                    sum -= l[i * n + p] * l[j * n + p];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(l)
    }
}

/// Equal-width histogram normalised to a density.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub bin_width: f64,
    pub first_edge: f64,
    /// Density per bin (counts / (n * width)).
    pub density: Vec<f64>,
}

impl Histogram {
    /// Bins `samples` with the given width; edges are aligned to integer
    /// multiples of the width so the binning does not depend on sample order.
    pub fn from_samples(samples: &[f64], bin_width: f64) -> Self {
        assert!(bin_width > 0.0 && !samples.is_empty());
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = (min / bin_width).floor();
        let last = (max / bin_width).floor();
        let n_bins = (last - first) as usize + 1;
        let mut counts = vec![0u64; n_bins];
        for &s in samples {
            let idx = ((s / bin_width).floor() - first) as usize;
            counts[idx.min(n_bins - 1)] += 1;
        }
        let norm = 1.0 / (samples.len() as f64 * bin_width);
        Self {
            bin_width,
            first_edge: first * bin_width,
            density: counts.iter().map(|&c| c as f64 * norm).collect(),
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.density.len())
            .map(|i| self.first_edge + (i as f64 + 0.5) * self.bin_width)
            .collect()
    }

    /// L1 distance between this density and `pdf` evaluated at bin centers,
    /// integrated over the histogram support.
    pub fn l1_distance(&self, pdf: impl Fn(f64) -> f64) -> f64 {
        self.centers()
            .iter()
            .zip(&self.density)
            .map(|(&c, &d)| (d - pdf(c)).abs() * self.bin_width)
            .sum()
    }
}

/// Slope and intercept of the least-squares line through `(x, y)` pairs.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
