//! Small statistics toolkit: streaming moments, the Kolmogorov-Smirnov
//! goodness-of-fit test and Kendall's rank correlation.

/// Streaming mean/variance accumulator (Welford). Merging two accumulators
/// in a fixed order is exact enough to make chunked parallel reductions
/// independent of the worker count, as long as the merge order is fixed.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Welford::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        self.mean += delta * other.n as f64 / nf;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous c.d.f.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut sorted: Vec<f64> = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value P(D_n > d) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2)
/// with t = d (sqrt(n) + 0.12 + 0.11/sqrt(n)).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let t = d * (sn + 0.12 + 0.11 / sn);
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * t * t).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Kendall's tau-a rank correlation (no tie correction; fine for
/// continuous samples). O(n^2), intended for test-sized inputs.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (x[i] - x[j]) * (y[i] - y[j]);
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    (concordant - discordant) as f64 / (n * (n - 1) / 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut w = Welford::new();
        for &x in &xs {
            w.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_relative_eq!(w.mean(), mean, epsilon = 1e-10);
        assert_relative_eq!(w.variance(), var, epsilon = 1e-10);
    }

    #[test]
    fn welford_merge_equals_sequential() {
        let xs: Vec<f64> = (0..997).map(|i| ((i * 13) % 89) as f64 - 44.0).collect();
        let mut whole = Welford::new();
        for &x in &xs {
            whole.push(x);
        }
        let mut merged = Welford::new();
        for chunk in xs.chunks(100) {
            let mut w = Welford::new();
            for &x in chunk {
                w.push(x);
            }
            merged.merge(&w);
        }
        assert_relative_eq!(merged.mean(), whole.mean(), epsilon = 1e-12);
        assert_relative_eq!(merged.variance(), whole.variance(), epsilon = 1e-12);
        assert_eq!(merged.count(), whole.count());
    }

    #[test]
    fn ks_accepts_true_distribution() {
        let mut s = RandomStream::new(9, 0);
        let draws: Vec<f64> = (0..5000).map(|_| s.uniform01()).collect();
        let d = ks_statistic(&draws, |x| x.clamp(0.0, 1.0));
        assert!(ks_pvalue(d, draws.len()) > 0.01);
    }

    #[test]
    fn ks_rejects_wrong_distribution() {
        let mut s = RandomStream::new(9, 1);
        let draws: Vec<f64> = (0..5000).map(|_| s.uniform01().powi(2)).collect();
        let d = ks_statistic(&draws, |x| x.clamp(0.0, 1.0));
        assert!(ks_pvalue(d, draws.len()) < 1e-6);
    }

    #[test]
    fn kendall_tau_extremes() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y_up = x.clone();
        let y_down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(kendall_tau(&x, &y_up), 1.0);
        assert_relative_eq!(kendall_tau(&x, &y_down), -1.0);
    }

    #[test]
    fn kendall_tau_independent_near_zero() {
        let mut s = RandomStream::new(4, 0);
        let x: Vec<f64> = (0..800).map(|_| s.uniform01()).collect();
        let y: Vec<f64> = (0..800).map(|_| s.uniform01()).collect();
        let tau = kendall_tau(&x, &y);
        // SE of tau under independence is about sqrt(2(2n+5)/(9n(n-1)))
        assert!(tau.abs() < 0.08, "tau = {tau}");
    }
}
