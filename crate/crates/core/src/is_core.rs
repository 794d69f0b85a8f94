//! The self-structuring importance sampler: multiplicative transformation
//! T(x) = x (u/l)^{kappa(x)}, its Jacobian, the likelihood ratio, and the
//! unbiased tail-probability estimator with a naive Monte Carlo baseline.
//!
//! The transformation magnifies each coordinate by an exponent proportional
//! to its log-scale size, pushing bulk samples from around level l toward
//! level u without any knowledge of where the loss surface exceeds u.

use crate::dependence::JointModel;
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::rng::RandomStream;
use crate::stats::Welford;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct ISConfig {
    /// Target level: estimate P(L(X) > u).
    pub u: f64,
    /// Transformation hyperparameter, 0 < l <= u.
    pub l: f64,
    /// Homogeneity order of the loss.
    pub rho: f64,
    pub n_samples: u64,
    pub seed: u64,
    /// Replications per deterministic chunk; results depend on this value
    /// but never on the worker count.
    pub chunk_size: u64,
}

impl ISConfig {
    pub fn new(u: f64, l: f64, rho: f64, n_samples: u64, seed: u64) -> Result<Self> {
        let cfg = ISConfig { u, l, rho, n_samples, seed, chunk_size: 1024 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.u >= self.l) {
            return Err(Error::Config(format!(
                "levels must satisfy 0 < l <= u, got l = {}, u = {}",
                self.l, self.u
            )));
        }
        if self.rho <= 0.0 {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.n_samples == 0 || self.chunk_size == 0 {
            return Err(Error::Config("n_samples and chunk_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ISEstimate {
    pub estimate: f64,
    pub sample_variance: f64,
    /// sqrt(sample_variance / n) / estimate; +inf when the estimate is 0.
    pub relative_error: f64,
    pub n: u64,
    pub hit_count: u64,
}

impl ISEstimate {
    fn from_accumulator(w: &Welford, hits: u64) -> Self {
        let estimate = w.mean();
        let sample_variance = w.variance();
        let relative_error = if estimate > 0.0 {
            (sample_variance / w.count() as f64).sqrt() / estimate
        } else {
            f64::INFINITY
        };
        ISEstimate {
            estimate,
            sample_variance,
            relative_error,
            n: w.count(),
            hit_count: hits,
        }
    }

    pub fn standard_error(&self) -> f64 {
        (self.sample_variance / self.n as f64).sqrt()
    }
}

/// Exponent vector kappa(x) = log(1+|x|) / (rho * max_i log(1+|x_i|)),
/// with the convention kappa(0) = 0.
pub fn kappa(x: &[f64], rho: f64) -> Vec<f64> {
    let t: Vec<f64> = x.iter().map(|&xi| xi.abs().ln_1p()).collect();
    let norm = t.iter().fold(0.0f64, |a, &b| a.max(b));
    if norm == 0.0 {
        return vec![0.0; x.len()];
    }
    t.iter().map(|&ti| ti / (rho * norm)).collect()
}

/// T(x) = x * (u/l)^{kappa(x)}.
pub fn transform(x: &[f64], u: f64, l: f64, rho: f64) -> Result<Vec<f64>> {
    if !(l > 0.0 && u >= l) {
        return Err(Error::Config(format!("transform requires 0 < l <= u, got l = {l}, u = {u}")));
    }
    let log_ratio = (u / l).ln();
    Ok(kappa(x, rho)
        .iter()
        .zip(x)
        .map(|(&ki, &xi)| xi * (ki * log_ratio).exp())
        .collect())
}

/// log of the Jacobian determinant of T at x (x != 0):
/// log J = sum_i log Jt_i + (1^T kappa) log(u/l) - log max_i Jt_i,
/// Jt_i = 1 + (log(u/l) / (rho * max_j log(1+|x_j|))) * |x_i| / (1+|x_i|).
pub fn log_jacobian(x: &[f64], u: f64, l: f64, rho: f64) -> Result<f64> {
    if !(l > 0.0 && u >= l) {
        return Err(Error::Config(format!("jacobian requires 0 < l <= u, got l = {l}, u = {u}")));
    }
    let t: Vec<f64> = x.iter().map(|&xi| xi.abs().ln_1p()).collect();
    let norm = t.iter().fold(0.0f64, |a, &b| a.max(b));
    if norm == 0.0 {
        return Err(Error::Domain("Jacobian undefined at x = 0".into()));
    }
    let log_ratio = (u / l).ln();
    let scale = log_ratio / (rho * norm);
    let mut sum_log_jt = 0.0;
    let mut max_jt = f64::NEG_INFINITY;
    let mut sum_kappa = 0.0;
    for (&xi, &ti) in x.iter().zip(&t) {
        let a = xi.abs();
        let jt = 1.0 + scale * a / (1.0 + a);
        sum_log_jt += jt.ln();
        max_jt = max_jt.max(jt);
        sum_kappa += ti / (rho * norm);
    }
    Ok(sum_log_jt + sum_kappa * log_ratio - max_jt.ln())
}

pub fn jacobian(x: &[f64], u: f64, l: f64, rho: f64) -> Result<f64> {
    Ok(log_jacobian(x, u, l, rho)?.exp())
}

/// Likelihood ratio of one replication: f_X(z) / f_X(x) * J(x), evaluated in
/// log space. Transformed points outside the support get weight 0.
pub fn likelihood_ratio(
    jm: &JointModel,
    x: &[f64],
    z: &[f64],
    u: f64,
    l: f64,
    rho: f64,
) -> Result<f64> {
    if u == l {
        return Ok(1.0);
    }
    let log_fz = match jm.log_density(z) {
        Ok(v) => v,
        Err(Error::Domain(_)) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let log_fx = jm.log_density(x)?;
    let log_j = log_jacobian(x, u, l, rho)?;
    let w = (log_fz - log_fx + log_j).exp();
    Ok(if w.is_finite() { w } else { 0.0 })
}

/// Apply the IS transformation to a sample from the model and compute its
/// likelihood ratio. The transformation acts on the displacement from the
/// support origin (nonzero only for marginals whose support starts above 0,
/// e.g. Pareto), so the support maps onto itself and the weighted-indicator
/// estimator stays unbiased; for origin 0 this is exactly z = T(x).
pub fn push_sample(
    jm: &JointModel,
    x: &[f64],
    u: f64,
    l: f64,
    rho: f64,
) -> Result<(Vec<f64>, f64)> {
    let origin = jm.support_origin();
    if origin.iter().all(|&o| o == 0.0) {
        let z = transform(x, u, l, rho)?;
        let w = likelihood_ratio(jm, x, &z, u, l, rho)?;
        return Ok((z, w));
    }
    let shifted: Vec<f64> = x.iter().zip(&origin).map(|(&xi, &oi)| xi - oi).collect();
    let pushed = transform(&shifted, u, l, rho)?;
    let z: Vec<f64> = pushed.iter().zip(&origin).map(|(&pi, &oi)| pi + oi).collect();
    if u == l {
        return Ok((z, 1.0));
    }
    let log_fz = match jm.log_density(&z) {
        Ok(v) => v,
        Err(Error::Domain(_)) => return Ok((z, 0.0)),
        Err(e) => return Err(e),
    };
    let log_fx = jm.log_density(x)?;
    let log_j = log_jacobian(&shifted, u, l, rho)?;
    let w = (log_fz - log_fx + log_j).exp();
    Ok((z, if w.is_finite() { w } else { 0.0 }))
}

fn run_chunked<F: Fn(&mut RandomStream, &mut Welford) -> u64 + Sync>(
    n_samples: u64,
    chunk_size: u64,
    seed: u64,
    body: F,
) -> (Welford, u64) {
    let n_chunks = n_samples.div_ceil(chunk_size);
    let partials: Vec<(Welford, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = RandomStream::new(seed, chunk);
            let mut acc = Welford::new();
            let mut hits = 0u64;
            let start = chunk * chunk_size;
            let end = (start + chunk_size).min(n_samples);
            for _ in start..end {
                hits += body(&mut stream, &mut acc);
            }
            (acc, hits)
        })
        .collect();
    // ordered sequential merge keeps the result independent of thread count
    let mut acc = Welford::new();
    let mut hits = 0u64;
    for (w, h) in &partials {
        acc.merge(w);
        hits += h;
    }
    (acc, hits)
}

/// The self-structuring IS estimator with a caller-supplied hit predicate on
/// the transformed point. The weighted indicator mean is unbiased for
/// P(hit(X)) by the change of variables z = T(x).
pub fn estimate_is_with<F>(jm: &JointModel, cfg: &ISConfig, hit: F) -> Result<ISEstimate>
where
    F: Fn(&[f64]) -> Result<bool> + Sync,
{
    cfg.validate()?;
    let (acc, hits) = run_chunked(cfg.n_samples, cfg.chunk_size, cfg.seed, |stream, acc| {
        let x = jm.sample(stream);
        let contribution = (|| -> Result<(f64, u64)> {
            let (z, w) = push_sample(jm, &x, cfg.u, cfg.l, cfg.rho)?;
            if hit(&z)? {
                Ok((w, u64::from(w > 0.0)))
            } else {
                Ok((0.0, 0))
            }
        })()
        .unwrap_or((0.0, 0));
        acc.push(contribution.0);
        contribution.1
    });
    Ok(ISEstimate::from_accumulator(&acc, hits))
}

/// Estimate P(L(X) > u) by Algorithm-style importance sampling.
pub fn estimate_is(jm: &JointModel, lm: &LossModel, cfg: &ISConfig) -> Result<ISEstimate> {
    if (lm.rho() - cfg.rho).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "loss rho {} disagrees with config rho {}",
            lm.rho(),
            cfg.rho
        )));
    }
    estimate_is_with(jm, cfg, |z| Ok(lm.eval_or_inf(z)? > cfg.u))
}

/// Naive Monte Carlo baseline: hit frequency with binomial variance.
pub fn estimate_naive_with<F>(
    jm: &JointModel,
    n: u64,
    seed: u64,
    chunk_size: u64,
    hit: F,
) -> Result<ISEstimate>
where
    F: Fn(&[f64]) -> Result<bool> + Sync,
{
    let (acc, hits) = run_chunked(n, chunk_size, seed, |stream, acc| {
        let x = jm.sample(stream);
        let h = hit(&x).unwrap_or(false);
        acc.push(f64::from(h));
        u64::from(h)
    });
    Ok(ISEstimate::from_accumulator(&acc, hits))
}

pub fn estimate_naive(jm: &JointModel, lm: &LossModel, u: f64, n: u64, seed: u64) -> Result<ISEstimate> {
    estimate_naive_with(jm, n, seed, 1024, |x| Ok(lm.eval_or_inf(x)? > u))
}

/// Numeric inverse of T by damped fixed-point iteration on the exponent
/// profile (T preserves signs and the coordinate order of magnitudes).
pub fn invert_transform(z: &[f64], u: f64, l: f64, rho: f64) -> Result<Vec<f64>> {
    if !(l > 0.0 && u >= l) {
        return Err(Error::Config(format!("invert requires 0 < l <= u, got l = {l}, u = {u}")));
    }
    if u == l {
        return Ok(z.to_vec());
    }
    let log_ratio = (u / l).ln();
    let mut x: Vec<f64> = z.to_vec();
    for iter in 0..200 {
        let k = kappa(&x, rho);
        let next: Vec<f64> = z
            .iter()
            .zip(&k)
            .zip(&x)
            .map(|((&zi, &ki), &xi)| {
                let target = zi * (-ki * log_ratio).exp();
                0.5 * xi + 0.5 * target
            })
            .collect();
        let err = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0f64, f64::max);
        x = next;
        if err < 1e-12 {
            // verify the round trip before declaring success
            let back = transform(&x, u, l, rho)?;
            let rt = back
                .iter()
                .zip(z)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                .fold(0.0f64, f64::max);
            if rt < 1e-8 {
                return Ok(x);
            }
            let _ = iter;
        }
    }
    Err(Error::NonConvergence {
        iterations: 200,
        context: "transform inversion fixed point".into(),
    })
}

/// Cross-validate the hyperparameter l over a grid with common random
/// numbers (identical seed, hence identical base samples per grid point).
/// Returns the grid annotated with estimates and the variance-minimizing l.
pub fn crossvalidate_l<F>(
    jm: &JointModel,
    cfg_at: impl Fn(f64) -> ISConfig,
    grid: &[f64],
    hit: F,
) -> Result<(f64, Vec<(f64, ISEstimate)>)>
where
    F: Fn(f64, &[f64]) -> Result<bool> + Sync,
{
    if grid.is_empty() {
        return Err(Error::Config("cross-validation grid is empty".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for &l in grid {
        let cfg = cfg_at(l);
        if l >= cfg.u {
            return Err(Error::Config(format!(
                "grid value l = {l} must be below u = {}",
                cfg.u
            )));
        }
        let est = estimate_is_with(jm, &cfg, |z| hit(l, z))?;
        table.push((l, est));
    }
    let best = table
        .iter()
        .min_by(|a, b| a.1.sample_variance.partial_cmp(&b.1.sample_variance).unwrap())
        .map(|(l, _)| *l)
        .unwrap();
    Ok((best, table))
}
