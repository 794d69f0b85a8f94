//! Portfolio credit risk: factor-transformed importance sampling combined
//! with conditional exponential twisting of the Bernoulli default
//! indicators, so that the twisted expected loss sits exactly at the
//! target threshold q * mean exposure.

use crate::dependence::JointModel;
use crate::error::{Error, Result};
use crate::is_core::{likelihood_ratio, transform, ISConfig, ISEstimate};
use crate::losses::LossModel;
use crate::rng::RandomStream;
use crate::stats::Welford;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefaultModel {
    /// p = exp(W - gamma) / (1 + exp(W - gamma))
    Logit,
    /// p = 1 - exp(-exp(W - gamma))
    Intensity,
}

/// A pool of m loans whose conditional default probabilities are driven by
/// per-type score functions W evaluated at the common factor vector.
#[derive(Debug, Clone)]
pub struct Portfolio {
    heads: Vec<LossModel>,
    types: Vec<usize>,
    exposures: Vec<f64>,
    /// Per-loan multiplier on the type score, standing in for loan covariates.
    cov_scale: Vec<f64>,
    model: DefaultModel,
    gamma: f64,
    q: f64,
}

impl Portfolio {
    pub fn new(
        heads: Vec<LossModel>,
        types: Vec<usize>,
        exposures: Vec<f64>,
        cov_scale: Vec<f64>,
        model: DefaultModel,
        gamma: f64,
        q: f64,
    ) -> Result<Self> {
        let m = exposures.len();
        if m == 0 {
            return Err(Error::Config("portfolio needs at least one loan".into()));
        }
        if types.len() != m || cov_scale.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: types.len().min(cov_scale.len()) });
        }
        if heads.is_empty() || types.iter().any(|&t| t >= heads.len()) {
            return Err(Error::Config("loan type index out of range".into()));
        }
        if exposures.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("exposures must be positive".into()));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!("loss fraction q must be in (0,1), got {q}")));
        }
        Ok(Portfolio { heads, types, exposures, cov_scale, model, gamma, q })
    }

    /// Single-type convenience constructor with unit covariates.
    pub fn homogeneous(
        head: LossModel,
        exposures: Vec<f64>,
        model: DefaultModel,
        gamma: f64,
        q: f64,
    ) -> Result<Self> {
        let m = exposures.len();
        Portfolio::new(vec![head], vec![0; m], exposures, vec![1.0; m], model, gamma, q)
    }

    pub fn m(&self) -> usize {
        self.exposures.len()
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut p = self.clone();
        p.gamma = gamma;
        p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Mean exposure.
    pub fn e_bar(&self) -> f64 {
        self.exposures.iter().sum::<f64>() / self.m() as f64
    }

    /// Loss threshold q * e_bar for the per-loan average loss L_m.
    pub fn target(&self) -> f64 {
        self.q * self.e_bar()
    }

    fn score(&self, i: usize, type_values: &[f64]) -> f64 {
        self.cov_scale[i] * type_values[self.types[i]] - self.gamma
    }

    /// Conditional default probabilities p_i(z) for all loans.
    pub fn default_probs(&self, z: &[f64]) -> Result<Vec<f64>> {
        let type_values: Vec<f64> = self
            .heads
            .iter()
            .map(|h| h.eval_or_inf(z))
            .collect::<Result<_>>()?;
        Ok((0..self.m())
            .map(|i| default_prob_from_score(self.model, self.score(i, &type_values)))
            .collect())
    }
}

/// Stable conditional default probability from the centered score s = W - gamma.
pub fn default_prob_from_score(model: DefaultModel, s: f64) -> f64 {
    match model {
        DefaultModel::Logit => {
            if s >= 0.0 {
                1.0 / (1.0 + (-s).exp())
            } else {
                let e = s.exp();
                e / (1.0 + e)
            }
        }
        DefaultModel::Intensity => -(-s.exp()).exp_m1(),
    }
}

/// Conditional cumulant of the average loss: psi_m(theta) =
/// m^{-1} sum log(1 + p_i (e^{theta e_i} - 1)); +inf past the overflow guard.
pub fn psi_m(p: &[f64], e: &[f64], theta: f64) -> f64 {
    let e_max = e.iter().fold(0.0f64, |a, &b| a.max(b));
    if theta * e_max > 700.0 {
        return f64::INFINITY;
    }
    let m = p.len() as f64;
    p.iter()
        .zip(e)
        .map(|(&pi, &ei)| (pi * (theta * ei).exp_m1()).ln_1p())
        .sum::<f64>()
        / m
}

/// Twisted default probability p~ = p e^{lambda e} / (1 + p (e^{lambda e} - 1)),
/// computed in the overflow-free form p / (p + (1-p) e^{-lambda e}).
pub fn twisted_prob(p: f64, e: f64, lambda: f64) -> f64 {
    p / (p + (1.0 - p) * (-lambda * e).exp())
}

fn twisted_mean_loss(p: &[f64], e: &[f64], lambda: f64) -> f64 {
    p.iter()
        .zip(e)
        .map(|(&pi, &ei)| ei * twisted_prob(pi, ei, lambda))
        .sum::<f64>()
        / p.len() as f64
}

/// Solve for the twist lambda >= 0 with twisted mean loss equal to `target`
/// (the first-order condition of min_theta { -theta target + psi_m }).
/// Returns 0 when the untwisted mean already meets the target.
pub fn solve_twist(p: &[f64], e: &[f64], target: f64) -> Result<f64> {
    if twisted_mean_loss(p, e, 0.0) >= target {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut expansions = 0;
    while twisted_mean_loss(p, e, hi) < target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::NonConvergence {
                iterations: expansions,
                context: format!("twist bracket expansion: threshold {target} unattainable"),
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if twisted_mean_loss(p, e, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Conditional likelihood of a default pattern under the twist:
/// exp(-m [lambda L_m - psi_m(lambda)]).
pub fn conditional_likelihood(p: &[f64], e: &[f64], lambda: f64, l_m: f64) -> f64 {
    let m = p.len() as f64;
    (-m * (lambda * l_m - psi_m(p, e, lambda))).exp()
}

/// Twisted conditional estimate of P(L_m >= target | z) given default
/// probabilities p(z); used standalone for degenerate-factor checks and as
/// the inner loop of the full estimator.
pub fn conditional_excess_prob(
    p: &[f64],
    e: &[f64],
    target: f64,
    n: u64,
    stream: &mut RandomStream,
) -> Result<ISEstimate> {
    let lambda = solve_twist(p, e, target)?;
    let p_twist: Vec<f64> = p
        .iter()
        .zip(e)
        .map(|(&pi, &ei)| twisted_prob(pi, ei, lambda))
        .collect();
    let m = p.len() as f64;
    let mut acc = Welford::new();
    let mut hits = 0u64;
    for _ in 0..n {
        let mut loss = 0.0;
        for (&pt, &ei) in p_twist.iter().zip(e) {
            if stream.uniform01() < pt {
                loss += ei;
            }
        }
        let l_m = loss / m;
        if l_m >= target {
            hits += 1;
            acc.push(conditional_likelihood(p, e, lambda, l_m));
        } else {
            acc.push(0.0);
        }
    }
    let estimate = acc.mean();
    Ok(ISEstimate {
        estimate,
        sample_variance: acc.variance(),
        relative_error: if estimate > 0.0 {
            (acc.variance() / n as f64).sqrt() / estimate
        } else {
            f64::INFINITY
        },
        n,
        hit_count: hits,
    })
}

/// The combined estimator: factor samples pushed through the transformation
/// of the core sampler, defaults sampled at the twisted probabilities, both
/// likelihood corrections multiplied per replication.
pub fn estimate_pcr(portfolio: &Portfolio, jm: &JointModel, cfg: &ISConfig) -> Result<ISEstimate> {
    cfg.validate()?;
    let target = portfolio.target();
    let e = portfolio.exposures();
    let m = portfolio.m() as f64;
    let n_chunks = cfg.n_samples.div_ceil(cfg.chunk_size);
    let partials: Vec<(Welford, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = RandomStream::new(cfg.seed, chunk);
            let mut acc = Welford::new();
            let mut hits = 0u64;
            let start = chunk * cfg.chunk_size;
            let end = (start + cfg.chunk_size).min(cfg.n_samples);
            for _ in start..end {
                let x = jm.sample(&mut stream);
                let contribution: f64 = (|| -> Result<f64> {
                    let z = transform(&x, cfg.u, cfg.l, cfg.rho)?;
                    let factor_w = likelihood_ratio(jm, &x, &z, cfg.u, cfg.l, cfg.rho)?;
                    let p = portfolio.default_probs(&z)?;
                    let lambda = solve_twist(&p, e, target)?;
                    let mut loss = 0.0;
                    for (&pi, &ei) in p.iter().zip(e) {
                        let pt = twisted_prob(pi, ei, lambda);
                        if stream.uniform01() < pt {
                            loss += ei;
                        }
                    }
                    let l_m = loss / m;
                    if l_m >= target && factor_w > 0.0 {
                        Ok(factor_w * conditional_likelihood(&p, e, lambda, l_m))
                    } else {
                        Ok(0.0)
                    }
                })()
                .unwrap_or(0.0);
                if contribution > 0.0 {
                    hits += 1;
                }
                acc.push(contribution);
            }
            (acc, hits)
        })
        .collect();
    let mut acc = Welford::new();
    let mut hits = 0u64;
    for (w, h) in &partials {
        acc.merge(w);
        hits += h;
    }
    let estimate = acc.mean();
    Ok(ISEstimate {
        estimate,
        sample_variance: acc.variance(),
        relative_error: if estimate > 0.0 {
            (acc.variance() / acc.count() as f64).sqrt() / estimate
        } else {
            f64::INFINITY
        },
        n: acc.count(),
        hit_count: hits,
    })
}

/// Naive baseline: untwisted defaults at raw factor samples.
pub fn estimate_pcr_naive(
    portfolio: &Portfolio,
    jm: &JointModel,
    n: u64,
    seed: u64,
) -> Result<ISEstimate> {
    let target = portfolio.target();
    let e = portfolio.exposures();
    let m = portfolio.m() as f64;
    let chunk_size = 1024u64;
    let n_chunks = n.div_ceil(chunk_size);
    let partials: Vec<(Welford, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = RandomStream::new(seed, chunk);
            let mut acc = Welford::new();
            let mut hits = 0u64;
            let start = chunk * chunk_size;
            let end = (start + chunk_size).min(n);
            for _ in start..end {
                let x = jm.sample(&mut stream);
                let hit = portfolio
                    .default_probs(&x)
                    .map(|p| {
                        let mut loss = 0.0;
                        for (&pi, &ei) in p.iter().zip(e) {
                            if stream.uniform01() < pi {
                                loss += ei;
                            }
                        }
                        loss / m >= target
                    })
                    .unwrap_or(false);
                acc.push(f64::from(hit));
                hits += u64::from(hit);
            }
            (acc, hits)
        })
        .collect();
    let mut acc = Welford::new();
    let mut hits = 0u64;
    for (w, h) in &partials {
        acc.merge(w);
        hits += h;
    }
    let estimate = acc.mean();
    Ok(ISEstimate {
        estimate,
        sample_variance: acc.variance(),
        relative_error: if estimate > 0.0 {
            (acc.variance() / acc.count() as f64).sqrt() / estimate
        } else {
            f64::INFINITY
        },
        n: acc.count(),
        hit_count: hits,
    })
}
