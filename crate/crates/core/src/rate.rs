//! Numeric large-deviations layer: closed-form rate functions I of the
//! standardized vector, the tail-heterogeneity limit q*, and the decay
//! exponent I* = inf { I(y) : L*(q* y^{1/alpha}) >= 1 } computed by a
//! direction search over the simplex with bisection along rays.

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::losses::LossModel;
use crate::marginals::MarginalModel;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub enum RateKind {
    GaussianCopula(DMatrix<f64>),
    Independence,
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    StudentT { dof: f64 },
}

/// A rate function I(y) on the nonnegative orthant, from the closed-form
/// catalogue of standardized-vector LDPs.
#[derive(Debug, Clone)]
pub struct RateSpec {
    kind: RateKind,
    dim: usize,
    r_inv: Option<DMatrix<f64>>,
}

impl RateSpec {
    pub fn new(kind: RateKind, dim: usize) -> Result<Self> {
        let r_inv = match &kind {
            RateKind::GaussianCopula(r) => {
                if r.nrows() != dim || r.ncols() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: r.nrows() });
                }
                let l = cholesky(r)?;
                let inv_l = l
                    .clone()
                    .solve_lower_triangular(&DMatrix::identity(dim, dim))
                    .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
                Some(inv_l.transpose() * inv_l)
            }
            RateKind::Clayton { theta } => {
                if *theta <= 0.0 {
                    return Err(Error::Config(format!("Clayton theta must be > 0, got {theta}")));
                }
                None
            }
            RateKind::Gumbel { theta } => {
                if *theta < 1.0 {
                    return Err(Error::Config(format!("Gumbel theta must be >= 1, got {theta}")));
                }
                None
            }
            RateKind::StudentT { dof } => {
                if *dof <= 0.0 {
                    return Err(Error::Config(format!(
                        "Student-t degrees of freedom must be > 0, got {dof}"
                    )));
                }
                None
            }
            RateKind::Independence => None,
        };
        Ok(RateSpec { kind, dim, r_inv })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    /// Evaluate I(y), y >= 0.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: y.len() });
        }
        if y.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("rate function requires y >= 0".into()));
        }
        let d = self.dim as f64;
        let sup = y.iter().fold(0.0f64, |a, &b| a.max(b));
        let sum: f64 = y.iter().sum();
        Ok(match &self.kind {
            RateKind::Independence => sum,
            RateKind::GaussianCopula(_) => {
                let s = DVector::from_iterator(self.dim, y.iter().map(|v| v.sqrt()));
                let r_inv = self.r_inv.as_ref().unwrap();
                (r_inv * &s).dot(&s)
            }
            RateKind::Clayton { theta } => (1.0 + theta * d) * sup - theta * sum,
            RateKind::Gumbel { theta } => {
                y.iter().map(|v| v.powf(*theta)).sum::<f64>().powf(1.0 / theta)
            }
            RateKind::StudentT { dof } => (1.0 + d / dof) * sup - sum / dof,
        })
    }
}

/// Pointwise minimum of the marginal hazards at x.
pub fn lambda_min(marginals: &[MarginalModel], x: f64) -> Result<f64> {
    marginals
        .iter()
        .map(|m| m.hazard(x))
        .try_fold(f64::INFINITY, |acc, h| h.map(|v| acc.min(v)))
}

const Q_PROBE_LO: f64 = 1e6;
const Q_PROBE_HI: f64 = 1e7;

/// The heterogeneity limit q*: normalized limit of the componentwise hazard
/// inverses, computed via the hazard-ratio form (Lambda_min / Lambda_i)^{1/alpha_min}
/// at probe levels 1e6 and 1e7. Heavy-tailed collections use the log-scale
/// hazards instead; mixing heavy and light marginals is unsupported.
pub fn q_star(marginals: &[MarginalModel]) -> Result<Vec<f64>> {
    if marginals.is_empty() {
        return Err(Error::Config("q_star needs at least one marginal".into()));
    }
    let heavy = marginals[0].heavy_tailed();
    if marginals.iter().any(|m| m.heavy_tailed() != heavy) {
        return Err(Error::Unsupported(
            "q_star for mixed heavy/light marginal collections is not supported".into(),
        ));
    }
    let alpha_min = marginals.iter().map(|m| m.alpha()).fold(f64::INFINITY, f64::min);
    let probe = |x: f64| -> Result<Vec<f64>> {
        let hazards: Vec<f64> = marginals
            .iter()
            .map(|m| if heavy { m.hazard_log_scale(x) } else { m.hazard(x) })
            .collect::<Result<_>>()?;
        let h_min = hazards.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let mut q: Vec<f64> = hazards
            .iter()
            .map(|&h| (h_min / h).powf(1.0 / alpha_min))
            .collect();
        let q_max = q.iter().fold(0.0f64, |a, &b| a.max(b));
        for (qi, m) in q.iter_mut().zip(marginals) {
            *qi /= q_max;
            if m.alpha() > alpha_min && *qi < 1e-3 {
                *qi = 0.0;
            }
        }
        Ok(q)
    };
    let lo = probe(Q_PROBE_LO)?;
    let hi = probe(Q_PROBE_HI)?;
    for (i, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
        if b == 0.0 && a < 0.01 {
            // vanishing coordinate: snapped at the finer probe, already
            // small at the coarser one
            continue;
        }
        let denom = a.abs().max(b.abs()).max(1e-12);
        if a.max(b) > 0.0 && (a - b).abs() / denom > 0.05 {
            return Err(Error::NonConvergence {
                iterations: 2,
                context: format!("q_star coordinate {i} differs across probe levels: {a} vs {b}"),
            });
        }
    }
    Ok(hi)
}

/// Supply allocation maximizing the network failure exponent:
/// theta* = q* / ||q*||_1.
pub fn network_theta_star(marginals: &[MarginalModel]) -> Result<Vec<f64>> {
    let q = q_star(marginals)?;
    let total: f64 = q.iter().sum();
    Ok(q.iter().map(|v| v / total).collect())
}

/// Level function y -> L*(q* y^{1/alpha}) built from a loss with a limit.
pub fn loss_level<'a>(
    lm: &'a LossModel,
    q: &'a [f64],
    alpha: &'a [f64],
) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |y: &[f64]| {
        let x: Vec<f64> = y
            .iter()
            .zip(q)
            .zip(alpha)
            .map(|((&yi, &qi), &ai)| qi * yi.powf(1.0 / ai))
            .collect();
        if lm.has_limit() {
            lm.limit_eval(&x)
        } else {
            lm.numeric_limit(&x)
        }
    }
}

/// Network failure level of the supply split theta:
/// y -> max_i q*_i y_i^{1/alpha_i} / theta_i.
pub fn network_level<'a>(
    theta: &'a [f64],
    q: &'a [f64],
    alpha: &'a [f64],
) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |y: &[f64]| {
        Ok(y.iter()
            .zip(q)
            .zip(alpha)
            .zip(theta)
            .map(|(((&yi, &qi), &ai), &ti)| {
                if ti <= 0.0 {
                    f64::INFINITY
                } else {
                    qi * yi.powf(1.0 / ai) / ti
                }
            })
            .fold(0.0f64, f64::max))
    }
}

/// Heavy-tail level using V*(x) = lim n^{-1} log L*(e^{n x}); for affine
/// losses this is ||x||_inf, so the constraint becomes max_i q*_i y_i^{1/alpha_i} >= 1.
pub fn sup_level<'a>(q: &'a [f64], alpha: &'a [f64]) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |y: &[f64]| {
        Ok(y.iter()
            .zip(q)
            .zip(alpha)
            .map(|((&yi, &qi), &ai)| qi * yi.powf(1.0 / ai))
            .fold(0.0f64, f64::max))
    }
}

/// Enumerate simplex grid directions summing to 1 with resolution 1/steps.
pub fn simplex_grid(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut counts = vec![0usize; dim];
    fn rec(slot: usize, remaining: usize, counts: &mut Vec<usize>, steps: usize, out: &mut Vec<Vec<f64>>) {
        if slot + 1 == counts.len() {
            counts[slot] = remaining;
            out.push(counts.iter().map(|&c| c as f64 / steps as f64).collect());
            return;
        }
        for c in 0..=remaining {
            counts[slot] = c;
            rec(slot + 1, remaining - c, counts, steps, out);
        }
    }
    rec(0, steps, &mut counts, steps, &mut out);
    out
}

/// Minimal scaling c with level(c * dir) >= 1 along a simplex direction,
/// exact by monotone bisection; None when the level set misses the ray.
fn ray_scaling<F: Fn(&[f64]) -> Result<f64>>(level: &F, dir: &[f64]) -> Result<Option<f64>> {
    let at = |c: f64| -> Result<f64> {
        let y: Vec<f64> = dir.iter().map(|&v| c * v).collect();
        level(&y)
    };
    let mut hi = 1.0;
    let mut expansions = 0;
    while at(hi)? < 1.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Ok(None);
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

fn direction_objective<F: Fn(&[f64]) -> Result<f64>>(
    rs: &RateSpec,
    level: &F,
    dir: &[f64],
) -> Result<f64> {
    match ray_scaling(level, dir)? {
        // I is positively homogeneous, so I(c dir) = c I(dir)
        Some(c) => Ok(c * rs.eval(dir)?),
        None => Ok(f64::INFINITY),
    }
}

/// Nelder-Mead over the simplex (first d-1 free coordinates); refines the
/// best grid direction.
fn refine_direction<F: Fn(&[f64]) -> Result<f64>>(
    rs: &RateSpec,
    level: &F,
    start: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let d = start.len();
    let embed = |free: &[f64]| -> Option<Vec<f64>> {
        let mut dir = Vec::with_capacity(d);
        let mut sum = 0.0;
        for &v in free {
            if v < 0.0 {
                return None;
            }
            dir.push(v);
            sum += v;
        }
        if sum > 1.0 {
            return None;
        }
        dir.push(1.0 - sum);
        Some(dir)
    };
    let objective = |free: &[f64]| -> Result<f64> {
        match embed(free) {
            Some(dir) => direction_objective(rs, level, &dir),
            None => Ok(f64::INFINITY),
        }
    };
    if d == 1 {
        return Ok((direction_objective(rs, level, start)?, start.to_vec()));
    }
    let n = d - 1;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let base: Vec<f64> = start[..n].to_vec();
    simplex.push((base.clone(), objective(&base)?));
    for i in 0..n {
        let mut v = base.clone();
        let step = 0.02;
        v[i] = (v[i] + step).min(1.0);
        simplex.push((v.clone(), objective(&v)?));
    }
    for _ in 0..200 {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-10 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n).map(|j| centroid[j] + (centroid[j] - worst.0[j])).collect();
        let fr = objective(&reflect)?;
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 2.0 * (centroid[j] - worst.0[j]))
                .collect();
            let fe = objective(&expand)?;
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 0.5 * (worst.0[j] - centroid[j]))
                .collect();
            let fc = objective(&contract)?;
            if fc < worst.1 {
                simplex[n] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = (0..n)
                        .map(|j| best[j] + 0.5 * (item.0[j] - best[j]))
                        .collect();
                    let f = objective(&v)?;
                    *item = (v, f);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let best = embed(&simplex[0].0).unwrap_or_else(|| start.to_vec());
    Ok((simplex[0].1, best))
}

/// I* = inf { I(y) : level(y) >= 1, y >= 0 } via simplex grid + refinement.
/// Returns (I*, minimizing direction scaled onto the constraint boundary);
/// +inf when the level set is unreachable in the probed region.
pub fn exponent_istar<F: Fn(&[f64]) -> Result<f64>>(
    rs: &RateSpec,
    level: &F,
) -> Result<(f64, Vec<f64>)> {
    let d = rs.dim();
    let steps = match d {
        1 => 1,
        2 | 3 => 64,
        4 | 5 => 16,
        _ => 8,
    };
    let mut best_val = f64::INFINITY;
    let mut best_dir: Option<Vec<f64>> = None;
    for dir in simplex_grid(d, steps) {
        let v = direction_objective(rs, level, &dir)?;
        if v < best_val {
            best_val = v;
            best_dir = Some(dir);
        }
    }
    let Some(dir) = best_dir else {
        return Ok((f64::INFINITY, vec![0.0; d]));
    };
    if !best_val.is_finite() {
        return Ok((f64::INFINITY, vec![0.0; d]));
    }
    let (refined, rdir) = refine_direction(rs, level, &dir)?;
    let (val, dir) = if refined < best_val { (refined, rdir) } else { (best_val, dir) };
    let c = ray_scaling(level, &dir)?.unwrap_or(f64::NAN);
    let y_star: Vec<f64> = dir.iter().map(|&v| c * v).collect();
    Ok((val, y_star))
}

/// Scan simplex directions, reporting (direction, boundary scaling c, c * I(dir))
/// for level-set plotting; c is NaN when the ray misses the level set.
pub fn direction_scan<F: Fn(&[f64]) -> Result<f64>>(
    rs: &RateSpec,
    level: &F,
    steps: usize,
) -> Result<Vec<(Vec<f64>, f64, f64)>> {
    let mut out = Vec::new();
    for dir in simplex_grid(rs.dim(), steps) {
        match ray_scaling(level, &dir)? {
            Some(c) => {
                let i = c * rs.eval(&dir)?;
                out.push((dir, c, i));
            }
            None => out.push((dir, f64::NAN, f64::INFINITY)),
        }
    }
    Ok(out)
}

/// Network failure exponent I*(theta) of a supply split.
pub fn network_exponent(
    rs: &RateSpec,
    marginals: &[MarginalModel],
    theta: &[f64],
) -> Result<f64> {
    let q = q_star(marginals)?;
    let alpha: Vec<f64> = marginals.iter().map(|m| m.alpha()).collect();
    let level = network_level(theta, &q, &alpha);
    Ok(exponent_istar(rs, &level)?.0)
}
