//! Univariate marginal models exposing the cumulative hazard, its inverse,
//! density, hazard rate and tail index.
//!
//! The cumulative hazard is Lambda(x) = -log P(X > x). Light-tailed kinds
//! have Lambda regularly varying with index `alpha`; for the heavy-tailed
//! kinds (lognormal, Pareto) `alpha` is instead the index of the hazard of
//! log X. All tail computations run in log space so survival probabilities
//! down to (and far past) 1e-300 never underflow.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::special;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalKind {
    Exponential {
        rate: f64,
    },
    Weibull {
        shape: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Pareto {
        index: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_scale() -> f64 {
    1.0
}

/// A marginal distribution together with its tail metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalModel {
    kind: MarginalKind,
    alpha: f64,
    heavy_tailed: bool,
    /// Start of the region where the hazard is monotone (Normal uses 0).
    x0: f64,
    /// Lower end of the queryable support. For the Normal marginal this is
    /// the 1e-12 quantile: the IS transformation only magnifies coordinates
    /// and target sets lie in the positive orthant, so queries below it are
    /// rejected as a domain error.
    support_start: f64,
}

impl MarginalModel {
    pub fn new(kind: MarginalKind) -> Result<Self> {
        use MarginalKind::*;
        let check_pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let (alpha, heavy, x0, support_start) = match &kind {
            Exponential { rate } => {
                check_pos("rate", *rate)?;
                (1.0, false, 0.0, 0.0)
            }
            Weibull { shape, scale } => {
                check_pos("shape", *shape)?;
                check_pos("scale", *scale)?;
                (*shape, false, 0.0, 0.0)
            }
            Normal { sd, mean } => {
                check_pos("sd", *sd)?;
                let clamp = mean + sd * special::normal_quantile(1e-12)?;
                (2.0, false, 0.0, clamp)
            }
            Gamma { shape, rate } => {
                check_pos("shape", *shape)?;
                check_pos("rate", *rate)?;
                (1.0, false, 0.0, 0.0)
            }
            Lognormal { sigma, .. } => {
                check_pos("sigma", *sigma)?;
                (2.0, true, 0.0, 0.0)
            }
            Pareto { index, scale } => {
                check_pos("index", *index)?;
                check_pos("scale", *scale)?;
                (1.0, true, *scale, *scale)
            }
        };
        Ok(MarginalModel {
            kind,
            alpha,
            heavy_tailed: heavy,
            x0,
            support_start,
        })
    }

    pub fn kind(&self) -> &MarginalKind {
        &self.kind
    }

    /// Tail index: regular-variation index of Lambda for light-tailed kinds,
    /// of the log-scale hazard for heavy-tailed kinds.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn heavy_tailed(&self) -> bool {
        self.heavy_tailed
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn support_start(&self) -> f64 {
        self.support_start
    }

    /// Left endpoint of the support when it is positive, else 0. The IS
    /// transformation magnifies displacements from this origin so that the
    /// support maps onto itself; only the Pareto marginal has a nonzero one.
    pub fn origin(&self) -> f64 {
        match &self.kind {
            MarginalKind::Pareto { scale, .. } => *scale,
            _ => 0.0,
        }
    }

    fn check_support(&self, x: f64) -> Result<()> {
        if x < self.support_start {
            Err(Error::Domain(format!(
                "x = {x} below support start {} of {:?}",
                self.support_start, self.kind
            )))
        } else {
            Ok(())
        }
    }

    /// Cumulative hazard Lambda(x) = -log P(X > x).
    pub fn hazard(&self, x: f64) -> Result<f64> {
        use MarginalKind::*;
        self.check_support(x)?;
        Ok(match &self.kind {
            Exponential { rate } => rate * x,
            Weibull { shape, scale } => (x / scale).powf(*shape),
            Normal { mean, sd } => -special::log_normal_sf((x - mean) / sd),
            Gamma { shape, rate } => -special::ln_gamma_q(*shape, rate * x),
            Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -special::log_normal_sf((x.ln() - mu) / sigma)
                }
            }
            Pareto { index, scale } => index * (x / scale).ln(),
        })
    }

    /// Inverse of the cumulative hazard, q(y) with hazard(q(y)) = y.
    pub fn hazard_inverse(&self, y: f64) -> Result<f64> {
        use MarginalKind::*;
        if y < 0.0 {
            return Err(Error::Domain(format!("hazard inverse requires y >= 0, got {y}")));
        }
        Ok(match &self.kind {
            Exponential { rate } => y / rate,
            Weibull { shape, scale } => scale * y.powf(1.0 / shape),
            Normal { mean, sd } => {
                if y <= 0.0 {
                    self.support_start
                } else {
                    mean + sd * special::normal_sf_quantile_from_log(-y)?
                }
            }
            Gamma { shape, rate } => gamma_hazard_inverse(*shape, y)? / rate,
            Lognormal { mu, sigma } => {
                if y <= 0.0 {
                    0.0
                } else {
                    (mu + sigma * special::normal_sf_quantile_from_log(-y)?).exp()
                }
            }
            Pareto { index, scale } => scale * (y / index).exp(),
        })
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        use MarginalKind::*;
        self.check_support(x)?;
        Ok(match &self.kind {
            Exponential { rate } => rate.ln() - rate * x,
            Weibull { shape, scale } => {
                if x <= 0.0 {
                    return Err(Error::Domain("Weibull density at x <= 0".into()));
                }
                (shape / scale).ln() + (shape - 1.0) * (x / scale).ln() - (x / scale).powf(*shape)
            }
            Normal { mean, sd } => special::normal_log_pdf((x - mean) / sd) - sd.ln(),
            Gamma { shape, rate } => {
                if x <= 0.0 {
                    return Err(Error::Domain("Gamma density at x <= 0".into()));
                }
                shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - special::ln_gamma(*shape)
            }
            Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    return Err(Error::Domain("Lognormal density at x <= 0".into()));
                }
                special::normal_log_pdf((x.ln() - mu) / sigma) - sigma.ln() - x.ln()
            }
            Pareto { index, scale } => {
                index.ln() + index * scale.ln() - (index + 1.0) * x.ln()
            }
        })
    }

    /// Hazard rate lambda(x) = f(x) / P(X > x).
    pub fn hazard_rate(&self, x: f64) -> Result<f64> {
        Ok((self.log_density(x)? + self.hazard(x)?).exp())
    }

    /// Log-scale hazard -log P(log X > x), i.e. Lambda evaluated at e^x,
    /// computed without forming e^x. Meaningful for the heavy-tailed kinds.
    pub fn hazard_log_scale(&self, x: f64) -> Result<f64> {
        use MarginalKind::*;
        match &self.kind {
            Lognormal { mu, sigma } => Ok(-special::log_normal_sf((x - mu) / sigma)),
            Pareto { index, scale } => {
                if x < scale.ln() {
                    return Err(Error::Domain(format!(
                        "log-scale hazard below log(scale) for Pareto: {x}"
                    )));
                }
                Ok(index * (x - scale.ln()))
            }
            _ => self.hazard(x.exp()),
        }
    }

    /// Sample by inverting the hazard at a standard exponential variate,
    /// so Lambda(sample) is exactly Exp(1).
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        self.hazard_inverse(stream.exp1())
            .expect("exp1 draws are nonnegative")
    }
}

/// Solve -ln Q(a, t) = y for t (unit-rate Gamma hazard inverse):
/// bracketed bisection followed by Newton polish.
fn gamma_hazard_inverse(a: f64, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    let hazard = |t: f64| -special::ln_gamma_q(a, t);
    let mut lo = 0.0;
    let mut hi = (y + a).max(1.0);
    for _ in 0..200 {
        if hazard(hi) >= y {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if hazard(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    // Newton: d/dt [-ln Q(a,t)] = pdf/sf
    for _ in 0..20 {
        let h = hazard(t);
        let log_pdf = (a - 1.0) * t.ln() - t - special::ln_gamma(a);
        let rate = (log_pdf + h).exp();
        if !rate.is_finite() || rate <= 0.0 {
            break;
        }
        let step = (h - y) / rate;
        let next = t - step;
        if next <= 0.0 {
            break;
        }
        t = next;
        if step.abs() < 1e-13 * t.max(1.0) {
            break;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::stats::{ks_pvalue, ks_statistic};

    fn exp1() -> MarginalModel {
        MarginalModel::new(MarginalKind::Exponential { rate: 1.0 }).unwrap()
    }

    fn weibull(shape: f64) -> MarginalModel {
        MarginalModel::new(MarginalKind::Weibull { shape, scale: 1.0 }).unwrap()
    }

    fn std_normal() -> MarginalModel {
        MarginalModel::new(MarginalKind::Normal { mean: 0.0, sd: 1.0 }).unwrap()
    }

    #[test]
    fn exponential_hazard_is_identity() {
        assert_relative_eq!(exp1().hazard(3.0).unwrap(), 3.0);
        assert_relative_eq!(exp1().hazard_inverse(5.0).unwrap(), 5.0);
    }

    #[test]
    fn weibull_hazard_power_form() {
        let m = weibull(0.8);
        assert_relative_eq!(m.hazard(2.0).unwrap(), 2f64.powf(0.8), epsilon = 1e-12);
        assert_relative_eq!(m.hazard_inverse(2f64.powf(0.8)).unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn normal_hazard_asymptotically_half_x_squared() {
        let m = std_normal();
        let x = 30.0;
        let ratio = m.hazard(x).unwrap() / (x * x);
        assert!((ratio - 0.5).abs() / 0.5 < 0.02, "ratio = {ratio}");
    }

    #[test]
    fn normal_round_trip() {
        let m = std_normal();
        let y = m.hazard(2.5).unwrap();
        assert_relative_eq!(m.hazard_inverse(y).unwrap(), 2.5, epsilon = 1e-8);
    }

    #[test]
    fn normal_below_clamp_is_domain_error() {
        let m = std_normal();
        assert!(m.hazard(-8.0).is_err());
    }

    #[test]
    fn hazard_rates() {
        assert_relative_eq!(exp1().hazard_rate(3.7).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(weibull(2.0).hazard_rate(3.0).unwrap(), 6.0, epsilon = 1e-9);
        let pareto = MarginalModel::new(MarginalKind::Pareto { index: 2.0, scale: 1.0 }).unwrap();
        assert_relative_eq!(pareto.hazard_rate(4.0).unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn negative_hazard_inverse_is_domain_error() {
        assert!(exp1().hazard_inverse(-1.0).is_err());
    }

    fn all_kinds() -> Vec<MarginalModel> {
        vec![
            exp1(),
            weibull(0.8),
            weibull(1.2),
            std_normal(),
            MarginalModel::new(MarginalKind::Gamma { shape: 2.5, rate: 1.5 }).unwrap(),
            MarginalModel::new(MarginalKind::Lognormal { mu: 0.0, sigma: 1.0 }).unwrap(),
            MarginalModel::new(MarginalKind::Pareto { index: 2.0, scale: 1.0 }).unwrap(),
        ]
    }

    #[test]
    fn round_trip_up_to_700() {
        for m in all_kinds() {
            let start = m.hazard(m.support_start().max(1e-6)).unwrap_or(0.0);
            let mut y = start + 1e-3;
            while y <= 700.0 {
                let x = m.hazard_inverse(y).unwrap();
                let back = m.hazard(x).unwrap();
                assert!(
                    (back - y).abs() <= 1e-8 * y.max(1.0),
                    "{:?}: y = {y}, back = {back}",
                    m.kind()
                );
                y *= 3.1;
            }
        }
    }

    #[test]
    fn tail_index_ratio_test() {
        // hazard(2x)/hazard(x) -> 2^alpha (regular variation), within 5%.
        for m in all_kinds() {
            let expect = 2f64.powf(m.alpha());
            for &x in &[1e3, 1e4] {
                let ratio = if m.heavy_tailed() {
                    m.hazard_log_scale(2.0 * x).unwrap() / m.hazard_log_scale(x).unwrap()
                } else {
                    m.hazard(2.0 * x).unwrap() / m.hazard(x).unwrap()
                };
                assert!(
                    (ratio - expect).abs() / expect < 0.05,
                    "{:?} at x = {x}: ratio = {ratio}, expect {expect}",
                    m.kind()
                );
            }
        }
    }

    #[test]
    fn sample_ks_against_exp1() {
        let m = exp1();
        let mut s = RandomStream::new(11, 0);
        let draws: Vec<f64> = (0..10_000).map(|_| m.sample(&mut s)).collect();
        let d = ks_statistic(&draws, |x| 1.0 - (-x).exp());
        assert!(ks_pvalue(d, draws.len()) > 0.01);
    }

    #[test]
    fn weibull_standardized_samples_are_exp1() {
        let m = weibull(0.8);
        let mut s = RandomStream::new(12, 0);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| m.hazard(m.sample(&mut s)).unwrap())
            .collect();
        let d = ks_statistic(&draws, |x| 1.0 - (-x).exp());
        assert!(ks_pvalue(d, draws.len()) > 0.01);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = weibull(1.2);
        let a: Vec<f64> = {
            let mut s = RandomStream::new(5, 3);
            (0..100).map(|_| m.sample(&mut s)).collect()
        };
        let b: Vec<f64> = {
            let mut s = RandomStream::new(5, 3);
            (0..100).map(|_| m.sample(&mut s)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn serde_round_trip() {
        let m = MarginalKind::Weibull { shape: 0.8, scale: 1.0 };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("weibull"));
        let back: MarginalKind = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
