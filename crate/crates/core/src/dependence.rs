//! Joint models: marginals coupled by a copula, with the standardization
//! map to unit-exponential coordinates.
//!
//! Writing Y_i = Lambda_i(X_i) (the marginal cumulative hazard at X_i), each
//! Y_i is Exp(1) whatever the dependence structure, so the copula can be
//! specified and sampled entirely in standardized coordinates:
//!
//!   * Independence: Y_i i.i.d. Exp(1).
//!   * Gaussian: Y_i = -log SF(G_i) for G ~ N(0, R).
//!   * Clayton: gamma frailty V ~ Gamma(1/theta, 1), U_i = (1 + E_i/V)^(-1/theta).

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::marginals::MarginalModel;
use crate::rng::RandomStream;
use crate::special::{log_normal_sf, normal_sf_quantile_from_log};
use nalgebra::{DMatrix, DVector};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

/// Serializable copula description, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CopulaSpec {
    Independence,
    Gaussian { correlation: Vec<Vec<f64>> },
    Clayton { theta: f64 },
}

#[derive(Debug, Clone)]
pub struct GaussianCopula {
    correlation: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl GaussianCopula {
    pub fn new(correlation: DMatrix<f64>) -> Result<Self> {
        let d = correlation.nrows();
        for i in 0..d {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "correlation matrix diagonal entry {i} is {}",
                    correlation[(i, i)]
                )));
            }
            for j in 0..d {
                if (correlation[(i, j)] - correlation[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Config("correlation matrix is not symmetric".into()));
                }
            }
        }
        let chol = cholesky(&correlation)?;
        let log_det = 2.0 * (0..d).map(|i| chol[(i, i)].ln()).sum::<f64>();
        Ok(GaussianCopula {
            correlation,
            chol,
            log_det,
        })
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }
}

#[derive(Debug, Clone)]
pub enum Copula {
    Independence,
    Gaussian(GaussianCopula),
    Clayton { theta: f64 },
}

impl Copula {
    pub fn from_spec(spec: &CopulaSpec, dim: usize) -> Result<Self> {
        match spec {
            CopulaSpec::Independence => Ok(Copula::Independence),
            CopulaSpec::Gaussian { correlation } => {
                if correlation.len() != dim || correlation.iter().any(|row| row.len() != dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: correlation.len(),
                    });
                }
                let flat: Vec<f64> = correlation.iter().flatten().copied().collect();
                Ok(Copula::Gaussian(GaussianCopula::new(DMatrix::from_row_slice(
                    dim, dim, &flat,
                ))?))
            }
            CopulaSpec::Clayton { theta } => {
                if *theta <= 0.0 {
                    return Err(Error::Config(format!(
                        "Clayton theta must be positive, got {theta}"
                    )));
                }
                Ok(Copula::Clayton { theta: *theta })
            }
        }
    }

    /// Equicorrelated Gaussian copula helper.
    pub fn gaussian_equicorrelated(dim: usize, rho: f64) -> Result<Self> {
        let r = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho });
        Ok(Copula::Gaussian(GaussianCopula::new(r)?))
    }

    /// Gaussian copula with `rho` on the first off-diagonal band, zero elsewhere.
    pub fn gaussian_banded(dim: usize, rho: f64) -> Result<Self> {
        let r = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                1.0
            } else if i.abs_diff(j) == 1 {
                rho
            } else {
                0.0
            }
        });
        Ok(Copula::Gaussian(GaussianCopula::new(r)?))
    }
}

/// Marginals plus copula; the sampling and density interface of the model X.
#[derive(Debug, Clone)]
pub struct JointModel {
    marginals: Vec<MarginalModel>,
    copula: Copula,
}

impl JointModel {
    pub fn new(marginals: Vec<MarginalModel>, copula: Copula) -> Result<Self> {
        let d = marginals.len();
        if d == 0 {
            return Err(Error::Config("joint model needs at least one marginal".into()));
        }
        if let Copula::Gaussian(g) = &copula {
            if g.correlation.nrows() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.correlation.nrows(),
                });
            }
        }
        Ok(JointModel { marginals, copula })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[MarginalModel] {
        &self.marginals
    }

    pub fn copula(&self) -> &Copula {
        &self.copula
    }

    /// Componentwise support origin (see [`MarginalModel::origin`]); the
    /// zero vector unless some marginal's support starts above 0.
    pub fn support_origin(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.origin()).collect()
    }

    /// Standardize: y_i = Lambda_i(x_i), each Exp(1) under the model.
    pub fn to_standard(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        x.iter()
            .zip(&self.marginals)
            .map(|(&xi, m)| m.hazard(xi))
            .collect()
    }

    /// Inverse standardization: x_i = q_i(y_i).
    pub fn from_standard(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        y.iter()
            .zip(&self.marginals)
            .map(|(&yi, m)| m.hazard_inverse(yi))
            .collect()
    }

    /// Draw Y in standardized coordinates.
    pub fn sample_standard(&self, stream: &mut RandomStream) -> Vec<f64> {
        let d = self.dim();
        match &self.copula {
            Copula::Independence => (0..d).map(|_| stream.exp1()).collect(),
            Copula::Gaussian(g) => {
                let z = DVector::from_fn(d, |_, _| stream.std_normal());
                let corr = &g.chol * z;
                corr.iter().map(|&gi| -log_normal_sf(gi)).collect()
            }
            Copula::Clayton { theta } => {
                let frailty = rand_distr::Gamma::new(1.0 / theta, 1.0)
                    .expect("theta validated at construction")
                    .sample(stream)
                    .max(1e-300);
                (0..d)
                    .map(|_| {
                        let e = stream.exp1();
                        // U = (1 + E/V)^(-1/theta); Y = -log(1 - U)
                        let ln_u = -(e / frailty).ln_1p() / theta;
                        -(-ln_u.exp_m1()).ln()
                    })
                    .collect()
            }
        }
    }

    /// Draw X by mapping a standardized draw through the hazard inverses.
    pub fn sample(&self, stream: &mut RandomStream) -> Vec<f64> {
        let y = self.sample_standard(stream);
        self.from_standard(&y)
            .expect("standardized draws are nonnegative")
    }

    /// Log copula density evaluated at standardized coordinates y (> 0).
    fn log_copula_density(&self, y: &[f64]) -> Result<f64> {
        match &self.copula {
            Copula::Independence => Ok(0.0),
            Copula::Gaussian(gc) => {
                let d = y.len();
                let mut g = DVector::zeros(d);
                for i in 0..d {
                    if y[i] <= 0.0 {
                        return Err(Error::Domain(format!(
                            "standardized coordinate must be positive, got {}",
                            y[i]
                        )));
                    }
                    g[i] = normal_sf_quantile_from_log(-y[i])?;
                }
                // log c = -1/2 log det R - 1/2 g^T (R^{-1} - I) g
                let w = gc
                    .chol
                    .clone()
                    .solve_lower_triangular(&g)
                    .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
                Ok(-0.5 * gc.log_det - 0.5 * (w.dot(&w) - g.dot(&g)))
            }
            Copula::Clayton { theta } => {
                let d = y.len() as f64;
                let mut sum_ln_u = 0.0;
                let mut s = 1.0; // 1 + sum (u_i^{-theta} - 1)
                for &yi in y {
                    if yi <= 0.0 {
                        return Err(Error::Domain(format!(
                            "standardized coordinate must be positive, got {yi}"
                        )));
                    }
                    let ln_u = (-(-yi).exp()).ln_1p();
                    sum_ln_u += ln_u;
                    s += (-theta * ln_u).exp_m1();
                }
                let mut log_c = 0.0;
                let mut k = 1.0;
                while k < d {
                    log_c += (1.0 + k * theta).ln();
                    k += 1.0;
                }
                log_c += -(1.0 + theta) * sum_ln_u - (1.0 / theta + d) * s.ln();
                Ok(log_c)
            }
        }
    }

    /// Log joint density of X at x.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let y = self.to_standard(x)?;
        let mut acc = self.log_copula_density(&y)?;
        for (&xi, m) in x.iter().zip(&self.marginals) {
            acc += m.log_density(xi)?;
        }
        Ok(acc)
    }

    /// Log density of the standardized vector Y at y (Exp(1) marginals).
    pub fn log_density_standard(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        Ok(self.log_copula_density(y)? - y.iter().sum::<f64>())
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            })
        } else {
            Ok(())
        }
    }
}
