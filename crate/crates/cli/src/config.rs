//! JSON config schemas for the experiment commands. Unknown keys are
//! rejected so typos surface as schema errors rather than silent defaults.

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;
use tailsampler_core::dependence::{Copula, CopulaSpec, JointModel};
use tailsampler_core::losses::{CreditStructure, LossModel, OuterLoss, ReluNetwork};
use tailsampler_core::marginals::{MarginalKind, MarginalModel};
use tailsampler_core::pcr::{DefaultModel, Portfolio};
use tailsampler_core::rate::{RateKind, RateSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub marginals: Vec<MarginalKind>,
    pub copula: CopulaSpec,
}

impl ModelSpec {
    pub fn build(&self) -> Result<JointModel> {
        let marginals: Vec<MarginalModel> = self
            .marginals
            .iter()
            .map(|k| MarginalModel::new(k.clone()))
            .collect::<tailsampler_core::Result<_>>()
            .context("model.marginals")?;
        let copula =
            Copula::from_spec(&self.copula, marginals.len()).context("model.copula")?;
        JointModel::new(marginals, copula).context("model").map_err(Into::into)
    }

    pub fn marginal_models(&self) -> Result<Vec<MarginalModel>> {
        Ok(self
            .marginals
            .iter()
            .map(|k| MarginalModel::new(k.clone()))
            .collect::<tailsampler_core::Result<_>>()?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OuterSpec {
    Identity,
    Excess { a: f64 },
    Square { a: f64 },
}

impl OuterSpec {
    fn build(&self) -> OuterLoss {
        match self {
            OuterSpec::Identity => OuterLoss::Identity,
            OuterSpec::Excess { a } => OuterLoss::Excess { a: *a },
            OuterSpec::Square { a } => OuterLoss::Square { a: *a },
        }
    }
}

/// One network layer: weights inline (row-major rows) or loaded from a flat
/// whitespace/comma-separated file with declared shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default)]
    pub bias: Vec<f64>,
}

impl LayerSpec {
    fn build(&self, base_dir: &Path) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let matrix = match (&self.weights, &self.weights_file) {
            (Some(rows), None) => {
                let r = rows.len();
                let c = rows.first().map(|v| v.len()).unwrap_or(0);
                if rows.iter().any(|v| v.len() != c) {
                    bail!("layer weights rows have inconsistent lengths");
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                DMatrix::from_row_slice(r, c, &flat)
            }
            (None, Some(file)) => {
                let (r, c) = match (self.rows, self.cols) {
                    (Some(r), Some(c)) => (r, c),
                    _ => bail!("weights_file requires rows and cols"),
                };
                let text = std::fs::read_to_string(base_dir.join(file))
                    .with_context(|| format!("reading weights file {file}"))?;
                let values: Vec<f64> = text
                    .split(|ch: char| ch.is_whitespace() || ch == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().with_context(|| format!("bad weight '{t}'")))
                    .collect::<Result<_>>()?;
                if values.len() != r * c {
                    bail!("weights file {file} has {} values, expected {}", values.len(), r * c);
                }
                DMatrix::from_row_slice(r, c, &values)
            }
            _ => bail!("layer needs exactly one of weights / weights_file"),
        };
        let bias = if self.bias.is_empty() {
            vec![0.0; matrix.nrows()]
        } else {
            self.bias.clone()
        };
        Ok((matrix, bias))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    LinearPortfolio {
        weights: Vec<f64>,
    },
    PiecewiseAffine {
        pieces: Vec<AffinePiece>,
    },
    PiecewiseQuadratic {
        pieces: Vec<QuadraticPiece>,
    },
    ReluNetwork {
        layers: Vec<LayerSpec>,
        readout: Vec<f64>,
        #[serde(default)]
        theta0: f64,
        outer: OuterSpec,
    },
    DistributionNetwork {
        a: Vec<Vec<f64>>,
        supply: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub theta: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticPiece {
    pub q: Vec<Vec<f64>>,
    #[serde(default)]
    pub c: Vec<f64>,
}

impl LossSpec {
    pub fn build(&self, base_dir: &Path) -> Result<LossModel> {
        Ok(match self {
            LossSpec::LinearPortfolio { weights } => {
                LossModel::linear_portfolio(weights.clone())?
            }
            LossSpec::PiecewiseAffine { pieces } => LossModel::piecewise_affine(
                pieces.iter().map(|p| (p.theta.clone(), p.offset)).collect(),
            )?,
            LossSpec::PiecewiseQuadratic { pieces } => {
                let built: Vec<(DMatrix<f64>, Vec<f64>)> = pieces
                    .iter()
                    .map(|p| {
                        let d = p.q.len();
                        let flat: Vec<f64> = p.q.iter().flatten().copied().collect();
                        let c = if p.c.is_empty() { vec![0.0; d] } else { p.c.clone() };
                        (DMatrix::from_row_slice(d, d, &flat), c)
                    })
                    .collect();
                LossModel::piecewise_quadratic(built)?
            }
            LossSpec::ReluNetwork { layers, readout, theta0, outer } => {
                let built: Vec<(DMatrix<f64>, Vec<f64>)> = layers
                    .iter()
                    .map(|l| l.build(base_dir))
                    .collect::<Result<_>>()?;
                LossModel::relu_network(ReluNetwork::new(
                    built,
                    readout.clone(),
                    *theta0,
                    outer.build(),
                )?)
            }
            LossSpec::DistributionNetwork { a, supply } => {
                let d = a.len();
                let flat: Vec<f64> = a.iter().flatten().copied().collect();
                LossModel::distribution_network(
                    DMatrix::from_row_slice(d, d, &flat),
                    supply.clone(),
                )?
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LPolicy {
    Fixed { value: f64 },
    Crossval { grid: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub model: ModelSpec,
    pub loss: LossSpec,
    /// Target levels u to sweep.
    pub sweep: Vec<f64>,
    pub n_samples: u64,
    pub l_policy: LPolicy,
    pub rho: f64,
    pub seed: u64,
    /// Optional naive-baseline sample count (co-run per sweep point).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_samples: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Complete,
    Cyclic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub topology: Topology,
    pub d: usize,
    /// Weibull shape per node (defaults per the experiment convention:
    /// first floor(d/2) nodes 0.8, rest 1.2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapes: Option<Vec<f64>>,
    /// Gaussian-copula off-diagonal correlation.
    pub copula_offdiag: f64,
    /// Total-supply levels u to sweep.
    pub sweep: Vec<f64>,
    /// Relative supply split theta (defaults to uniform).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Failure threshold k.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub n_samples: u64,
    /// Cross-validation grid of offsets c with l = c + ln u; or fixed l.
    pub l_policy: LPolicy,
    pub seed: u64,
}

fn default_threshold() -> f64 {
    1.0
}

impl NetworkConfig {
    pub fn shapes(&self) -> Vec<f64> {
        self.shapes.clone().unwrap_or_else(|| {
            (0..self.d)
                .map(|i| if i < self.d / 2 { 0.8 } else { 1.2 })
                .collect()
        })
    }

    pub fn theta(&self) -> Vec<f64> {
        self.theta
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.d as f64; self.d])
    }

    pub fn marginal_models(&self) -> Result<Vec<MarginalModel>> {
        Ok(self
            .shapes()
            .iter()
            .map(|&shape| MarginalModel::new(MarginalKind::Weibull { shape, scale: 1.0 }))
            .collect::<tailsampler_core::Result<_>>()?)
    }

    pub fn joint_model(&self) -> Result<JointModel> {
        let copula = if self.copula_offdiag == 0.0 {
            Copula::Independence
        } else {
            Copula::gaussian_equicorrelated(self.d, self.copula_offdiag)?
        };
        Ok(JointModel::new(self.marginal_models()?, copula)?)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self.topology {
            Topology::Complete => tailsampler_core::lp::complete_topology(self.d),
            Topology::Cyclic => tailsampler_core::lp::cyclic_topology(self.d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultModelSpec {
    Logit,
    Intensity,
}

impl DefaultModelSpec {
    pub fn build(self) -> DefaultModel {
        match self {
            DefaultModelSpec::Logit => DefaultModel::Logit,
            DefaultModelSpec::Intensity => DefaultModel::Intensity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcrConfig {
    /// Factor dimension.
    pub d: usize,
    /// Loan count.
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapes: Option<Vec<f64>>,
    /// Gaussian-copula correlation on the first off-diagonal band.
    pub copula_band: f64,
    pub default_model: DefaultModelSpec,
    /// Loss fraction threshold.
    pub q: f64,
    /// Rarity levels gamma to sweep (each is also the factor-transform level).
    pub gamma_sweep: Vec<f64>,
    /// Transform hyperparameter l.
    pub l: f64,
    pub n_samples: u64,
    pub seed: u64,
    /// Per-loan exposures (defaults to all ones).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposures: Option<Vec<f64>>,
    /// Score network: single hidden layer W(x) = 1^T (A x)^+ with
    /// A_ij = 1/d unless a loss is given explicitly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<LossSpec>,
}

impl PcrConfig {
    pub fn shapes(&self) -> Vec<f64> {
        self.shapes.clone().unwrap_or_else(|| {
            (0..self.d)
                .map(|i| if i < self.d / 2 { 0.8 } else { 1.2 })
                .collect()
        })
    }

    pub fn joint_model(&self) -> Result<JointModel> {
        let marginals: Vec<MarginalModel> = self
            .shapes()
            .iter()
            .map(|&shape| MarginalModel::new(MarginalKind::Weibull { shape, scale: 1.0 }))
            .collect::<tailsampler_core::Result<_>>()?;
        let copula = if self.copula_band == 0.0 {
            Copula::Independence
        } else {
            Copula::gaussian_banded(self.d, self.copula_band)?
        };
        Ok(JointModel::new(marginals, copula)?)
    }

    pub fn score_model(&self, base_dir: &Path) -> Result<LossModel> {
        match &self.score {
            Some(spec) => spec.build(base_dir),
            None => {
                let a = DMatrix::from_element(self.d, self.d, 1.0 / self.d as f64);
                Ok(LossModel::relu_network(ReluNetwork::new(
                    vec![(a, vec![0.0; self.d])],
                    vec![1.0; self.d],
                    0.0,
                    OuterLoss::Identity,
                )?))
            }
        }
    }

    pub fn portfolio(&self, base_dir: &Path, gamma: f64) -> Result<Portfolio> {
        let exposures = self.exposures.clone().unwrap_or_else(|| vec![1.0; self.m]);
        if exposures.len() != self.m {
            bail!("exposures length {} does not match m = {}", exposures.len(), self.m);
        }
        Ok(Portfolio::homogeneous(
            self.score_model(base_dir)?,
            exposures,
            self.default_model.build(),
            gamma,
            self.q,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfsimConfig {
    pub model: ModelSpec,
    pub loss: LossSpec,
    /// Conditioning level of the zero-variance cloud.
    pub l0: f64,
    /// Target level of the IS cloud.
    pub u: f64,
    pub rho: f64,
    pub n_points: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateKindSpec {
    GaussianCopula { correlation: Vec<Vec<f64>> },
    Independence,
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    StudentT { dof: f64 },
}

impl RateKindSpec {
    pub fn build(&self, dim: usize) -> Result<RateSpec> {
        let kind = match self {
            RateKindSpec::Independence => RateKind::Independence,
            RateKindSpec::Clayton { theta } => RateKind::Clayton { theta: *theta },
            RateKindSpec::Gumbel { theta } => RateKind::Gumbel { theta: *theta },
            RateKindSpec::StudentT { dof } => RateKind::StudentT { dof: *dof },
            RateKindSpec::GaussianCopula { correlation } => {
                let d = correlation.len();
                let flat: Vec<f64> = correlation.iter().flatten().copied().collect();
                RateKind::GaussianCopula(DMatrix::from_row_slice(d, d, &flat))
            }
        };
        Ok(RateSpec::new(kind, dim)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub marginals: Vec<MarginalKind>,
    pub rate_kind: RateKindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    /// Report the optimal supply split theta* and its exponent.
    #[serde(default)]
    pub network_design: bool,
    /// Levels x at which to tabulate Lambda_min.
    #[serde(default)]
    pub lambda_min_levels: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalConfig {
    pub model: ModelSpec,
    pub loss: LossSpec,
    pub u: f64,
    pub grid: Vec<f64>,
    pub rho: f64,
    pub n_samples: u64,
    pub seed: u64,
}

/// A CreditRiskStructural loss assembled from a PCR-style portfolio config;
/// used by the rate command when credit exponents are requested.
pub fn credit_loss_from(
    heads: Vec<LossModel>,
    exposures: Vec<f64>,
    types: Vec<usize>,
    q: f64,
    input_dim: usize,
) -> Result<LossModel> {
    let m = exposures.len();
    let cs = CreditStructure::new(heads, exposures, types, vec![1.0; m], q)?;
    Ok(LossModel::credit_structural(cs, input_dim))
}

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let parsed: T = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    Ok((parsed, text))
}
