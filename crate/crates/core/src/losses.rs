//! Loss functions L with asymptotically homogeneous growth: each kind
//! exposes eval, the homogeneity order rho (L(nx)/n^rho converges), and the
//! homogeneous limit L* where it has a closed form.

use crate::error::{Error, Result};
use crate::lp;
use nalgebra::{DMatrix, DVector};

/// Scalar outer loss applied to the network readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterLoss {
    Identity,
    /// (v - a)^+
    Excess { a: f64 },
    /// (v - a)^2
    Square { a: f64 },
}

impl OuterLoss {
    fn eval(&self, v: f64) -> f64 {
        match self {
            OuterLoss::Identity => v,
            OuterLoss::Excess { a } => (v - a).max(0.0),
            OuterLoss::Square { a } => (v - a) * (v - a),
        }
    }

    /// Homogeneous limit of the outer loss.
    fn limit(&self, v: f64) -> f64 {
        match self {
            OuterLoss::Identity => v,
            OuterLoss::Excess { .. } => v.max(0.0),
            OuterLoss::Square { .. } => v * v,
        }
    }

    fn rho(&self) -> f64 {
        match self {
            OuterLoss::Identity | OuterLoss::Excess { .. } => 1.0,
            OuterLoss::Square { .. } => 2.0,
        }
    }
}

/// Feedforward network with ReLU hidden layers and an affine readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<(DMatrix<f64>, DVector<f64>)>,
    readout: DVector<f64>,
    theta0: f64,
    outer: OuterLoss,
}

impl ReluNetwork {
    pub fn new(
        layers: Vec<(DMatrix<f64>, Vec<f64>)>,
        readout: Vec<f64>,
        theta0: f64,
        outer: OuterLoss,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut width = layers[0].0.ncols();
        let mut built = Vec::with_capacity(layers.len());
        for (a, b) in layers {
            if a.ncols() != width {
                return Err(Error::DimensionMismatch { expected: width, got: a.ncols() });
            }
            if b.len() != a.nrows() {
                return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
            }
            width = a.nrows();
            built.push((a, DVector::from_vec(b)));
        }
        if readout.len() != width {
            return Err(Error::DimensionMismatch { expected: width, got: readout.len() });
        }
        Ok(ReluNetwork {
            layers: built,
            readout: DVector::from_vec(readout),
            theta0,
            outer,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.ncols()
    }

    fn features(&self, x: &[f64], drop_offsets: bool) -> DVector<f64> {
        let mut h = DVector::from_column_slice(x);
        for (a, b) in &self.layers {
            h = a * h;
            if !drop_offsets {
                h -= b;
            }
            h.apply(|v| *v = v.max(0.0));
        }
        h
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let phi = self.features(x, false);
        self.outer.eval(self.readout.dot(&phi) + self.theta0)
    }

    fn limit(&self, x: &[f64]) -> f64 {
        let phi = self.features(x, true);
        self.outer.limit(self.readout.dot(&phi))
    }
}

/// Max-min structural credit loss over a precomputed subset collection:
/// the per-type head values are aggregated as max over qualifying type
/// subsets of the within-subset minimum.
#[derive(Debug, Clone)]
pub struct CreditStructure {
    heads: Vec<LossModel>,
    /// Per-loan multiplier standing in for loan covariates.
    cov_scale: Vec<f64>,
    types: Vec<usize>,
    exposures: Vec<f64>,
    q: f64,
    subsets: Vec<u32>,
}

impl CreditStructure {
    pub fn new(
        heads: Vec<LossModel>,
        exposures: Vec<f64>,
        types: Vec<usize>,
        cov_scale: Vec<f64>,
        q: f64,
    ) -> Result<Self> {
        let j = heads.len();
        if j == 0 || j > 12 {
            return Err(Error::Config(format!(
                "number of types must be in 1..=12 (2^J subset enumeration), got {j}"
            )));
        }
        let m = exposures.len();
        if types.len() != m || cov_scale.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: types.len().min(cov_scale.len()) });
        }
        if types.iter().any(|&t| t >= j) {
            return Err(Error::Config("loan type index out of range".into()));
        }
        if exposures.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("exposures must be positive".into()));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!("q must be in (0,1), got {q}")));
        }
        let rho = heads[0].rho();
        if heads.iter().any(|h| (h.rho() - rho).abs() > 1e-12) {
            return Err(Error::Config("all type heads must share the same rho".into()));
        }
        let total: f64 = exposures.iter().sum();
        let mut per_type = vec![0.0f64; j];
        for (&e, &t) in exposures.iter().zip(&types) {
            per_type[t] += e;
        }
        // Qualifying subsets: joint default of the types in the subset
        // already pushes the loss fraction past q.
        let mut subsets = Vec::new();
        for mask in 1u32..(1 << j) {
            let exp: f64 = (0..j)
                .filter(|&k| mask & (1 << k) != 0)
                .map(|k| per_type[k])
                .sum();
            if exp >= q * total {
                subsets.push(mask);
            }
        }
        Ok(CreditStructure {
            heads,
            cov_scale,
            types,
            exposures,
            q,
            subsets,
        })
    }

    pub fn subsets(&self) -> &[u32] {
        &self.subsets
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    fn type_minima<F: Fn(&LossModel, &[f64]) -> Result<f64>>(
        &self,
        x: &[f64],
        head_eval: F,
    ) -> Result<Vec<f64>> {
        let j = self.heads.len();
        let mut minima = vec![f64::INFINITY; j];
        for (i, (&t, &c)) in self.types.iter().zip(&self.cov_scale).enumerate() {
            let _ = i;
            let v = c * head_eval(&self.heads[t], x)?;
            if v < minima[t] {
                minima[t] = v;
            }
        }
        Ok(minima)
    }

    fn aggregate(&self, minima: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for &mask in &self.subsets {
            let mut lo = f64::INFINITY;
            for (k, &m) in minima.iter().enumerate() {
                if mask & (1 << k) != 0 && m < lo {
                    lo = m;
                }
            }
            if lo > best {
                best = lo;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub enum LossKind {
    LinearPortfolio {
        weights: Vec<f64>,
    },
    /// max_k (theta_k^T x + r_k)
    PiecewiseAffine {
        pieces: Vec<(Vec<f64>, f64)>,
    },
    /// max_k (x^T Q_k x + c_k^T x)
    PiecewiseQuadratic {
        pieces: Vec<(DMatrix<f64>, Vec<f64>)>,
    },
    ReluNetwork(ReluNetwork),
    /// LP value of unserved excess demand with redistribution matrix A.
    DistributionNetwork {
        a: DMatrix<f64>,
        supply: Vec<f64>,
    },
    CreditRiskStructural(CreditStructure),
}

#[derive(Debug, Clone)]
pub struct LossModel {
    kind: LossKind,
    dim: usize,
    rho: f64,
    has_limit: bool,
}

impl LossModel {
    pub fn linear_portfolio(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("empty weight vector".into()));
        }
        let dim = weights.len();
        Ok(LossModel {
            kind: LossKind::LinearPortfolio { weights },
            dim,
            rho: 1.0,
            has_limit: true,
        })
    }

    pub fn piecewise_affine(pieces: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = pieces.first().map(|(t, _)| t.len()).ok_or_else(|| {
            Error::Config("piecewise affine loss needs at least one piece".into())
        })?;
        if pieces.iter().any(|(t, _)| t.len() != dim) {
            return Err(Error::Config("inconsistent piece dimensions".into()));
        }
        Ok(LossModel {
            kind: LossKind::PiecewiseAffine { pieces },
            dim,
            rho: 1.0,
            has_limit: true,
        })
    }

    pub fn piecewise_quadratic(pieces: Vec<(DMatrix<f64>, Vec<f64>)>) -> Result<Self> {
        let dim = pieces.first().map(|(q, _)| q.nrows()).ok_or_else(|| {
            Error::Config("piecewise quadratic loss needs at least one piece".into())
        })?;
        if pieces
            .iter()
            .any(|(q, c)| q.nrows() != dim || q.ncols() != dim || c.len() != dim)
        {
            return Err(Error::Config("inconsistent piece dimensions".into()));
        }
        Ok(LossModel {
            kind: LossKind::PiecewiseQuadratic { pieces },
            dim,
            rho: 2.0,
            has_limit: true,
        })
    }

    pub fn relu_network(net: ReluNetwork) -> Self {
        let dim = net.input_dim();
        let rho = net.outer.rho();
        LossModel {
            kind: LossKind::ReluNetwork(net),
            dim,
            rho,
            has_limit: true,
        }
    }

    pub fn distribution_network(a: DMatrix<f64>, supply: Vec<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || supply.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: supply.len() });
        }
        Ok(LossModel {
            kind: LossKind::DistributionNetwork { a, supply },
            dim: d,
            rho: 1.0,
            has_limit: false,
        })
    }

    pub fn credit_structural(cs: CreditStructure, input_dim: usize) -> Self {
        let rho = cs.heads[0].rho();
        LossModel {
            kind: LossKind::CreditRiskStructural(cs),
            dim: input_dim,
            rho,
            has_limit: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn has_limit(&self) -> bool {
        self.has_limit
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            Err(Error::DimensionMismatch { expected: self.dim, got: x.len() })
        } else {
            Ok(())
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match &self.kind {
            LossKind::LinearPortfolio { weights } => {
                Ok(weights.iter().zip(x).map(|(w, xi)| w * xi).sum())
            }
            LossKind::PiecewiseAffine { pieces } => Ok(pieces
                .iter()
                .map(|(t, r)| t.iter().zip(x).map(|(ti, xi)| ti * xi).sum::<f64>() + r)
                .fold(f64::NEG_INFINITY, f64::max)),
            LossKind::PiecewiseQuadratic { pieces } => {
                let v = DVector::from_column_slice(x);
                Ok(pieces
                    .iter()
                    .map(|(q, c)| {
                        (q * &v).dot(&v) + c.iter().zip(x).map(|(ci, xi)| ci * xi).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max))
            }
            LossKind::ReluNetwork(net) => Ok(net.eval(x)),
            LossKind::DistributionNetwork { a, supply } => lp::network_loss(a, x, supply),
            LossKind::CreditRiskStructural(cs) => {
                let minima = cs.type_minima(x, |h, x| h.eval(x))?;
                Ok(cs.aggregate(&minima))
            }
        }
    }

    /// eval with an unbounded network LP mapped to +infinity (total excess
    /// demand escaped the redistribution system: a sure failure).
    pub fn eval_or_inf(&self, x: &[f64]) -> Result<f64> {
        match self.eval(x) {
            Err(Error::Unbounded) => Ok(f64::INFINITY),
            other => other,
        }
    }

    /// The homogeneous limit L*(x) = lim L(nx)/n^rho, for x >= 0.
    pub fn limit_eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match &self.kind {
            LossKind::LinearPortfolio { weights } => {
                Ok(weights.iter().zip(x).map(|(w, xi)| w * xi).sum())
            }
            LossKind::PiecewiseAffine { pieces } => Ok(pieces
                .iter()
                .map(|(t, _)| t.iter().zip(x).map(|(ti, xi)| ti * xi).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)),
            LossKind::PiecewiseQuadratic { pieces } => {
                let v = DVector::from_column_slice(x);
                Ok(pieces
                    .iter()
                    .map(|(q, _)| (q * &v).dot(&v))
                    .fold(f64::NEG_INFINITY, f64::max))
            }
            LossKind::ReluNetwork(net) => Ok(net.limit(x)),
            LossKind::DistributionNetwork { .. } => {
                Err(Error::Unsupported("no analytic limit for the network LP loss".into()))
            }
            LossKind::CreditRiskStructural(cs) => {
                let minima = cs.type_minima(x, |h, x| h.limit_eval(x))?;
                Ok(cs.aggregate(&minima))
            }
        }
    }

    /// Numeric stand-in for L* when no closed form exists:
    /// eval(n x) / n^rho at n = 1e4.
    pub fn numeric_limit(&self, x: &[f64]) -> Result<f64> {
        let n = 1e4;
        let scaled: Vec<f64> = x.iter().map(|v| n * v).collect();
        Ok(self.eval(&scaled)? / n.powf(self.rho))
    }
}
