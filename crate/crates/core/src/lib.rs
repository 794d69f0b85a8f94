//! Estimation of small tail probabilities P(L(X) > u) for black-box losses
//! over dependent multivariate inputs, via a self-structuring importance
//! sampler, plus the numeric large-deviations layer (rate functions, tail
//! heterogeneity q*, decay exponents) and a portfolio-credit-risk estimator.

pub mod dependence;
pub mod error;
pub mod is_core;
pub mod linalg;
pub mod losses;
pub mod lp;
pub mod marginals;
pub mod pcr;
pub mod rate;
pub mod rng;
pub mod special;
pub mod stats;

pub use dependence::{Copula, CopulaSpec, GaussianCopula, JointModel};
pub use error::{Error, Result};
pub use is_core::{
    estimate_is, estimate_is_with, estimate_naive, estimate_naive_with, push_sample, ISConfig,
    ISEstimate,
};
pub use losses::{CreditStructure, LossKind, LossModel, OuterLoss, ReluNetwork};
pub use lp::{network_loss, solve_max, LpOutcome};
pub use marginals::{MarginalKind, MarginalModel};
pub use pcr::{estimate_pcr, DefaultModel, Portfolio};
pub use rate::{
    exponent_istar, lambda_min, network_theta_star, q_star, RateKind, RateSpec,
};
pub use rng::RandomStream;
