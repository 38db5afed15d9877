#![no_std]
//! Dynamic sparse factor models: time-varying loadings under dynamic
//! spike-and-slab priors, AR(1) latent factors and discount stochastic
//! volatility, estimated by parameter-expanded EM with rotations to sparsity.

extern crate alloc;

pub mod dss;
pub mod em;
pub mod loadings;
pub mod minimize;
pub mod error;
pub mod model;
pub mod rotation;
pub mod sim;
pub mod smoother;
pub mod surrogate;
pub mod volatility;

pub use em::{fit, fit_observed, init_loadings, InitStrategy};
pub use error::{Error, Result};
pub use model::{
    validate_config, FitResult, LoadingsPath, ModelConfig, Panel, RotationVariant, SmoothedMoments,
    VarianceScale, VolatilityPath,
};
pub use sim::{simulate, SimOutput, SimScenario};
