//! Built-in generative models with exact oracles, and the model registry.

mod normal_mean;
mod normal_mean_sd;
mod quadrature;
mod registry;
mod three_state;

pub use normal_mean::{abc_posterior_quadrature, exact_posterior, NormalMeanModel};
pub use normal_mean_sd::{abc_posterior_quadrature_2d, GriddedDensity2d, NormalMeanSdModel};
pub use quadrature::{simpson, GridSpec, GriddedDensity};
pub use registry::{ModelConstructor, ModelParams, ModelRegistry};
pub use three_state::{StateJump, ThreeStateModel};
