//! Sequential samplers.

mod adaptive;
mod proposal;
mod resample;
mod sis;
mod solve;

pub use adaptive::*;
pub use proposal::*;
pub use resample::*;
pub use sis::*;
pub use solve::*;
