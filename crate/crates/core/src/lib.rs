//! Numerical laboratory for Gaussian small-ball and lower-deviation estimates
//! of norms.

pub mod constants;
pub mod deform;
pub mod error;
pub mod gstats;
pub mod mc;
pub mod norms;
pub mod ou;
pub mod positions;
pub mod smallball;
pub mod special;

pub use error::{Error, Result};
pub use mc::{EstimateCI, McConfig};
pub use norms::{Functional, FunctionalSet, NormSpec};
