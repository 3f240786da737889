//! Time-domain eddy-current solver on multipatch spline spaces with a
//! tree-cotree gauged dual-primal domain decomposition per time step.

pub mod assembly;
pub mod error;
pub mod experiment;
pub mod gauge;
pub mod march;
pub mod manufactured;
pub mod par;
pub mod solver;
pub mod sparse;
pub mod spline;
pub mod topology;

pub use error::{Error, Result};
