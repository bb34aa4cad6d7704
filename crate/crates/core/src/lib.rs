//! Beyond-diagonal reconfigurable intelligent surface toolkit.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the harness and CLI use.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod impair;
pub mod json;
pub mod linalg;
pub mod netcore;
pub mod optimize;
pub mod random;
pub mod scalar;
pub mod topology;

pub use error::{Error, Result};
pub use scalar::{CMatrix, CVector, Real, C};

pub type C64 = C<f64>;
pub type CMatrix64 = CMatrix<f64>;
pub type CVector64 = CVector<f64>;
pub type NetworkMatrix64 = netcore::NetworkMatrix<f64>;
pub type ChannelSet64 = channel::ChannelSet<f64>;
pub type ScatteringSpec64 = topology::ScatteringSpec<f64>;
pub type OptimizeResult64 = optimize::OptimizeResult<f64>;
pub type PatternSet64 = estimate::PatternSet<f64>;
