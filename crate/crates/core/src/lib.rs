//! Agent-based epidemic simulator with phone-side risk messaging over a
//! mix-net mailbox protocol, and k-anonymous aggregate reporting.

pub mod aggregation;
pub mod config;
pub mod epi;
pub mod error;
pub mod metrics;
pub mod num;
pub mod risk;
pub mod rng;
pub mod sim;
pub mod transport;
pub mod world;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use num::Real;

/// `f64` viral-load curve used by the simulator.
pub type Curve = epi::ViralLoadCurve<f64>;
/// Single-precision viral-load curve.
pub type Curve32 = epi::ViralLoadCurve<f32>;
pub type Kernel = epi::TransmissionKernel<f64>;
pub type Kernel32 = epi::TransmissionKernel<f32>;
pub type Thresholds = risk::Quantizer<f64>;
pub type Thresholds32 = risk::Quantizer<f32>;
