//! Phone-side risk engine: contagiousness estimates, 4-bit quantization,
//! update triggering, contact clustering and recommendation levels.

pub mod cluster;
pub mod predictor;
pub mod quantizer;
pub mod recommend;
pub mod update;

pub use cluster::cluster_contacts;
pub use predictor::{ContactHandle, ContactLogEntry, HeuristicPredictor, ObservedTest, PhoneData, RiskPredictor, Scores, StaticInfo};
pub use quantizer::{Quantizer, RiskLevel};
pub use recommend::{apply_recommendation, recommendation_level, BehaviorModifiers};
pub use update::should_send_update;

/// Past days, besides today, that a phone keeps and scores.
pub const WINDOW_DAYS: u32 = 14;
