//! Day-by-day simulation of one scenario.

mod engine;
mod output;
mod phone;
mod tracing;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::Simulation;
pub use output::{write_encounters_csv, AgentOutcome, DailyMetrics, InfectionTree, RunOutput, TreeNode};
pub use tracing::TracingLog;

/// Intervention policy of a run. Serialized as its name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScenarioKind {
    Unmitigated,
    SocialDistancing,
    BinaryTracing { order: u8 },
    RiskApp,
}

impl ScenarioKind {
    pub const COMPARED: [ScenarioKind; 5] = [
        ScenarioKind::Unmitigated,
        ScenarioKind::SocialDistancing,
        ScenarioKind::BinaryTracing { order: 1 },
        ScenarioKind::BinaryTracing { order: 2 },
        ScenarioKind::RiskApp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Unmitigated => "unmitigated",
            ScenarioKind::SocialDistancing => "social_distancing",
            ScenarioKind::BinaryTracing { order: 1 } => "binary_tracing_1",
            ScenarioKind::BinaryTracing { .. } => "binary_tracing_2",
            ScenarioKind::RiskApp => "risk_app",
        }
    }

    pub fn tracing_order(self) -> Option<u8> {
        match self {
            ScenarioKind::BinaryTracing { order } => Some(order),
            _ => None,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<ScenarioKind> for String {
    fn from(k: ScenarioKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for ScenarioKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unmitigated" => ScenarioKind::Unmitigated,
            "social_distancing" | "distancing" => ScenarioKind::SocialDistancing,
            "binary_tracing_1" | "binary1" => ScenarioKind::BinaryTracing { order: 1 },
            "binary_tracing_2" | "binary2" => ScenarioKind::BinaryTracing { order: 2 },
            "risk_app" => ScenarioKind::RiskApp,
            other => return Err(Error::config("scenario", format!("unknown scenario `{other}`"))),
        })
    }
}

/// A scenario plus the global distancing strength it runs under once the
/// intervention starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub distancing: f64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, distancing: f64) -> Self {
        let distancing = if kind == ScenarioKind::Unmitigated { 0.0 } else { distancing.clamp(0.0, 1.0) };
        Scenario { kind, distancing }
    }

    pub fn unmitigated() -> Self {
        Scenario::new(ScenarioKind::Unmitigated, 0.0)
    }
}

/// Whether phones run the risk pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhoneMode {
    Off,
    /// Compute and exchange risk without acting on it.
    Shadow,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub phones: PhoneMode,
    /// Record every app user's today-score from this day on.
    pub collect_scores_from: Option<u32>,
    /// Keep every encounter in the output.
    pub keep_encounters: bool,
    /// Emit heat-map and flow-map packets from opted-in phones.
    pub collect_packets: bool,
}

impl SimOptions {
    pub fn for_scenario(kind: ScenarioKind) -> Self {
        SimOptions {
            phones: if kind == ScenarioKind::RiskApp { PhoneMode::Active } else { PhoneMode::Off },
            collect_scores_from: None,
            keep_encounters: false,
            collect_packets: false,
        }
    }
}
