use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::aggregation::{FlowMapPacket, HeatMapPacket};
use crate::error::Result;
use crate::world::{AgentId, Encounter, LocationKind};

/// One row per simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyMetrics {
    pub day: u32,
    pub new_infections: u32,
    pub cumulative_cases: u32,
    pub rt_estimate: f64,
    pub rt_carried: bool,
    pub mean_contacts_per_agent: f64,
    pub hospitalized: u32,
    pub icu: u32,
    pub tests_performed: u32,
    pub positive_tests: u32,
    pub quarantined_agent_days: u32,
    pub susceptible: u32,
    pub exposed: u32,
    pub infectious: u32,
    pub recovered: u32,
    pub deaths: u32,
}

/// One infected agent in the transmission forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub child: AgentId,
    pub parent: Option<AgentId>,
    pub day: u32,
    pub location_kind: Option<LocationKind>,
    pub via_location: bool,
    /// Fractional day on which the child stops being infectious.
    pub infectious_end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InfectionTree {
    pub nodes: Vec<TreeNode>,
}

impl InfectionTree {
    pub fn roots(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.parent.is_none())
    }

    /// Secondary infections per infected agent, in node order.
    pub fn out_degrees(&self) -> Vec<u32> {
        let mut index = std::collections::BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            index.insert(n.child, i);
        }
        let mut deg = vec![0u32; self.nodes.len()];
        for n in &self.nodes {
            if let Some(p) = n.parent.and_then(|p| index.get(&p)) {
                deg[*p] += 1;
            }
        }
        deg
    }

    /// Infected agents by day `day` inclusive.
    pub fn size_by(&self, day: u32) -> usize {
        self.nodes.iter().filter(|n| n.day <= day).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["child", "parent", "day", "location_kind"])?;
        for n in &self.nodes {
            out.write_record([
                n.child.0.to_string(),
                n.parent.map(|p| p.0.to_string()).unwrap_or_default(),
                n.day.to_string(),
                n.location_kind.map(|k| k.as_str().to_string()).unwrap_or_else(|| "seed".into()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Ground truth about one agent at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub age: u8,
    pub has_app: bool,
    pub infected: bool,
    pub symptomatic: bool,
    pub tested_positive: bool,
    pub dead: bool,
    pub final_recommendation: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub scenario: super::Scenario,
    pub seed: u64,
    pub intervention_day: u32,
    pub daily: Vec<DailyMetrics>,
    pub tree: InfectionTree,
    pub outcomes: Vec<AgentOutcome>,
    /// Encounters with one infectious and one susceptible party.
    pub risky_encounters: u64,
    pub encounter_infections: u64,
    pub location_infections: u64,
    pub scores: Vec<f64>,
    pub encounters: Vec<Encounter>,
    /// Cluster purity over app phones at the final day, when computed.
    pub cluster_purity: Option<f64>,
    pub canary_alarms: u64,
    /// Risk update messages sent per day.
    pub messages_by_day: Vec<u32>,
    pub heat_packets: Vec<HeatMapPacket>,
    pub flow_packets: Vec<FlowMapPacket>,
}

impl RunOutput {
    pub fn final_cases(&self) -> u32 {
        self.daily.last().map_or(0, |d| d.cumulative_cases)
    }

    /// Mean daily contacts per agent from the intervention day on.
    pub fn post_intervention_mobility(&self) -> f64 {
        let post: Vec<f64> = self.daily.iter().filter(|d| d.day >= self.intervention_day).map(|d| d.mean_contacts_per_agent).collect();
        if post.is_empty() {
            return 0.0;
        }
        post.iter().sum::<f64>() / post.len() as f64
    }

    pub fn write_metrics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for d in &self.daily {
            out.serialize(d)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Debug export of an encounter stream.
pub fn write_encounters_csv<W: Write>(world: &crate::world::World, encounters: &[Encounter], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["day", "agent_a", "agent_b", "duration_min", "distance_band", "location_kind"])?;
    for e in encounters {
        out.write_record([
            e.day.to_string(),
            e.agent_a.0.to_string(),
            e.agent_b.0.to_string(),
            format!("{}", e.duration_min),
            e.distance_band.as_str().to_string(),
            world.location(e.location_id).kind.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
