use std::collections::BTreeSet;

use crate::world::{AgentId, DistanceBand, Encounter};

/// Contacts visible to binary tracing: app-to-app encounters within
/// Bluetooth range, by day.
#[derive(Debug, Clone, Default)]
pub struct TracingLog {
    by_agent: Vec<Vec<(u32, AgentId)>>,
}

impl TracingLog {
    pub fn new(n_agents: usize) -> Self {
        TracingLog { by_agent: vec![Vec::new(); n_agents] }
    }

    /// Log the day's encounters; `has_app` is indexed by agent.
    pub fn record(&mut self, encounters: &[Encounter], has_app: &[bool]) {
        for e in encounters {
            let (a, b) = (e.agent_a.index(), e.agent_b.index());
            if e.distance_band != DistanceBand::Far && has_app[a] && has_app[b] {
                self.by_agent[a].push((e.day, e.agent_b));
                self.by_agent[b].push((e.day, e.agent_a));
            }
        }
    }

    pub fn contacts_since(&self, agent: AgentId, start_day: u32) -> BTreeSet<AgentId> {
        self.by_agent[agent.index()].iter().filter(|(d, _)| *d >= start_day).map(|(_, a)| *a).collect()
    }

    /// Agents to quarantine when `index` tests positive: its contacts, and
    /// for order 2 their contacts too.
    pub fn trace(&self, index: AgentId, order: u8, start_day: u32) -> BTreeSet<AgentId> {
        let first = self.contacts_since(index, start_day);
        let mut all = first.clone();
        if order >= 2 {
            for c in &first {
                all.extend(self.contacts_since(*c, start_day));
            }
        }
        all.remove(&index);
        all
    }
}
