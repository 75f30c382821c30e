//! Lab tests: fixed false-positive/negative rates, results after a turnaround.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::TestConfig;
use crate::error::{Error, Result};
use crate::world::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOutcome {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRequest {
    pub agent: AgentId,
    pub sample_day: u32,
    pub available_day: u32,
    pub outcome: TestOutcome,
}

/// Draw a test outcome from the infection status and one uniform.
pub fn draw_outcome(infected: bool, cfg: &TestConfig, u: f64) -> TestOutcome {
    let positive = if infected { u >= cfg.false_negative_rate } else { u < cfg.false_positive_rate };
    if positive {
        TestOutcome::Positive
    } else {
        TestOutcome::Negative
    }
}

/// Pending tests and their release schedule.
#[derive(Debug, Clone, Default)]
pub struct TestLab {
    pending: BTreeMap<AgentId, TestRequest>,
    used_today: (u32, u32),
    performed: u64,
}

impl TestLab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Take a sample on `day`. The outcome is fixed now and released at
    /// `day + turnaround`. Returns `Ok(false)` when the day's capacity is
    /// used up.
    pub fn run_test(&mut self, agent: AgentId, infected: bool, day: u32, cfg: &TestConfig, u: f64) -> Result<bool> {
        if self.pending.contains_key(&agent) {
            return Err(Error::DuplicateTest(agent.0));
        }
        if self.used_today.0 != day {
            self.used_today = (day, 0);
        }
        if cfg.daily_capacity.is_some_and(|cap| self.used_today.1 >= cap) {
            return Ok(false);
        }
        self.used_today.1 += 1;
        self.performed += 1;
        let outcome = draw_outcome(infected, cfg, u);
        self.pending.insert(agent, TestRequest { agent, sample_day: day, available_day: day + cfg.turnaround_days, outcome });
        Ok(true)
    }

    pub fn is_pending(&self, agent: AgentId) -> bool {
        self.pending.contains_key(&agent)
    }

    /// Release every result that becomes visible on `day`.
    pub fn release(&mut self, day: u32) -> Vec<TestRequest> {
        let ready: Vec<AgentId> = self.pending.values().filter(|r| r.available_day <= day).map(|r| r.agent).collect();
        ready.into_iter().filter_map(|a| self.pending.remove(&a)).collect()
    }

    pub fn performed(&self) -> u64 {
        self.performed
    }
}
