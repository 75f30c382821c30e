//! Recommendation levels and the behaviour they switch on.

use crate::risk::quantizer::RiskLevel;
use crate::world::Agent;

/// Levels 0-1 map to 1, 2-3 to 2, 4-5 to 3 and 6-15 to 4.
pub fn recommendation_level(level: RiskLevel) -> u8 {
    match level.value() {
        0..=1 => 1,
        2..=3 => 2,
        4..=5 => 3,
        _ => 4,
    }
}

/// Behaviour switches for one agent-day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorModifiers {
    pub hygiene: bool,
    /// Mask outside the household.
    pub mask: bool,
    /// Keep 2 m apart; shifts sampled distance bands outward.
    pub distancing_2m: bool,
    pub halve_durations: bool,
    pub no_exploration: bool,
    /// Work from home when possible.
    pub work_from_home: bool,
    /// Stay home from work and school.
    pub quarantine: bool,
    pub single_stop: bool,
    pub outing_factor: f64,
    pub request_test: bool,
}

impl BehaviorModifiers {
    pub fn none() -> Self {
        BehaviorModifiers {
            hygiene: false,
            mask: false,
            distancing_2m: false,
            halve_durations: false,
            no_exploration: false,
            work_from_home: false,
            quarantine: false,
            single_stop: false,
            outing_factor: 1.0,
            request_test: false,
        }
    }

    /// Cumulative modifiers of a recommendation level (1..=4).
    pub fn for_level(rec: u8, quarantine_outing_factor: f64) -> Self {
        let mut m = BehaviorModifiers::none();
        if rec >= 1 {
            m.hygiene = true;
        }
        if rec >= 2 {
            m.mask = true;
            m.distancing_2m = true;
        }
        if rec >= 3 {
            m.halve_durations = true;
            m.no_exploration = true;
        }
        if rec >= 4 {
            m.work_from_home = true;
            m.quarantine = true;
            m.single_stop = true;
            m.outing_factor = quarantine_outing_factor;
            m.request_test = true;
        }
        m
    }
}

impl Default for BehaviorModifiers {
    fn default() -> Self {
        Self::none()
    }
}

/// Modifiers for an app user following a recommendation. Agents without
/// the app get none.
pub fn apply_recommendation(agent: &Agent, rec: u8, quarantine_outing_factor: f64) -> BehaviorModifiers {
    if !agent.has_app {
        return BehaviorModifiers::none();
    }
    BehaviorModifiers::for_level(rec.clamp(1, 4), quarantine_outing_factor)
}
