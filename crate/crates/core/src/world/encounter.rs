//! Co-location and encounter detection.

use serde::{Deserialize, Serialize};

use crate::config::{SLEEP_SLOT, WAKE_SLOT};
use crate::rng::StreamKey;
use crate::world::{AgentId, LocationId, LocationKind};

/// Coarse proximity class of an encounter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceBand {
    /// Under 1 m.
    Close,
    /// 1 to 2 m.
    Medium,
    /// Over 2 m; never transmits and is never logged by the app.
    Far,
}

impl DistanceBand {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceBand::Close => "close",
            DistanceBand::Medium => "medium",
            DistanceBand::Far => "far",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// One step farther away.
    pub fn farther(self) -> DistanceBand {
        match self {
            DistanceBand::Close => DistanceBand::Medium,
            _ => DistanceBand::Far,
        }
    }
}

/// Probability of (close, medium) per location kind; the rest is far.
pub fn band_probabilities(kind: LocationKind) -> [f64; 2] {
    match kind {
        LocationKind::Household => [0.60, 0.30],
        LocationKind::Store => [0.15, 0.35],
        LocationKind::Park => [0.10, 0.30],
        LocationKind::Hospital => [0.30, 0.40],
        LocationKind::Icu => [0.40, 0.40],
        LocationKind::NursingHome => [0.40, 0.40],
        LocationKind::Workplace => [0.25, 0.40],
        LocationKind::Transit => [0.35, 0.40],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    /// Always the smaller id of the pair.
    pub agent_a: AgentId,
    pub agent_b: AgentId,
    pub day: u32,
    /// First slot of the merged run.
    pub slot: u16,
    pub duration_min: f64,
    pub distance_band: DistanceBand,
    pub location_id: LocationId,
}

impl Encounter {
    pub fn involves(&self, agent: AgentId) -> bool {
        self.agent_a == agent || self.agent_b == agent
    }

    pub fn other(&self, agent: AgentId) -> AgentId {
        if self.agent_a == agent {
            self.agent_b
        } else {
            self.agent_a
        }
    }

    /// Number of slots the pair was co-located.
    pub fn slots(&self) -> u16 {
        (self.duration_min / 15.0).round() as u16
    }
}

/// Who is where during the waking slots of one day.
#[derive(Debug, Clone)]
pub struct Occupancy {
    n_locations: usize,
    cells: Vec<Vec<AgentId>>,
}

const WAKING: usize = (SLEEP_SLOT - WAKE_SLOT) as usize;

impl Occupancy {
    pub fn new(n_locations: usize) -> Self {
        Occupancy { n_locations, cells: vec![Vec::new(); n_locations * WAKING] }
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    /// Slots that can hold occupants.
    pub fn slot_range() -> std::ops::Range<u16> {
        WAKE_SLOT..SLEEP_SLOT
    }

    fn idx(&self, loc: LocationId, slot: u16) -> usize {
        assert!(Self::slot_range().contains(&slot), "slot {slot} outside waking hours");
        loc.index() * WAKING + (slot - WAKE_SLOT) as usize
    }

    /// Place an agent at a location for one slot. Slots outside waking
    /// hours are ignored.
    pub fn add(&mut self, agent: AgentId, loc: LocationId, slot: u16) {
        if !Self::slot_range().contains(&slot) {
            return;
        }
        let i = self.idx(loc, slot);
        let cell = &mut self.cells[i];
        if let Err(pos) = cell.binary_search(&agent) {
            cell.insert(pos, agent);
        }
    }

    pub fn at(&self, loc: LocationId, slot: u16) -> &[AgentId] {
        &self.cells[self.idx(loc, slot)]
    }

    pub fn clear(&mut self) {
        for c in &mut self.cells {
            c.clear();
        }
    }
}

/// Sample the band of one merged encounter. Keyed on the encounter itself,
/// so the result does not depend on enumeration order.
pub fn sample_band(key: StreamKey, kind: LocationKind, loc: LocationId, a: AgentId, b: AgentId, slot: u16) -> DistanceBand {
    let u = key.with(u64::from(loc.0)).with(u64::from(a.0)).with(u64::from(b.0)).with(u64::from(slot)).uniform();
    let [close, medium] = band_probabilities(kind);
    if u < close {
        DistanceBand::Close
    } else if u < close + medium {
        DistanceBand::Medium
    } else {
        DistanceBand::Far
    }
}

/// Turn a day's occupancy into encounters. Every co-present pair at a
/// location and slot is a candidate; runs of consecutive slots for the same
/// pair and location merge into one encounter. Output is sorted by
/// (location, slot, agent_a, agent_b).
pub fn detect_encounters(occ: &Occupancy, kinds: &[LocationKind], day: u32, band_key: StreamKey) -> Vec<Encounter> {
    let mut out = Vec::new();
    for l in 0..occ.n_locations {
        let loc = LocationId(l as u32);
        let mut prev: &[AgentId] = &[];
        for slot in Occupancy::slot_range() {
            let here = occ.at(loc, slot);
            if here.len() >= 2 {
                for (i, &a) in here.iter().enumerate() {
                    let a_prev = prev.binary_search(&a).is_ok();
                    for &b in &here[i + 1..] {
                        if a_prev && prev.binary_search(&b).is_ok() {
                            continue; // continuation of an earlier run
                        }
                        let mut len = 1u16;
                        let mut s = slot + 1;
                        while s < SLEEP_SLOT {
                            let next = occ.at(loc, s);
                            if next.binary_search(&a).is_ok() && next.binary_search(&b).is_ok() {
                                len += 1;
                                s += 1;
                            } else {
                                break;
                            }
                        }
                        out.push(Encounter {
                            agent_a: a,
                            agent_b: b,
                            day,
                            slot,
                            duration_min: f64::from(len) * 15.0,
                            distance_band: sample_band(band_key, kinds[l], loc, a, b, slot),
                            location_id: loc,
                        });
                    }
                }
            }
            prev = here;
        }
    }
    out
}
