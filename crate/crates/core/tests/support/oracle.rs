//! Helpers shared by the world tests and the acceptance run: dense
//! itinerary tables and a pairwise encounter oracle.
#![allow(dead_code)]

use covi_core::config::{BehaviorConfig, WorldConfig, SLEEP_SLOT, WAKE_SLOT};
use covi_core::risk::BehaviorModifiers;
use covi_core::rng::{Purpose, StreamKey};
use covi_core::world::encounter::sample_band;
use covi_core::world::itinerary::Placement;
use covi_core::world::{build_world, plan_day, AgentId, DayContext, Encounter, LocationId, Occupancy, World};

pub fn world_of(population: u32, seed: u64) -> World {
    let mut c = WorldConfig { population, seed, ..WorldConfig::default() };
    c.location_counts.household = (population * 2 / 5).max(1);
    c.location_counts.workplace = (population / 20).max(1);
    build_world(&c).unwrap()
}

pub fn day_ctx<'a>(world: &World, b: &'a BehaviorConfig, day: u32, agent: AgentId, m: BehaviorModifiers, seed: u64) -> DayContext<'a> {
    DayContext {
        day,
        weekend: world.is_weekend(day),
        distancing: 0.0,
        modifiers: m,
        placement: Placement::Free,
        behavior: b,
        explored: &[],
        key: StreamKey::new(seed, Purpose::Itinerary).with(u64::from(day)).with(u64::from(agent.0)),
    }
}

/// Dense agent x slot location table for one day.
pub fn plan_all(world: &World, day: u32, seed: u64, m: impl Fn(AgentId) -> BehaviorModifiers) -> Vec<Vec<Option<LocationId>>> {
    let b = BehaviorConfig::default();
    world
        .agents
        .iter()
        .map(|a| {
            let it = plan_day(world, a, &day_ctx(world, &b, day, a.id, m(a.id), seed));
            (0..SLEEP_SLOT).map(|s| if s >= WAKE_SLOT { it.location_at(s) } else { None }).collect()
        })
        .collect()
}

pub fn occupancy(world: &World, table: &[Vec<Option<LocationId>>]) -> Occupancy {
    let mut occ = Occupancy::new(world.locations.len());
    for (i, row) in table.iter().enumerate() {
        for (s, loc) in row.iter().enumerate() {
            if let Some(l) = loc {
                occ.add(AgentId(i as u32), *l, s as u16);
            }
        }
    }
    occ
}

pub type Key = (u32, u32, u32, u16, u16, u8);

pub fn key_of(e: &Encounter) -> Key {
    (e.agent_a.0, e.agent_b.0, e.location_id.0, e.slot, e.duration_min as u16, e.distance_band as u8)
}

/// Pairwise double loop over agents and slots; a run starts wherever the
/// pair was not together in the previous slot.
pub fn brute_force(world: &World, table: &[Vec<Option<LocationId>>], key: StreamKey) -> Vec<Key> {
    let mut out = Vec::new();
    let n = table.len();
    for a in 0..n {
        for b in a + 1..n {
            let together = |s: u16| match (table[a][s as usize], table[b][s as usize]) {
                (Some(x), Some(y)) if x == y && s >= WAKE_SLOT => Some(x),
                _ => None,
            };
            let mut s = WAKE_SLOT;
            while s < SLEEP_SLOT {
                let Some(loc) = together(s) else {
                    s += 1;
                    continue;
                };
                let start = s;
                while s < SLEEP_SLOT && together(s) == Some(loc) {
                    s += 1;
                }
                let kind = world.location(loc).kind;
                let band = sample_band(key, kind, loc, AgentId(a as u32), AgentId(b as u32), start);
                out.push((a as u32, b as u32, loc.0, start, (s - start) * 15, band as u8));
            }
        }
    }
    out.sort_unstable();
    out
}
