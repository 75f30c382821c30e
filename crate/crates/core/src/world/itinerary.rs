//! Daily schedules: fixed anchors plus Poisson discretionary outings.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::{BehaviorConfig, SLEEP_SLOT, WAKE_SLOT};
use crate::risk::recommend::BehaviorModifiers;
use crate::rng::StreamKey;
use crate::world::{Agent, LocationId, LocationKind, World};

const WORK_START: u16 = 36;
const WORK_END: u16 = 68;
const COMMUTE_SLOTS: u16 = 2;

/// A contiguous stay at one location, `[start, end)` in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stint {
    pub start: u16,
    pub end: u16,
    pub location: LocationId,
}

/// Where an agent must be regardless of choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Free,
    /// Admitted to a hospital or ICU bed.
    Admitted(LocationId),
    /// Deceased; occupies no location.
    Absent,
}

/// Everything an agent's plan for one day depends on.
#[derive(Debug, Clone)]
pub struct DayContext<'a> {
    pub day: u32,
    pub weekend: bool,
    /// Global social-distancing strength in `[0, 1]`; 1 is full lockdown.
    pub distancing: f64,
    pub modifiers: BehaviorModifiers,
    pub placement: Placement,
    pub behavior: &'a BehaviorConfig,
    /// Locations visited on earlier exploratory trips.
    pub explored: &'a [LocationId],
    /// Stream for this agent and day.
    pub key: StreamKey,
}

/// One agent's day: stints covering every waking slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Itinerary {
    pub stints: Vec<Stint>,
    /// Discretionary outings taken.
    pub outings: u32,
    /// Locations visited today for the first time.
    pub newly_explored: Vec<LocationId>,
    pub went_to_work: bool,
}

impl Itinerary {
    /// Location at a waking slot, if any.
    pub fn location_at(&self, slot: u16) -> Option<LocationId> {
        self.stints.iter().find(|s| (s.start..s.end).contains(&slot)).map(|s| s.location)
    }
}

/// Inverse-CDF Poisson draw from one uniform; monotone in `lambda` for a
/// fixed `u`.
pub fn poisson_from_uniform(lambda: f64, u: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u >= cdf && k < 64 {
        k += 1;
        p *= lambda / f64::from(k);
        cdf += p;
    }
    k
}

/// Expected discretionary outings for an agent on a day.
pub fn outing_rate(agent: &Agent, ctx: &DayContext<'_>) -> f64 {
    let base = if ctx.weekend { ctx.behavior.weekend_outings } else { ctx.behavior.weekday_outings };
    base * (1.3 - 0.6 * agent.carefulness) * (1.0 - ctx.distancing).max(0.0) * ctx.modifiers.outing_factor
}

fn stay_home_from_work(agent: &Agent, ctx: &DayContext<'_>) -> bool {
    if ctx.modifiers.quarantine {
        return true;
    }
    agent.can_work_from_home && (ctx.modifiers.work_from_home || ctx.key.with(0xA11).uniform() < ctx.distancing)
}

fn pick_location<R: Rng>(
    world: &World,
    agent: &Agent,
    kind: LocationKind,
    ctx: &DayContext<'_>,
    rng: &mut R,
) -> Option<(LocationId, bool)> {
    let known: Vec<LocationId> = agent
        .favourites
        .iter()
        .chain(ctx.explored.iter())
        .copied()
        .filter(|l| world.location(*l).kind == kind)
        .collect();
    let explore = !ctx.modifiers.no_exploration && rng.gen_bool(ctx.behavior.explore_prob);
    if explore || known.is_empty() {
        if ctx.modifiers.no_exploration {
            return None;
        }
        let l = *world.locations_of(kind).choose(rng)?;
        return Some((l, !known.contains(&l)));
    }
    known.choose(rng).map(|&l| (l, false))
}

/// Build an agent's itinerary for the day.
pub fn plan_day(world: &World, agent: &Agent, ctx: &DayContext<'_>) -> Itinerary {
    let home = agent.household_id;
    let mut it = Itinerary::default();
    match ctx.placement {
        Placement::Absent => return it,
        Placement::Admitted(bed) => {
            it.stints.push(Stint { start: WAKE_SLOT, end: SLEEP_SLOT, location: bed });
            return it;
        }
        Placement::Free => {}
    }

    let mut anchors: Vec<Stint> = Vec::new();
    let mut free: Vec<(u16, u16)> = vec![(WAKE_SLOT, SLEEP_SLOT)];
    if let Some(work) = agent.workplace_id {
        if !ctx.weekend && !stay_home_from_work(agent, ctx) {
            it.went_to_work = true;
            let (leave, back) = match agent.transit_id {
                Some(line) => {
                    anchors.push(Stint { start: WORK_START - COMMUTE_SLOTS, end: WORK_START, location: line });
                    anchors.push(Stint { start: WORK_END, end: WORK_END + COMMUTE_SLOTS, location: line });
                    (WORK_START - COMMUTE_SLOTS, WORK_END + COMMUTE_SLOTS)
                }
                None => (WORK_START, WORK_END),
            };
            anchors.push(Stint { start: WORK_START, end: WORK_END, location: work });
            free = vec![(WAKE_SLOT, leave), (back, SLEEP_SLOT)];
        }
    }

    let outings = poisson_from_uniform(outing_rate(agent, ctx), ctx.key.with(0x07).uniform());
    let mut rng = ctx.key.with(0xD7A).rng();
    for _ in 0..outings {
        let stops = if ctx.modifiers.single_stop {
            1
        } else {
            1 + poisson_from_uniform(ctx.behavior.extra_stops, rng.gen())
        };
        let mut plan = Vec::new();
        for _ in 0..stops {
            let kind = if world.locations_of(LocationKind::Park).is_empty()
                || (!world.locations_of(LocationKind::Store).is_empty() && rng.gen_bool(ctx.behavior.store_share))
            {
                LocationKind::Store
            } else {
                LocationKind::Park
            };
            let len: u16 = match kind {
                LocationKind::Park => rng.gen_range(3..=6),
                _ => rng.gen_range(2..=4),
            };
            if let Some((loc, fresh)) = pick_location(world, agent, kind, ctx, &mut rng) {
                plan.push((loc, len, fresh));
            }
        }
        let total: u16 = plan.iter().map(|p| p.1).sum();
        if total == 0 {
            continue;
        }
        let fitting: Vec<usize> = (0..free.len()).filter(|&i| free[i].1 - free[i].0 >= total).collect();
        let Some(&w) = fitting.choose(&mut rng) else { continue };
        let (ws, we) = free[w];
        let start = rng.gen_range(ws..=we - total);
        let mut s = start;
        for (loc, len, fresh) in plan {
            anchors.push(Stint { start: s, end: s + len, location: loc });
            if fresh && !it.newly_explored.contains(&loc) {
                it.newly_explored.push(loc);
            }
            s += len;
        }
        free.remove(w);
        if start > ws {
            free.push((ws, start));
        }
        if s < we {
            free.push((s, we));
        }
        free.sort_unstable();
        it.outings += 1;
    }

    anchors.sort_by_key(|s| s.start);
    let mut cursor = WAKE_SLOT;
    for a in anchors {
        if a.start > cursor {
            it.stints.push(Stint { start: cursor, end: a.start, location: home });
        }
        cursor = a.end;
        it.stints.push(a);
    }
    if cursor < SLEEP_SLOT {
        it.stints.push(Stint { start: cursor, end: SLEEP_SLOT, location: home });
    }
    it
}
