//! The synthetic city: agents, locations and zones.

pub mod encounter;
pub mod itinerary;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::error::Result;
use crate::rng::{Purpose, StreamKey};

pub use encounter::{detect_encounters, DistanceBand, Encounter, Occupancy};
pub use itinerary::{plan_day, DayContext, Itinerary, Stint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZoneId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl LocationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationKind {
    Household,
    Store,
    Park,
    Hospital,
    Icu,
    NursingHome,
    Workplace,
    Transit,
}

impl LocationKind {
    pub const ALL: [LocationKind; 8] = [
        LocationKind::Household,
        LocationKind::Store,
        LocationKind::Park,
        LocationKind::Hospital,
        LocationKind::Icu,
        LocationKind::NursingHome,
        LocationKind::Workplace,
        LocationKind::Transit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LocationKind::Household => "household",
            LocationKind::Store => "store",
            LocationKind::Park => "park",
            LocationKind::Hospital => "hospital",
            LocationKind::Icu => "icu",
            LocationKind::NursingHome => "nursing_home",
            LocationKind::Workplace => "workplace",
            LocationKind::Transit => "transit",
        }
    }

    /// Residences: contacts here are household contacts.
    pub fn is_residence(self) -> bool {
        matches!(self, LocationKind::Household | LocationKind::NursingHome)
    }

    fn default_capacity(self) -> u32 {
        match self {
            LocationKind::Household => 1,
            LocationKind::Store => 60,
            LocationKind::Park => 200,
            LocationKind::Hospital => 20,
            LocationKind::Icu => 4,
            LocationKind::NursingHome => 80,
            LocationKind::Workplace => 100,
            LocationKind::Transit => 80,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
}

/// Pre-existing medical conditions as a small bit set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Conditions(pub u8);

impl Conditions {
    pub const DIABETES: Conditions = Conditions(1);
    pub const HEART_DISEASE: Conditions = Conditions(1 << 1);
    pub const LUNG_DISEASE: Conditions = Conditions(1 << 2);
    pub const IMMUNOCOMPROMISED: Conditions = Conditions(1 << 3);

    pub fn contains(self, other: Conditions) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Conditions) {
        self.0 |= other.0;
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// One simulated person. Demographic fields never change after build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub age: u8,
    pub sex: Sex,
    pub preexisting_conditions: Conditions,
    pub carefulness: f64,
    pub is_healthcare_worker: bool,
    pub has_app: bool,
    pub mask_propensity: f64,
    pub household_id: LocationId,
    pub workplace_id: Option<LocationId>,
    pub home_zone_id: ZoneId,
    pub can_work_from_home: bool,
    pub transit_id: Option<LocationId>,
    pub favourites: Vec<LocationId>,
    /// 1..=4; only changes in response to the app or tracing.
    pub recommendation_level: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: LocationId,
    pub kind: LocationKind,
    pub capacity: u32,
    pub zone_id: ZoneId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneInfo {
    pub id: ZoneId,
    pub population: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub agents: Vec<Agent>,
    pub locations: Vec<Location>,
    pub zones: Vec<ZoneInfo>,
    /// Agents exposed at day 0.
    pub initial_exposed: Vec<AgentId>,
    by_kind: Vec<Vec<LocationId>>,
}

impl World {
    pub fn locations_of(&self, kind: LocationKind) -> &[LocationId] {
        &self.by_kind[kind as usize]
    }

    pub fn location(&self, id: LocationId) -> &Location {
        &self.locations[id.index()]
    }

    pub fn agent(&self, id: AgentId) -> &Agent {
        &self.agents[id.index()]
    }

    pub fn kinds(&self) -> Vec<LocationKind> {
        self.locations.iter().map(|l| l.kind).collect()
    }

    pub fn is_weekend(&self, day: u32) -> bool {
        self.config.weekend.contains(&(day % 7))
    }

    /// Members of each residence, indexed by location.
    pub fn residents(&self) -> Vec<Vec<AgentId>> {
        let mut out = vec![Vec::new(); self.locations.len()];
        for a in &self.agents {
            out[a.household_id.index()].push(a.id);
        }
        out
    }
}

// Population share per age decade 0-9 .. 80+.
const AGE_DECADES: [f64; 9] = [0.106, 0.110, 0.135, 0.136, 0.126, 0.140, 0.125, 0.076, 0.046];

fn sample_age<R: Rng>(rng: &mut R) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let total: f64 = AGE_DECADES.iter().sum();
    for (i, w) in AGE_DECADES.iter().enumerate() {
        acc += w / total;
        if u < acc || i == AGE_DECADES.len() - 1 {
            let span = if i == 8 { 16 } else { 10 };
            return (i as u32 * 10 + rng.gen_range(0..span)) as u8;
        }
    }
    unreachable!()
}

fn sample_conditions<R: Rng>(rng: &mut R, age: u8) -> Conditions {
    let a = f64::from(age) / 100.0;
    let mut c = Conditions::default();
    if rng.gen_bool((0.25 * a).min(1.0)) {
        c.insert(Conditions::DIABETES);
    }
    if rng.gen_bool((0.2 * a * a).min(1.0)) {
        c.insert(Conditions::HEART_DISEASE);
    }
    if rng.gen_bool((0.05 + 0.1 * a).min(1.0)) {
        c.insert(Conditions::LUNG_DISEASE);
    }
    if rng.gen_bool(0.02) {
        c.insert(Conditions::IMMUNOCOMPROMISED);
    }
    c
}

/// Build the synthetic city. All randomness flows from `config.seed`.
pub fn build_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = StreamKey::new(config.seed, Purpose::WorldBuild).rng();
    let n = config.population as usize;
    let lc = &config.location_counts;
    let n_zones = (config.zone_count + config.small_zones) as usize;

    let mut locations = Vec::new();
    let mut by_kind = vec![Vec::new(); LocationKind::ALL.len()];
    let mut push_loc = |kind: LocationKind, count: u32, locations: &mut Vec<Location>| {
        for _ in 0..count {
            let id = LocationId(locations.len() as u32);
            locations.push(Location { id, kind, capacity: kind.default_capacity(), zone_id: ZoneId(0) });
            by_kind[kind as usize].push(id);
        }
    };
    for kind in LocationKind::ALL {
        let count = match kind {
            LocationKind::Household => lc.household,
            LocationKind::Store => lc.store,
            LocationKind::Park => lc.park,
            LocationKind::Hospital => lc.hospital,
            LocationKind::Icu => lc.icu,
            LocationKind::NursingHome => lc.nursing_home,
            LocationKind::Workplace => lc.workplace,
            LocationKind::Transit => lc.transit,
        };
        push_loc(kind, count, &mut locations);
    }
    let households = by_kind[LocationKind::Household as usize].clone();
    let nursing_homes = by_kind[LocationKind::NursingHome as usize].clone();
    let hospitals = by_kind[LocationKind::Hospital as usize].clone();
    let workplaces = by_kind[LocationKind::Workplace as usize].clone();
    let transit = by_kind[LocationKind::Transit as usize].clone();
    let stores = by_kind[LocationKind::Store as usize].clone();
    let parks = by_kind[LocationKind::Park as usize].clone();

    // Demographics.
    let beta = Beta::new(2.0, 2.0).expect("valid beta");
    struct Draft {
        age: u8,
        sex: Sex,
        conditions: Conditions,
        carefulness: f64,
        mask_propensity: f64,
    }
    let drafts: Vec<Draft> = (0..n)
        .map(|_| {
            let age = sample_age(&mut rng);
            let sex = if rng.gen_bool(0.5) { Sex::Female } else { Sex::Male };
            let conditions = sample_conditions(&mut rng, age);
            let carefulness: f64 = beta.sample(&mut rng);
            let mask_propensity = (carefulness + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0);
            Draft { age, sex, conditions, carefulness, mask_propensity }
        })
        .collect();

    // Residences: some 80+ agents live in nursing homes, the rest fill
    // households with at least one resident each.
    let mut residence = vec![LocationId(0); n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut community = Vec::with_capacity(n);
    let mut in_care = 0usize;
    for &i in &order {
        let room = n - in_care - 1 >= households.len();
        if drafts[i].age >= 80 && !nursing_homes.is_empty() && room && rng.gen_bool(config.nursing_home_rate) {
            residence[i] = *nursing_homes.choose(&mut rng).expect("non-empty");
            in_care += 1;
        } else {
            community.push(i);
        }
    }
    for (k, &i) in community.iter().enumerate() {
        residence[i] = if k < households.len() {
            households[k]
        } else {
            *households.choose(&mut rng).expect("non-empty")
        };
    }

    // Work anchors.
    let mut workplace = vec![None; n];
    let mut is_hcw = vec![false; n];
    let mut can_wfh = vec![false; n];
    let mut transit_line = vec![None; n];
    for i in 0..n {
        let age = drafts[i].age;
        let in_care = locations[residence[i].index()].kind == LocationKind::NursingHome;
        if !(5..=64).contains(&age) || in_care || !rng.gen_bool(config.employment_rate) {
            continue;
        }
        if age >= 18 && !hospitals.is_empty() && rng.gen_bool(config.healthcare_worker_rate) {
            is_hcw[i] = true;
            workplace[i] = hospitals.choose(&mut rng).copied();
        } else if let Some(&w) = workplaces.choose(&mut rng) {
            workplace[i] = Some(w);
            can_wfh[i] = age < 18 || rng.gen_bool(config.work_from_home_rate);
        }
        if workplace[i].is_some() && !transit.is_empty() && rng.gen_bool(config.transit_use_rate) {
            transit_line[i] = transit.choose(&mut rng).copied();
        }
    }

    // App users: exactly round(adoption * population).
    let n_app = (config.app_adoption * n as f64).round() as usize;
    let mut app_order: Vec<usize> = (0..n).collect();
    app_order.shuffle(&mut rng);
    let mut has_app = vec![false; n];
    for &i in app_order.iter().take(n_app) {
        has_app[i] = true;
    }

    // Zones: small zones take households until they reach their target,
    // the remainder is dealt round-robin into the regular zones.
    let mut household_size = vec![0u32; locations.len()];
    for r in &residence {
        household_size[r.index()] += 1;
    }
    let mut zone_pop = vec![0u32; n_zones];
    let mut hh_order = households.clone();
    hh_order.shuffle(&mut rng);
    let regular = config.zone_count as usize;
    let mut small = 0usize;
    let mut rr = 0usize;
    for h in hh_order {
        let size = household_size[h.index()];
        let zone = if small < config.small_zones as usize {
            let z = regular + small;
            if zone_pop[z] + size >= config.small_zone_residents {
                small += 1;
            }
            if zone_pop[z] + size < 100 {
                z
            } else {
                rr += 1;
                (rr - 1) % regular
            }
        } else {
            rr += 1;
            (rr - 1) % regular
        };
        zone_pop[zone] += size;
        locations[h.index()].zone_id = ZoneId(zone as u32);
        locations[h.index()].capacity = size.max(1);
    }
    let mut rr = 0usize;
    for loc in locations.iter_mut().filter(|l| l.kind != LocationKind::Household) {
        loc.zone_id = ZoneId((rr % regular) as u32);
        rr += 1;
    }
    for &nh in &nursing_homes {
        let z = locations[nh.index()].zone_id;
        zone_pop[z.0 as usize] += household_size[nh.index()];
    }

    let mut agents = Vec::with_capacity(n);
    for (i, d) in drafts.into_iter().enumerate() {
        let mut favourites = Vec::new();
        let mut pick = |pool: &[LocationId], k: u32, favourites: &mut Vec<LocationId>| {
            let k = (k as usize).min(pool.len());
            favourites.extend(pool.choose_multiple(&mut rng, k).copied());
        };
        pick(&stores, 3, &mut favourites);
        pick(&parks, 2, &mut favourites);
        favourites.sort();
        agents.push(Agent {
            id: AgentId(i as u32),
            age: d.age,
            sex: d.sex,
            preexisting_conditions: d.conditions,
            carefulness: d.carefulness,
            is_healthcare_worker: is_hcw[i],
            has_app: has_app[i],
            mask_propensity: d.mask_propensity,
            household_id: residence[i],
            workplace_id: workplace[i],
            home_zone_id: locations[residence[i].index()].zone_id,
            can_work_from_home: can_wfh[i],
            transit_id: transit_line[i],
            favourites,
            recommendation_level: 1,
        });
    }

    let mut seeds: Vec<usize> = (0..n).collect();
    let mut seed_rng = StreamKey::new(config.seed, Purpose::Seeding).rng();
    seeds.shuffle(&mut seed_rng);
    let mut initial_exposed: Vec<AgentId> =
        seeds.into_iter().take(config.initial_infected as usize).map(|i| AgentId(i as u32)).collect();
    initial_exposed.sort();

    let zones = zone_pop.iter().enumerate().map(|(z, &p)| ZoneInfo { id: ZoneId(z as u32), population: p }).collect();
    Ok(World { config: config.clone(), agents, locations, zones, initial_exposed, by_kind })
}
