use std::collections::BTreeMap;

use crate::aggregation::{mobility_nibble, FlowMapPacket, HeatMapPacket};
use crate::config::{MessagePath, SimConfig, SLEEP_SLOT, SLOTS_PER_DAY, WAKE_SLOT};
use crate::epi::symptoms::{cold_symptoms, sample_background_illness, sample_symptoms};
use crate::epi::{
    infectiousness, sample_disease_course, transmit, Direction, DiseaseState, ExposureSource, PartyState, SimTime, Status,
    SymptomSet, TestLab, TestOutcome, TransmissionKernel,
};
use crate::error::Result;
use crate::risk::cluster::cluster_purity;
use crate::risk::{
    cluster_contacts, recommendation_level, should_send_update, BehaviorModifiers, ContactHandle, HeuristicPredictor,
    ObservedTest, PhoneData, Quantizer, RiskLevel, RiskPredictor, StaticInfo, WINDOW_DAYS,
};
use crate::rng::{Purpose, StreamKey};
use crate::transport::{exchange_tokens, ContactKeys, CryptoMode, MixNetwork, NetId, PhoneTransport, Role, SECONDS_PER_DAY};
use crate::world::itinerary::Placement;
use crate::world::{build_world, detect_encounters, plan_day, AgentId, DayContext, Encounter, LocationId, LocationKind, Occupancy, World};

use super::output::{AgentOutcome, DailyMetrics, InfectionTree, RunOutput, TreeNode};
use super::phone::Phone;
use super::tracing::TracingLog;
use super::{PhoneMode, Scenario, ScenarioKind, SimOptions};

/// Slots a location stays contaminated after an infectious visit.
const RESIDUAL_SLOTS: usize = 4;

/// One scenario run over a freshly built world.
pub struct Simulation {
    cfg: SimConfig,
    scenario: Scenario,
    options: SimOptions,
    world: World,
    kinds: Vec<LocationKind>,
    kernel: TransmissionKernel<f64>,
    predictor: Box<dyn RiskPredictor>,
    quantizer: Quantizer<f64>,
    seed: u64,
    day: u32,

    disease: Vec<DiseaseState>,
    cold_until: Vec<u32>,
    observed: Vec<SymptomSet>,
    explored: Vec<Vec<LocationId>>,
    admitted: Vec<Option<LocationId>>,
    beds_used: BTreeMap<LocationId, u32>,
    quarantine_until: Vec<u32>,
    test_requested: Vec<bool>,
    tested_positive: Vec<bool>,
    lab: TestLab,

    phones: Vec<Option<Phone>>,
    next_handle: u64,
    handle_peer: BTreeMap<(AgentId, ContactHandle), AgentId>,
    direct_queue: Vec<(AgentId, ContactHandle, u32, RiskLevel)>,
    network: Option<MixNetwork>,
    tracing_log: TracingLog,

    occupancy: Occupancy,
    tree: InfectionTree,
    daily: Vec<DailyMetrics>,
    risky_encounters: u64,
    encounter_infections: u64,
    location_infections: u64,
    scores: Vec<f64>,
    encounters: Vec<Encounter>,
    deaths: u32,
    outings: Vec<u32>,
    messages_by_day: Vec<u32>,
    hygiene: Vec<bool>,
    heat_packets: Vec<HeatMapPacket>,
    flow_packets: Vec<FlowMapPacket>,
}

impl Simulation {
    pub fn new(cfg: &SimConfig, scenario: Scenario, options: SimOptions) -> Result<Self> {
        let quantizer = match &cfg.risk.thresholds {
            Some(t) => Quantizer::new(t.clone())?,
            None => Quantizer::shipped(),
        };
        let predictor = HeuristicPredictor::new(quantizer.clone(), cfg.risk.cluster_threshold);
        Self::with_predictor(cfg, scenario, options, Box::new(predictor), quantizer)
    }

    /// Build a run around any predictor; `quantizer` turns its scores into
    /// levels.
    pub fn with_predictor(
        cfg: &SimConfig,
        scenario: Scenario,
        options: SimOptions,
        predictor: Box<dyn RiskPredictor>,
        quantizer: Quantizer<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let world = build_world(&cfg.world)?;
        let n = world.agents.len();
        let seed = cfg.world.seed;
        let mixnet = options.phones != PhoneMode::Off && cfg.transport.message_path == MessagePath::Mixnet;
        let mode = CryptoMode::from_null_flag(cfg.transport.null_crypto);
        let phones = world
            .agents
            .iter()
            .map(|a| {
                (a.has_app && options.phones != PhoneMode::Off).then(|| {
                    let info = StaticInfo::of(a);
                    let baseline = HeuristicPredictor::new(quantizer.clone(), cfg.risk.cluster_threshold).baseline(&info);
                    let level = quantizer.quantize(baseline).unwrap_or_default();
                    let transport = mixnet.then(|| PhoneTransport::new(NetId(u64::from(a.id.0)), mode));
                    Phone::new(PhoneData::new(info), level, transport)
                })
            })
            .collect();
        let mut sim = Simulation {
            kinds: world.kinds(),
            kernel: TransmissionKernel::from_config(&cfg.disease),
            occupancy: Occupancy::new(world.locations.len()),
            cfg: cfg.clone(),
            scenario,
            options,
            predictor,
            quantizer,
            seed,
            day: 0,
            disease: vec![DiseaseState::default(); n],
            cold_until: vec![0; n],
            observed: vec![SymptomSet::empty(); n],
            explored: vec![Vec::new(); n],
            admitted: vec![None; n],
            beds_used: BTreeMap::new(),
            quarantine_until: vec![0; n],
            test_requested: vec![false; n],
            tested_positive: vec![false; n],
            lab: TestLab::new(),
            phones,
            next_handle: 1,
            handle_peer: BTreeMap::new(),
            direct_queue: Vec::new(),
            network: mixnet.then(|| MixNetwork::new(&cfg.transport, seed)),
            tracing_log: TracingLog::new(n),
            tree: InfectionTree::default(),
            daily: Vec::new(),
            risky_encounters: 0,
            encounter_infections: 0,
            location_infections: 0,
            scores: Vec::new(),
            encounters: Vec::new(),
            deaths: 0,
            outings: vec![0; n],
            messages_by_day: Vec::new(),
            hygiene: vec![false; n],
            heat_packets: Vec::new(),
            flow_packets: Vec::new(),
            world,
        };
        let opt_key = StreamKey::new(seed, Purpose::Policy).with(0x0B71);
        for (i, p) in sim.phones.iter_mut().enumerate() {
            if let Some(p) = p {
                p.opted_in = opt_key.with(i as u64).uniform() < cfg.risk.opt_in_rate;
            }
        }
        for a in sim.world.initial_exposed.clone() {
            sim.infect(a, SimTime { day: 0, slot: 0 }, ExposureSource::Seed, None);
        }
        Ok(sim)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn disease(&self) -> &[DiseaseState] {
        &self.disease
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn daily(&self) -> &[DailyMetrics] {
        &self.daily
    }

    pub fn network_mut(&mut self) -> Option<&mut MixNetwork> {
        self.network.as_mut()
    }

    /// Today's modifiers for every agent, also used by tests.
    pub fn modifiers_of(&self, agent: AgentId) -> BehaviorModifiers {
        let i = agent.index();
        let qof = self.cfg.behavior.quarantine_outing_factor;
        if !self.intervention_active() {
            return BehaviorModifiers::none();
        }
        let quarantined = self.quarantine_until[i] > self.day;
        match self.scenario.kind {
            ScenarioKind::Unmitigated | ScenarioKind::SocialDistancing => BehaviorModifiers::none(),
            ScenarioKind::BinaryTracing { .. } => {
                if quarantined {
                    BehaviorModifiers::for_level(4, qof)
                } else {
                    BehaviorModifiers::none()
                }
            }
            ScenarioKind::RiskApp => match (&self.phones[i], self.options.phones) {
                (Some(p), PhoneMode::Active) => {
                    let rec = if quarantined { 4 } else { recommendation_level(p.today_level) };
                    BehaviorModifiers::for_level(rec, qof)
                }
                _ => BehaviorModifiers::none(),
            },
        }
    }

    fn intervention_active(&self) -> bool {
        self.day >= self.cfg.scenario.intervention_day
    }

    fn distancing(&self) -> f64 {
        if self.intervention_active() {
            self.scenario.distancing
        } else {
            0.0
        }
    }

    fn key(&self, p: Purpose) -> StreamKey {
        StreamKey::new(self.seed, p).with(u64::from(self.day))
    }

    fn infect(&mut self, agent: AgentId, at: SimTime, source: ExposureSource, kind: Option<LocationKind>) -> bool {
        let i = agent.index();
        let mut rng = StreamKey::new(self.seed, Purpose::DiseaseCourse).with(u64::from(agent.0)).rng();
        let course = sample_disease_course(&self.world.agents[i], &self.cfg.disease, &mut rng);
        if !self.disease[i].infect(at, course, source) {
            return false;
        }
        self.tree.nodes.push(TreeNode {
            child: agent,
            parent: source.parent(),
            day: at.day,
            location_kind: kind,
            via_location: matches!(source, ExposureSource::Location { .. }),
            infectious_end: self.disease[i].infectious_end().unwrap_or(f64::from(at.day)),
        });
        true
    }

    /// Advance one day and return its encounters.
    pub fn step_day(&mut self) -> Vec<Encounter> {
        let day = self.day;
        let n = self.world.agents.len();
        for (i, d) in self.disease.iter_mut().enumerate() {
            let was_dead = d.dead;
            d.advance(f64::from(day));
            if d.dead && !was_dead {
                self.deaths += 1;
                if let Some(bed) = self.admitted[i].take() {
                    *self.beds_used.entry(bed).or_default() -= 1;
                }
            }
        }
        self.update_symptoms();

        // Mobility.
        let modifiers: Vec<BehaviorModifiers> = (0..n).map(|i| self.modifiers_of(AgentId(i as u32))).collect();
        let itin_key = self.key(Purpose::Itinerary);
        let distancing = self.distancing();
        let weekend = self.world.is_weekend(day);
        self.occupancy.clear();
        for i in 0..n {
            let agent = &self.world.agents[i];
            let placement = if self.disease[i].dead {
                Placement::Absent
            } else if let Some(bed) = self.admitted[i] {
                Placement::Admitted(bed)
            } else {
                Placement::Free
            };
            let ctx = DayContext {
                day,
                weekend,
                distancing,
                modifiers: modifiers[i],
                placement,
                behavior: &self.cfg.behavior,
                explored: &self.explored[i],
                key: itin_key.with(u64::from(agent.id.0)),
            };
            let it = plan_day(&self.world, agent, &ctx);
            self.outings[i] = it.outings;
            self.hygiene[i] = modifiers[i].hygiene;
            for s in &it.stints {
                for slot in s.start..s.end {
                    self.occupancy.add(agent.id, s.location, slot);
                }
            }
            self.explored[i].extend(it.newly_explored);
        }

        // Contacts.
        let mut encounters = detect_encounters(&self.occupancy, &self.kinds, day, self.key(Purpose::DistanceBand));
        encounters.sort_by_key(|e| (e.slot, e.agent_a, e.agent_b, e.location_id));
        let band_key = self.key(Purpose::DistanceBand).with(0x2A);
        for e in encounters.iter_mut() {
            let (ma, mb) = (&modifiers[e.agent_a.index()], &modifiers[e.agent_b.index()]);
            if ma.halve_durations || mb.halve_durations {
                e.duration_min *= 0.5;
            }
            if (ma.distancing_2m || mb.distancing_2m)
                && band_key.with(u64::from(e.agent_a.0)).with(u64::from(e.agent_b.0)).with(u64::from(e.slot)).uniform()
                    < self.cfg.behavior.distancing_shift_prob
            {
                e.distance_band = e.distance_band.farther();
            }
        }

        // Infection.
        let new_before = self.tree.nodes.len();
        let masks = self.mask_flags(&modifiers);
        let tx_key = self.key(Purpose::Transmission);
        for e in &encounters {
            let kind = self.world.location(e.location_id).kind;
            let t = f64::from(day) + (f64::from(e.slot) + f64::from(e.slots()) / 2.0) / f64::from(SLOTS_PER_DAY);
            let pa = self.party(e.agent_a, kind, t, &masks, &modifiers);
            let pb = self.party(e.agent_b, kind, t, &masks, &modifiers);
            let one_each = matches!(
                (pa.status, pb.status),
                (Status::Infectious, Status::Susceptible) | (Status::Susceptible, Status::Infectious)
            );
            if !one_each {
                continue;
            }
            self.risky_encounters += 1;
            let u = tx_key.with(u64::from(e.agent_a.0)).with(u64::from(e.agent_b.0)).with(u64::from(e.slot)).uniform();
            let hit = transmit(&self.kernel, &pa, &pb, e.duration_min, e.distance_band, u);
            let (src, dst) = match hit {
                Some(Direction::AtoB) => (e.agent_a, e.agent_b),
                Some(Direction::BtoA) => (e.agent_b, e.agent_a),
                None => continue,
            };
            if self.infect(dst, SimTime { day, slot: e.slot }, ExposureSource::Agent(src), Some(kind)) {
                self.encounter_infections += 1;
            }
        }
        if self.cfg.world.environmental_transmission && self.cfg.disease.environmental_rate > 0.0 {
            self.environmental_infections();
        }
        let new_infections = (self.tree.nodes.len() - new_before) as u32;

        // Medical observations.
        self.hospital_admissions();
        let (tests, positives) = self.medical_tests(&modifiers);

        // Risk levels and messages.
        let messages = if self.options.phones != PhoneMode::Off { self.phone_step(&encounters) } else { 0 };
        if self.scenario.kind.tracing_order().is_some() {
            let has_app: Vec<bool> = self.world.agents.iter().map(|a| a.has_app).collect();
            self.tracing_log.record(&encounters, &has_app);
        }

        // Awareness is read off the state at the next day's mobility step.
        let alive = self.disease.iter().filter(|d| !d.dead).count().max(1);
        let mut counts = [0u32; 4];
        for d in &self.disease {
            counts[d.status as usize] += 1;
        }
        let quarantined = modifiers.iter().filter(|m| m.quarantine).count() as u32;
        self.daily.push(DailyMetrics {
            day,
            new_infections,
            cumulative_cases: self.tree.nodes.len() as u32,
            rt_estimate: 0.0,
            rt_carried: true,
            mean_contacts_per_agent: 2.0 * encounters.len() as f64 / alive as f64,
            hospitalized: self.admitted.iter().flatten().filter(|l| self.world.location(**l).kind == LocationKind::Hospital).count() as u32,
            icu: self.admitted.iter().flatten().filter(|l| self.world.location(**l).kind == LocationKind::Icu).count() as u32,
            tests_performed: tests,
            positive_tests: positives,
            quarantined_agent_days: quarantined,
            susceptible: counts[Status::Susceptible as usize],
            exposed: counts[Status::Exposed as usize],
            infectious: counts[Status::Infectious as usize],
            recovered: counts[Status::Recovered as usize],
            deaths: self.deaths,
        });
        self.messages_by_day.push(messages);
        if self.options.keep_encounters {
            self.encounters.extend(encounters.iter().cloned());
        }
        self.day += 1;
        encounters
    }

    fn update_symptoms(&mut self) {
        let day = self.day;
        let table = &self.cfg.disease.symptoms;
        let sym_key = self.key(Purpose::Symptoms);
        if day % 7 == 0 {
            let mut rng = self.key(Purpose::BackgroundIllness).rng();
            for a in sample_background_illness(&self.world.agents, self.cfg.disease.background_illness_rate, &mut rng) {
                self.cold_until[a.index()] = day + self.cfg.disease.background_illness_days;
            }
        }
        for i in 0..self.disease.len() {
            let mut seen = SymptomSet::empty();
            let d = &self.disease[i];
            if d.course.is_some() && !d.dead && d.status != Status::Recovered {
                let covid = sample_symptoms(d, day, table, &mut sym_key.with(i as u64).rng());
                if !covid.is_empty() {
                    self.disease[i].symptoms_by_day.insert(day, covid);
                }
                seen = covid;
            }
            if self.cold_until[i] > day {
                seen = seen.union(cold_symptoms(table, &mut sym_key.with(i as u64).with(0xC01D).rng()));
            }
            self.observed[i] = if self.disease[i].dead { SymptomSet::empty() } else { seen };
        }
    }

    fn mask_flags(&self, modifiers: &[BehaviorModifiers]) -> Vec<bool> {
        let key = self.key(Purpose::Policy).with(0x3A5C);
        let rate = self.cfg.behavior.baseline_mask_rate;
        self.world
            .agents
            .iter()
            .map(|a| modifiers[a.id.index()].mask || key.with(u64::from(a.id.0)).uniform() < rate * 2.0 * a.mask_propensity)
            .collect()
    }

    fn party(&self, agent: AgentId, kind: LocationKind, t: f64, masks: &[bool], modifiers: &[BehaviorModifiers]) -> PartyState<f64> {
        let i = agent.index();
        let a = &self.world.agents[i];
        let d = &self.disease[i];
        let hcw_post = a.is_healthcare_worker && matches!(kind, LocationKind::Hospital | LocationKind::Icu);
        let masked = !kind.is_residence() && (masks[i] || hcw_post);
        let infectious = match (&d.course, d.status) {
            (Some(c), Status::Infectious) => infectiousness(d.viral_load_at(t), c.asymptomatic, d.coughing(self.day), &self.cfg.disease),
            _ => 0.0,
        };
        PartyState { status: d.status, infectiousness: infectious, masked, healthcare_worker: a.is_healthcare_worker, hygiene: modifiers[i].hygiene }
    }

    fn environmental_infections(&mut self) {
        let day = self.day;
        let rate = self.cfg.disease.environmental_rate;
        let key = self.key(Purpose::Environment);
        let t_mid = f64::from(day) + 0.5;
        let today: Vec<f64> = (0..self.disease.len())
            .map(|i| {
                let d = &self.disease[i];
                match (&d.course, d.status) {
                    (Some(c), Status::Infectious) => infectiousness(d.viral_load_at(t_mid), c.asymptomatic, d.coughing(day), &self.cfg.disease),
                    _ => 0.0,
                }
            })
            .collect();
        let mut hits: Vec<(AgentId, u16, LocationId, AgentId, LocationKind)> = Vec::new();
        for loc in &self.world.locations {
            if loc.kind.is_residence() {
                continue;
            }
            // (deposit, top depositor, its share) per recent slot.
            let mut ring: [(f64, Option<AgentId>, f64); RESIDUAL_SLOTS] = [(0.0, None, 0.0); RESIDUAL_SLOTS];
            for slot in WAKE_SLOT..SLEEP_SLOT {
                let here = self.occupancy.at(loc.id, slot);
                let mut hazard = 0.0;
                let mut top: (f64, Option<AgentId>) = (0.0, None);
                for (k, (dep, who, share)) in ring.iter().enumerate() {
                    let w = 1.0 - k as f64 / RESIDUAL_SLOTS as f64;
                    hazard += dep * w;
                    if share * w > top.0 {
                        top = (share * w, *who);
                    }
                }
                if hazard > 0.0 {
                    let p = 1.0 - (-rate * hazard).exp();
                    for &a in here {
                        if self.disease[a.index()].status == Status::Susceptible
                            && key.with(u64::from(a.0)).with(u64::from(slot)).uniform() < p
                        {
                            if let Some(src) = top.1 {
                                hits.push((a, slot, loc.id, src, loc.kind));
                            }
                        }
                    }
                }
                let mut deposit = (0.0, None, 0.0);
                for &a in here {
                    let v = today[a.index()];
                    deposit.0 += v;
                    if v > deposit.2 {
                        deposit.1 = Some(a);
                        deposit.2 = v;
                    }
                }
                ring.rotate_right(1);
                ring[0] = deposit;
            }
        }
        for (a, slot, location, depositor, kind) in hits {
            if self.infect(a, SimTime { day, slot }, ExposureSource::Location { location, depositor }, Some(kind)) {
                self.location_infections += 1;
            }
        }
    }

    fn hospital_admissions(&mut self) {
        let day = f64::from(self.day);
        for i in 0..self.disease.len() {
            let d = &self.disease[i];
            if d.dead {
                continue;
            }
            if d.status == Status::Recovered {
                if let Some(bed) = self.admitted[i].take() {
                    *self.beds_used.entry(bed).or_default() -= 1;
                }
                continue;
            }
            let (Some(c), Some(t0)) = (&d.course, d.infection_time) else { continue };
            if !c.really_sick || c.asymptomatic || self.admitted[i].is_some() {
                continue;
            }
            if day < t0.as_days() + c.symptom_onset_days + 2.0 {
                continue;
            }
            let wanted: &[LocationKind] = if c.extremely_sick { &[LocationKind::Icu, LocationKind::Hospital] } else { &[LocationKind::Hospital] };
            'kinds: for &kind in wanted {
                for &loc in self.world.locations_of(kind) {
                    let used = self.beds_used.entry(loc).or_default();
                    if *used < self.world.location(loc).capacity {
                        *used += 1;
                        self.admitted[i] = Some(loc);
                        break 'kinds;
                    }
                }
            }
        }
    }

    fn request_test(&mut self, i: usize) -> bool {
        if self.lab.is_pending(AgentId(i as u32)) || self.tested_positive[i] {
            return false;
        }
        let u = self.key(Purpose::TestResult).with(i as u64).uniform();
        self.lab.run_test(AgentId(i as u32), self.disease[i].is_infected(), self.day, &self.cfg.testing, u).unwrap_or(false)
    }

    fn medical_tests(&mut self, modifiers: &[BehaviorModifiers]) -> (u32, u32) {
        let day = self.day;
        let before = self.lab.performed();
        let seek_key = self.key(Purpose::TestSeeking);
        for i in 0..self.disease.len() {
            if self.disease[i].dead {
                continue;
            }
            let hospital = self.admitted[i].is_some();
            let seeks = !self.observed[i].is_empty() && seek_key.with(i as u64).uniform() < self.cfg.behavior.symptomatic_test_prob;
            if hospital || seeks {
                self.request_test(i);
            }
            if modifiers[i].request_test {
                if !self.test_requested[i] {
                    self.test_requested[i] = true;
                    self.request_test(i);
                }
            } else {
                self.test_requested[i] = false;
            }
        }
        let tests = (self.lab.performed() - before) as u32;
        let mut positives = 0;
        for r in self.lab.release(day) {
            let i = r.agent.index();
            let positive = r.outcome == TestOutcome::Positive;
            if positive {
                positives += 1;
                self.tested_positive[i] = true;
            }
            if let Some(p) = self.phones[i].as_mut() {
                p.data.test_results.push(ObservedTest { sample_day: r.sample_day, result_day: day, positive });
            }
            if positive && self.world.agents[i].has_app && self.intervention_active() && self.scenario.kind != ScenarioKind::Unmitigated
                && self.scenario.kind != ScenarioKind::SocialDistancing
            {
                self.isolate(i);
                if let Some(order) = self.scenario.kind.tracing_order() {
                    self.trace(i, order);
                }
            }
        }
        (tests, positives)
    }

    fn isolate(&mut self, i: usize) {
        let until = self.day + 1 + self.cfg.behavior.quarantine_days;
        self.quarantine_until[i] = self.quarantine_until[i].max(until);
    }

    fn trace(&mut self, index: usize, order: u8) {
        let start = self.day.saturating_sub(self.cfg.scenario.tracing_window_days);
        for a in self.tracing_log.trace(AgentId(index as u32), order, start) {
            self.isolate(a.index());
        }
    }

    /// Record contacts, run every phone's predictor and dispatch updates.
    fn phone_step(&mut self, encounters: &[Encounter]) -> u32 {
        let day = self.day;
        let mixnet = self.network.is_some();
        let mut token_rng = self.key(Purpose::Mix).rng();
        for e in encounters {
            if e.distance_band == crate::world::DistanceBand::Far {
                continue;
            }
            let (a, b) = (e.agent_a.index(), e.agent_b.index());
            let (Some(la), Some(lb)) = (self.phones[a].as_ref().map(|p| p.today_level), self.phones[b].as_ref().map(|p| p.today_level)) else {
                continue;
            };
            let handle = ContactHandle(self.next_handle);
            self.next_handle += 1;
            self.handle_peer.insert((e.agent_a, handle), e.agent_b);
            self.handle_peer.insert((e.agent_b, handle), e.agent_a);
            let pairs = if mixnet {
                let ka = ContactKeys::generate(&mut token_rng);
                let kb = ContactKeys::generate(&mut token_rng);
                exchange_tokens(&ka, &kb).ok()
            } else {
                None
            };
            for (me, peer, level, role) in [(a, e.agent_b, lb, Role::Initiator), (b, e.agent_a, la, Role::Responder)] {
                let p = self.phones[me].as_mut().expect("checked");
                if self.options.collect_packets && p.opted_in {
                    self.flow_packets.push(FlowMapPacket {
                        home_zone_id: self.world.agents[me].home_zone_id,
                        day,
                        contact_zone_id: self.world.agents[peer.index()].home_zone_id,
                        received_level: level,
                        old_received_level: None,
                    });
                }
                p.data.record_contact(handle, day, e.duration_min, e.distance_band, level);
                p.outbox.entry(day).or_default().push((peer, handle));
                if let (Some(t), Some((pa, pb))) = (p.transport.as_mut(), &pairs) {
                    t.add_contact(handle, day, if role == Role::Initiator { pa } else { pb }, role);
                }
            }
        }

        // Updates sent yesterday arrive now.
        let mut arrivals: Vec<(AgentId, ContactHandle, u32, RiskLevel)> = std::mem::take(&mut self.direct_queue);
        if let Some(net) = self.network.as_mut() {
            net.run_until(u64::from(day) * SECONDS_PER_DAY);
            for (i, p) in self.phones.iter_mut().enumerate() {
                let Some(p) = p else { continue };
                let Some(t) = p.transport.as_mut() else { continue };
                for r in t.fetch(&net.mailbox, day) {
                    arrivals.push((AgentId(i as u32), r.handle, r.day, r.message.new_level));
                }
                t.purge(day);
            }
            net.mailbox.expire_before(day.saturating_sub(WINDOW_DAYS + 1));
        }
        for (to, handle, d, level) in arrivals {
            let Some(p) = self.phones[to.index()].as_mut() else { continue };
            let old = p.data.contact_log.iter().find(|e| e.handle == handle && e.day == d).map(|e| e.received_level);
            if p.data.apply_update(handle, d, level, day) && self.options.collect_packets && p.opted_in {
                if let Some(peer) = self.handle_peer.get(&(to, handle)) {
                    self.flow_packets.push(FlowMapPacket {
                        home_zone_id: self.world.agents[to.index()].home_zone_id,
                        day: d,
                        contact_zone_id: self.world.agents[peer.index()].home_zone_id,
                        received_level: level,
                        old_received_level: old,
                    });
                }
            }
        }

        let collect = self.options.collect_scores_from.is_some_and(|from| day >= from);
        let mut messages = 0u32;
        let mut outgoing = Vec::new();
        let mut net_rng = self.key(Purpose::MessageDelay).rng();
        for i in 0..self.phones.len() {
            let observed = self.observed[i];
            let Some(p) = self.phones[i].as_mut() else { continue };
            if self.disease[i].dead {
                continue;
            }
            p.data.advance_to(day);
            p.data.log_symptoms(day, observed);
            let start = PhoneData::window_start(day);
            p.purge(start);
            if p.outbox.contains_key(&day) {
                p.sent.entry(day).or_insert(p.today_level);
            }
            let scores = self.predictor.predict(&p.data);
            let mut levels = BTreeMap::new();
            for (k, s) in scores.iter().enumerate() {
                let d = i64::from(day) - i64::from(WINDOW_DAYS) + k as i64;
                if d >= 0 {
                    levels.insert(d as u32, self.quantizer.quantize(*s).unwrap_or(RiskLevel::MAX));
                }
            }
            let packets = self.options.collect_packets && p.opted_in;
            let zone = self.world.agents[i].home_zone_id;
            for d in should_send_update(&p.sent, &levels) {
                let new = levels[&d];
                let prior = p.sent.insert(d, new).unwrap_or_default();
                match (p.transport.as_mut(), self.network.as_mut()) {
                    (Some(t), Some(net)) => {
                        let now = u64::from(day) * SECONDS_PER_DAY;
                        if let Ok(delays) = t.send_risk_update(net, d, new, prior, now, &mut net_rng) {
                            messages += delays.len() as u32;
                        }
                    }
                    _ => {
                        for &(peer, h) in p.outbox.get(&d).into_iter().flatten() {
                            outgoing.push((peer, h, d, new));
                            messages += 1;
                        }
                    }
                }
            }
            let today_score = scores[scores.len() - 1];
            p.today_level = levels[&day];
            if packets {
                for (&d, entry) in p.reported.iter_mut() {
                    let new = levels[&d];
                    if new != entry.0 {
                        self.heat_packets.push(HeatMapPacket::new(zone, d, new, entry.1, Some(entry.0)).expect("nibble fits"));
                        entry.0 = new;
                    }
                }
                let nibble = mobility_nibble(self.outings[i], self.hygiene[i]);
                p.reported.insert(day, (p.today_level, nibble));
                self.heat_packets.push(HeatMapPacket::new(zone, day, p.today_level, nibble, None).expect("nibble fits"));
            }
            self.world.agents[i].recommendation_level = recommendation_level(p.today_level);
            if collect {
                self.scores.push(today_score);
            }
        }
        self.direct_queue = outgoing;
        if let Some(net) = self.network.as_mut() {
            // One phone keeps a canary in flight through the chain.
            let now = u64::from(day) * SECONDS_PER_DAY;
            if let Some(t) = self.phones.iter_mut().flatten().find_map(|p| p.transport.as_mut()) {
                t.canary_check(&net.mailbox, now);
                let _ = t.send_canary(net, now, &mut net_rng);
            }
        }
        messages
    }

    /// Run to the configured horizon.
    pub fn run(mut self) -> RunOutput {
        while self.day < self.cfg.world.n_days {
            self.step_day();
        }
        self.finish()
    }

    fn finish(mut self) -> RunOutput {
        let rts = crate::metrics::rt_series(&self.tree, self.daily.len() as u32, crate::metrics::RT_WINDOW_DAYS);
        for (m, (rt, carried)) in self.daily.iter_mut().zip(rts) {
            m.rt_estimate = rt;
            m.rt_carried = carried;
        }
        let purity = self.cluster_purity();
        let outcomes = self
            .world
            .agents
            .iter()
            .map(|a| {
                let d = &self.disease[a.id.index()];
                AgentOutcome {
                    age: a.age,
                    has_app: a.has_app,
                    infected: d.ever_infected(),
                    symptomatic: d.course.as_ref().is_some_and(|c| !c.asymptomatic) && !d.symptoms_by_day.is_empty(),
                    tested_positive: self.tested_positive[a.id.index()],
                    dead: d.dead,
                    final_recommendation: a.recommendation_level,
                }
            })
            .collect();
        let canary_alarms = self.phones.iter().flatten().filter_map(|p| p.transport.as_ref()).map(|t| t.alarms).sum();
        RunOutput {
            scenario: self.scenario,
            seed: self.seed,
            intervention_day: self.cfg.scenario.intervention_day,
            daily: self.daily,
            tree: self.tree,
            outcomes,
            risky_encounters: self.risky_encounters,
            encounter_infections: self.encounter_infections,
            location_infections: self.location_infections,
            scores: self.scores,
            encounters: self.encounters,
            cluster_purity: purity,
            canary_alarms,
            messages_by_day: self.messages_by_day,
            heat_packets: self.heat_packets,
            flow_packets: self.flow_packets,
        }
    }

    /// Mean purity of every phone's contact clusters against true senders.
    fn cluster_purity(&self) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, p) in self.phones.iter().enumerate() {
            let Some(p) = p else { continue };
            if p.data.contact_log.len() < 2 {
                continue;
            }
            let me = AgentId(i as u32);
            let assignment = cluster_contacts(&p.data.contact_log, self.cfg.risk.cluster_threshold);
            let truth: Vec<u32> = p.data.contact_log.iter().map(|e| self.handle_peer.get(&(me, e.handle)).map_or(u32::MAX, |a| a.0)).collect();
            total += cluster_purity(&assignment, &truth) * p.data.contact_log.len() as f64;
            count += p.data.contact_log.len();
        }
        (count > 0).then(|| total / count as f64)
    }
}
