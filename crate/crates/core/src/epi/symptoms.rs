//! Symptom vocabulary, per-stage prevalence and background cold/flu.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epi::course::DiseaseState;
use crate::epi::curve::Stage;
use crate::error::{Error, Result};
use crate::world::{Agent, AgentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symptom {
    Fever,
    Cough,
    Fatigue,
    Anosmia,
    SoreThroat,
    Headache,
    RunnyNose,
    ShortnessOfBreath,
    Aches,
    Diarrhea,
}

pub const N_SYMPTOMS: usize = 10;

impl Symptom {
    pub const ALL: [Symptom; N_SYMPTOMS] = [
        Symptom::Fever,
        Symptom::Cough,
        Symptom::Fatigue,
        Symptom::Anosmia,
        Symptom::SoreThroat,
        Symptom::Headache,
        Symptom::RunnyNose,
        Symptom::ShortnessOfBreath,
        Symptom::Aches,
        Symptom::Diarrhea,
    ];

    /// How strongly the symptom points at Covid rather than a cold.
    pub fn specificity(self) -> f64 {
        match self {
            Symptom::Anosmia => 3.0,
            Symptom::Fever => 1.5,
            Symptom::ShortnessOfBreath => 1.5,
            Symptom::Cough => 1.0,
            Symptom::Fatigue => 0.8,
            Symptom::Aches => 0.7,
            Symptom::Diarrhea => 0.6,
            Symptom::Headache => 0.5,
            Symptom::SoreThroat => 0.4,
            Symptom::RunnyNose => 0.2,
        }
    }

    /// Symptoms a cold or flu can also produce.
    pub fn shared_with_cold(self) -> bool {
        !matches!(self, Symptom::Anosmia | Symptom::ShortnessOfBreath | Symptom::Diarrhea)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SymptomSet(pub u16);

impl SymptomSet {
    pub fn empty() -> Self {
        SymptomSet(0)
    }

    pub fn insert(&mut self, s: Symptom) {
        self.0 |= 1 << s as u16;
    }

    pub fn contains(self, s: Symptom) -> bool {
        self.0 & (1 << s as u16) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn union(self, other: SymptomSet) -> SymptomSet {
        SymptomSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: SymptomSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Symptom> {
        Symptom::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

/// Daily prevalence of each symptom, in [`Symptom::ALL`] order.
///
/// The shipped numbers are a plausible default, not measured prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymptomTable {
    pub rise: [f64; N_SYMPTOMS],
    pub plateau: [f64; N_SYMPTOMS],
    pub decay: [f64; N_SYMPTOMS],
    /// Chance of shortness of breath for severe cases past the rise.
    pub severe_breathing: f64,
    /// Daily prevalence during a cold or flu.
    pub cold: [f64; N_SYMPTOMS],
}

impl Default for SymptomTable {
    fn default() -> Self {
        SymptomTable {
            rise: [0.30, 0.35, 0.30, 0.15, 0.15, 0.20, 0.05, 0.05, 0.15, 0.05],
            plateau: [0.60, 0.65, 0.60, 0.40, 0.20, 0.30, 0.05, 0.20, 0.35, 0.10],
            decay: [0.20, 0.40, 0.50, 0.30, 0.05, 0.10, 0.03, 0.10, 0.15, 0.05],
            severe_breathing: 0.9,
            cold: [0.15, 0.60, 0.40, 0.0, 0.50, 0.30, 0.70, 0.0, 0.20, 0.0],
        }
    }
}

impl SymptomTable {
    pub fn validate(&self) -> Result<()> {
        let all = self.rise.iter().chain(&self.plateau).chain(&self.decay).chain(&self.cold);
        if all.chain(std::iter::once(&self.severe_breathing)).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("symptoms", "prevalences must be in [0, 1]"));
        }
        for s in Symptom::ALL {
            if !s.shared_with_cold() && self.cold[s as usize] != 0.0 {
                return Err(Error::config("symptoms.cold", "cold symptoms must be shared with Covid"));
            }
        }
        Ok(())
    }

    pub fn for_stage(&self, stage: Stage) -> Option<&[f64; N_SYMPTOMS]> {
        match stage {
            Stage::Incubation | Stage::Rise => Some(&self.rise),
            Stage::Plateau => Some(&self.plateau),
            Stage::Decay => Some(&self.decay),
            Stage::Cleared => None,
        }
    }
}

fn draw<R: Rng>(probs: &[f64; N_SYMPTOMS], rng: &mut R) -> SymptomSet {
    let mut set = SymptomSet::empty();
    for s in Symptom::ALL {
        if rng.gen_bool(probs[s as usize]) {
            set.insert(s);
        }
    }
    set
}

/// Covid symptoms on `day`, evaluated at midday. Asymptomatic agents and
/// days before onset give the empty set.
pub fn sample_symptoms<R: Rng>(state: &DiseaseState, day: u32, table: &SymptomTable, rng: &mut R) -> SymptomSet {
    let (Some(course), Some(t0)) = (state.course.as_ref(), state.infection_time) else {
        return SymptomSet::empty();
    };
    if course.asymptomatic {
        return SymptomSet::empty();
    }
    let t = f64::from(day) + 0.5 - t0.as_days();
    if t < course.symptom_onset_days {
        return SymptomSet::empty();
    }
    let stage = course.curve.stage(t);
    let Some(probs) = table.for_stage(stage) else {
        return SymptomSet::empty();
    };
    let mut set = draw(probs, rng);
    if course.really_sick && matches!(stage, Stage::Plateau | Stage::Decay) && rng.gen_bool(table.severe_breathing) {
        set.insert(Symptom::ShortnessOfBreath);
    }
    set
}

/// One day of cold or flu symptoms.
pub fn cold_symptoms<R: Rng>(table: &SymptomTable, rng: &mut R) -> SymptomSet {
    draw(&table.cold, rng)
}

fn cold_weight(agent: &Agent) -> f64 {
    match agent.age {
        0..=9 => 2.5,
        10..=19 => 1.5,
        70.. => 1.2,
        _ => 1.0,
    }
}

/// Pick the agents who catch a cold or flu this round; about `rate` of the
/// population, weighted toward children.
pub fn sample_background_illness<R: Rng>(agents: &[Agent], rate: f64, rng: &mut R) -> Vec<AgentId> {
    if agents.is_empty() {
        return Vec::new();
    }
    let mean_w = agents.iter().map(cold_weight).sum::<f64>() / agents.len() as f64;
    agents
        .iter()
        .filter(|a| rng.gen_bool((rate * cold_weight(a) / mean_w).min(1.0)))
        .map(|a| a.id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DiseaseConfig, WorldConfig};
    use crate::epi::course::{sample_disease_course, ExposureSource, SimTime};
    use crate::rng::{Purpose, StreamKey};
    use crate::world::build_world;

    fn infected_state(asymptomatic: bool) -> DiseaseState {
        let cfg = DiseaseConfig::default();
        let w = build_world(&WorldConfig::default()).unwrap();
        let mut rng = StreamKey::new(2, Purpose::DiseaseCourse).rng();
        let mut course = sample_disease_course(&w.agents[0], &cfg, &mut rng);
        course.asymptomatic = asymptomatic;
        course.really_sick = false;
        course.symptom_onset_days = 1.0;
        let mut s = DiseaseState::default();
        s.infect(SimTime { day: 0, slot: 0 }, course, ExposureSource::Seed);
        s
    }

    #[test]
    fn asymptomatic_never_has_symptoms() {
        let s = infected_state(true);
        let mut rng = StreamKey::new(1, Purpose::Symptoms).rng();
        for day in 0..20 {
            assert!(sample_symptoms(&s, day, &SymptomTable::default(), &mut rng).is_empty());
        }
    }

    #[test]
    fn nothing_before_onset() {
        let s = infected_state(false);
        let mut rng = StreamKey::new(1, Purpose::Symptoms).rng();
        // Day 0 midday is 0.5 days after infection, before the 1.0-day onset.
        for _ in 0..100 {
            assert!(sample_symptoms(&s, 0, &SymptomTable::default(), &mut rng).is_empty());
        }
    }

    #[test]
    fn plateau_frequencies_match_table() {
        let s = infected_state(false);
        let c = s.course.as_ref().unwrap().curve;
        let day = (c.plateau_start() + 0.01).ceil() as u32;
        assert_eq!(c.stage(f64::from(day) + 0.5), Stage::Plateau, "pick a plateau day");
        let table = SymptomTable::default();
        let mut rng = StreamKey::new(9, Purpose::Symptoms).rng();
        let n = 10_000;
        let mut counts = [0usize; N_SYMPTOMS];
        for _ in 0..n {
            for sym in sample_symptoms(&s, day, &table, &mut rng).iter() {
                counts[sym as usize] += 1;
            }
        }
        for sym in Symptom::ALL {
            let f = counts[sym as usize] as f64 / n as f64;
            assert!((f - table.plateau[sym as usize]).abs() < 0.02, "{sym:?}: {f}");
        }
    }

    #[test]
    fn background_illness_rate_and_vocabulary() {
        let w = build_world(&WorldConfig {
            population: 10_000,
            location_counts: crate::config::LocationCounts { household: 4000, ..Default::default() },
            ..Default::default()
        })
        .unwrap();
        let mut rng = StreamKey::new(4, Purpose::BackgroundIllness).rng();
        let flagged = sample_background_illness(&w.agents, 0.01, &mut rng);
        assert!((80..=120).contains(&flagged.len()), "{}", flagged.len());
        let table = SymptomTable::default();
        let covid_vocab = SymptomSet(u16::MAX >> (16 - N_SYMPTOMS));
        for _ in 0..1000 {
            let s = cold_symptoms(&table, &mut rng);
            assert!(s.is_subset(covid_vocab));
            assert!(!s.contains(Symptom::Anosmia));
        }
    }

    #[test]
    fn set_operations() {
        let mut a = SymptomSet::empty();
        a.insert(Symptom::Cough);
        a.insert(Symptom::Fever);
        assert_eq!(a.len(), 2);
        assert!(a.contains(Symptom::Cough));
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![Symptom::Fever, Symptom::Cough]);
        let mut b = SymptomSet::empty();
        b.insert(Symptom::Cough);
        assert!(b.is_subset(a));
        assert!(!a.is_subset(b));
    }
}
