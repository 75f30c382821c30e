//! Per-agent disease course and state.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{DiseaseConfig, SLOTS_PER_DAY};
use crate::epi::curve::ViralLoadCurve;
use crate::epi::symptoms::SymptomSet;
use crate::world::{Agent, AgentId, LocationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Susceptible,
    Exposed,
    Infectious,
    /// Includes deaths.
    Recovered,
}

/// A day and 15-minute slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimTime {
    pub day: u32,
    pub slot: u16,
}

impl SimTime {
    pub fn as_days(self) -> f64 {
        f64::from(self.day) + f64::from(self.slot) / f64::from(SLOTS_PER_DAY)
    }
}

/// Who or what caused an infection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureSource {
    /// Seeded at day 0.
    Seed,
    Agent(AgentId),
    /// Residual contamination at a location; `depositor` is the infectious
    /// visitor who contributed most of the hazard.
    Location { location: LocationId, depositor: AgentId },
}

impl ExposureSource {
    /// The infecting agent, for the infection tree.
    pub fn parent(self) -> Option<AgentId> {
        match self {
            ExposureSource::Seed => None,
            ExposureSource::Agent(a) => Some(a),
            ExposureSource::Location { depositor, .. } => Some(depositor),
        }
    }
}

/// Sampled once at infection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseCourse {
    pub curve: ViralLoadCurve<f64>,
    pub asymptomatic: bool,
    pub really_sick: bool,
    pub extremely_sick: bool,
    pub fatal: bool,
    /// Days after infection when symptoms can start.
    pub symptom_onset_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseState {
    pub status: Status,
    pub infection_time: Option<SimTime>,
    pub course: Option<DiseaseCourse>,
    pub exposure_source: Option<ExposureSource>,
    pub symptoms_by_day: BTreeMap<u32, SymptomSet>,
    pub dead: bool,
}

impl Default for DiseaseState {
    fn default() -> Self {
        DiseaseState {
            status: Status::Susceptible,
            infection_time: None,
            course: None,
            exposure_source: None,
            symptoms_by_day: BTreeMap::new(),
            dead: false,
        }
    }
}

impl DiseaseState {
    /// Move a susceptible agent to exposed. Returns false if already infected.
    pub fn infect(&mut self, at: SimTime, course: DiseaseCourse, source: ExposureSource) -> bool {
        if self.status != Status::Susceptible {
            return false;
        }
        self.status = Status::Exposed;
        self.infection_time = Some(at);
        self.course = Some(course);
        self.exposure_source = Some(source);
        true
    }

    pub fn is_infected(&self) -> bool {
        matches!(self.status, Status::Exposed | Status::Infectious)
    }

    pub fn ever_infected(&self) -> bool {
        self.status != Status::Susceptible
    }

    /// Days since infection at absolute time `t` (in days), if infected.
    pub fn days_since_infection(&self, t: f64) -> Option<f64> {
        self.infection_time.map(|t0| t - t0.as_days()).filter(|d| *d >= 0.0)
    }

    pub fn viral_load_at(&self, t: f64) -> f64 {
        match (&self.course, self.days_since_infection(t)) {
            (Some(c), Some(dt)) => c.curve.load(dt),
            _ => 0.0,
        }
    }

    /// Absolute day (fractional) at which infectiousness ends.
    pub fn infectious_end(&self) -> Option<f64> {
        Some(self.infection_time?.as_days() + self.course.as_ref()?.curve.end())
    }

    /// Advance the compartment to absolute time `t`. Status never moves
    /// backwards.
    pub fn advance(&mut self, t: f64) {
        let (Some(course), Some(dt)) = (&self.course, self.days_since_infection(t)) else { return };
        let end = course.curve.end();
        let fatal = course.fatal;
        let next = if dt >= end {
            Status::Recovered
        } else if dt >= course.curve.incubation_days {
            Status::Infectious
        } else {
            Status::Exposed
        };
        if next > self.status {
            self.status = next;
            if next == Status::Recovered && fatal {
                self.dead = true;
            }
        }
    }

    /// Whether the agent is symptomatic and coughing on `day`.
    pub fn coughing(&self, day: u32) -> bool {
        self.symptoms_by_day.get(&day).is_some_and(|s| s.contains(crate::epi::Symptom::Cough))
    }
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, min: f64) -> f64 {
    let normal = Normal::new(mean, sd.max(1e-9)).expect("valid normal");
    for _ in 0..1000 {
        let v = normal.sample(rng);
        if v >= min {
            return v;
        }
    }
    min
}

/// Plateau height as a linear function of age decade: the young value
/// below 20, the old value from 80.
pub fn plateau_height(age: u8, cfg: &DiseaseConfig) -> f64 {
    let decade = u32::from(age / 10).clamp(1, 8);
    cfg.plateau_height_young + (cfg.plateau_height_old - cfg.plateau_height_young) * f64::from(decade - 1) / 7.0
}

/// Multiplicative severity modifiers. The reference agent (20-59, no
/// conditions) has all factors equal to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityFactors {
    pub asymptomatic: f64,
    pub really_sick: f64,
    pub extremely_sick: f64,
    pub fatal: f64,
}

pub fn severity_factors(agent: &Agent) -> SeverityFactors {
    let (asym, sick, extreme, fatal) = match agent.age {
        0..=19 => (1.2, 0.25, 0.5, 0.2),
        20..=59 => (1.0, 1.0, 1.0, 1.0),
        60..=69 => (0.9, 2.0, 1.2, 3.0),
        70..=79 => (0.85, 3.0, 1.4, 6.0),
        _ => (0.8, 4.0, 1.5, 10.0),
    };
    let conditions = f64::from(agent.preexisting_conditions.count());
    SeverityFactors {
        asymptomatic: asym * 0.95f64.powf(conditions),
        really_sick: sick * (1.0 + 0.5 * conditions),
        extremely_sick: extreme * (1.0 + 0.2 * conditions),
        fatal: fatal * (1.0 + 0.5 * conditions),
    }
}

/// Sample a fresh disease course for a newly exposed agent.
///
/// Severity is nested: really-sick cases are drawn among symptomatic ones,
/// extremely-sick among really-sick ones, and fatal among extremely-sick
/// ones. The conditional probabilities are chosen so the reference agent's
/// marginal rates equal the configured ones.
pub fn sample_disease_course<R: Rng>(agent: &Agent, cfg: &DiseaseConfig, rng: &mut R) -> DiseaseCourse {
    let f = severity_factors(agent);
    let p_asym = (cfg.asymptomatic_prob * f.asymptomatic).min(1.0);
    let asymptomatic = rng.gen_bool(p_asym);
    let symptomatic_share = (1.0 - cfg.asymptomatic_prob).max(1e-9);
    let p_sick = (cfg.really_sick_prob / symptomatic_share * f.really_sick).min(1.0);
    let really_sick = !asymptomatic && rng.gen_bool(p_sick);
    let p_extreme = (cfg.extremely_sick_given_really_sick * f.extremely_sick).min(1.0);
    let extremely_sick = really_sick && rng.gen_bool(p_extreme);
    let extreme_share = (cfg.really_sick_prob * cfg.extremely_sick_given_really_sick).max(1e-12);
    let p_fatal = (cfg.fatal_prob / extreme_share * f.fatal).min(1.0);
    let fatal = extremely_sick && rng.gen_bool(p_fatal);

    let m = cfg.min_duration_days;
    let curve = ViralLoadCurve::new(
        truncated_normal(rng, cfg.incubation_mean_days, cfg.incubation_sd_days, m),
        truncated_normal(rng, cfg.rise_mean_days, cfg.rise_sd_days, m),
        plateau_height(agent.age, cfg),
        truncated_normal(rng, cfg.plateau_mean_days, cfg.plateau_sd_days, m),
        truncated_normal(rng, cfg.decay_mean_days, cfg.decay_sd_days, m),
    )
    .expect("truncated durations are positive");
    let symptom_onset_days = truncated_normal(rng, cfg.symptom_onset_mean_days, cfg.symptom_onset_sd_days, m);
    DiseaseCourse { curve, asymptomatic, really_sick, extremely_sick, fatal, symptom_onset_days }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldConfig;
    use crate::rng::{Purpose, StreamKey};
    use crate::world::{build_world, Conditions};

    fn reference_agent() -> Agent {
        let mut a = build_world(&WorldConfig::default()).unwrap().agents[0].clone();
        a.age = 35;
        a.preexisting_conditions = Conditions::default();
        a
    }

    #[test]
    fn plateau_height_spans_configured_range() {
        let cfg = DiseaseConfig::default();
        assert_eq!(plateau_height(5, &cfg), 0.5);
        assert_eq!(plateau_height(19, &cfg), 0.5);
        assert!((plateau_height(85, &cfg) - 0.9).abs() < 1e-12);
        assert!(plateau_height(45, &cfg) > plateau_height(25, &cfg));
    }

    #[test]
    fn durations_respect_truncation() {
        let cfg = DiseaseConfig { incubation_sd_days: 5.0, ..DiseaseConfig::default() };
        let a = reference_agent();
        let mut rng = StreamKey::new(1, Purpose::DiseaseCourse).rng();
        for _ in 0..5000 {
            let c = sample_disease_course(&a, &cfg, &mut rng);
            assert!(c.curve.incubation_days >= 0.5);
            assert!(c.curve.rise_days >= 0.5);
            assert!(c.symptom_onset_days >= 0.5);
        }
    }

    #[test]
    fn extremely_sick_requires_really_sick() {
        let cfg = DiseaseConfig { really_sick_prob: 0.0, ..DiseaseConfig::default() };
        let a = reference_agent();
        let mut rng = StreamKey::new(3, Purpose::DiseaseCourse).rng();
        for _ in 0..10_000 {
            let c = sample_disease_course(&a, &cfg, &mut rng);
            assert!(!c.really_sick && !c.extremely_sick && !c.fatal);
        }
    }

    #[test]
    fn status_only_moves_forward() {
        let a = reference_agent();
        let cfg = DiseaseConfig::default();
        let mut rng = StreamKey::new(3, Purpose::DiseaseCourse).rng();
        let course = sample_disease_course(&a, &cfg, &mut rng);
        let end = course.curve.end();
        let mut s = DiseaseState::default();
        assert!(s.infect(SimTime { day: 2, slot: 48 }, course.clone(), ExposureSource::Seed));
        assert!(!s.infect(SimTime { day: 3, slot: 0 }, course, ExposureSource::Seed));
        s.advance(2.5 + end + 1.0);
        assert_eq!(s.status, Status::Recovered);
        s.advance(3.0);
        assert_eq!(s.status, Status::Recovered);
    }
}
