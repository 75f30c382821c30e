//! Phone-side observations and the contagiousness predictor seam.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::epi::symptoms::{Symptom, SymptomSet};
use crate::risk::cluster::cluster_contacts;
use crate::risk::quantizer::{Quantizer, RiskLevel};
use crate::risk::WINDOW_DAYS;
use crate::world::encounter::DistanceBand;
use crate::world::{Agent, Conditions, Sex};

/// Number of daily scores a predictor returns: the past window plus today.
pub const N_SCORES: usize = WINDOW_DAYS as usize + 1;

/// Scores for days `today - 14 ..= today`; the last entry is today.
pub type Scores = [f64; N_SCORES];

/// Opaque reference the host uses to route messages for a contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContactHandle(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticInfo {
    pub age_band: u8,
    pub sex: Sex,
    pub conditions: Conditions,
    pub healthcare_worker: bool,
}

impl StaticInfo {
    pub fn of(agent: &Agent) -> Self {
        StaticInfo {
            age_band: agent.age / 10,
            sex: agent.sex,
            conditions: agent.preexisting_conditions,
            healthcare_worker: agent.is_healthcare_worker,
        }
    }
}

/// A test result the user entered once it came back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedTest {
    pub sample_day: u32,
    pub result_day: u32,
    pub positive: bool,
}

/// One logged contact. Only day granularity is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactLogEntry {
    pub handle: ContactHandle,
    pub day: u32,
    pub duration_min: f64,
    pub distance_band: DistanceBand,
    pub received_level: RiskLevel,
    pub prior_level: Option<RiskLevel>,
    pub arrival_day_of_last_update: u32,
    pub cluster_id: Option<u32>,
}

impl ContactLogEntry {
    pub fn level_sequence(&self) -> ([RiskLevel; 2], usize) {
        match self.prior_level {
            Some(p) => ([p, self.received_level], 2),
            None => ([self.received_level, self.received_level], 1),
        }
    }
}

/// Everything a phone knows about its user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneData {
    pub static_info: StaticInfo,
    pub symptoms_by_day: BTreeMap<u32, SymptomSet>,
    pub test_results: Vec<ObservedTest>,
    pub contact_log: Vec<ContactLogEntry>,
    pub day_cursor: u32,
}

impl PhoneData {
    pub fn new(static_info: StaticInfo) -> Self {
        PhoneData {
            static_info,
            symptoms_by_day: BTreeMap::new(),
            test_results: Vec::new(),
            contact_log: Vec::new(),
            day_cursor: 0,
        }
    }

    /// First day still inside the window at `today`.
    pub fn window_start(today: u32) -> u32 {
        today.saturating_sub(WINDOW_DAYS)
    }

    /// Move to `today` and forget anything older than the window.
    pub fn advance_to(&mut self, today: u32) {
        self.day_cursor = today;
        let start = Self::window_start(today);
        self.contact_log.retain(|e| e.day >= start);
        self.symptoms_by_day = self.symptoms_by_day.split_off(&start);
        self.test_results.retain(|t| t.result_day + WINDOW_DAYS >= today);
    }

    pub fn log_symptoms(&mut self, day: u32, symptoms: SymptomSet) {
        if !symptoms.is_empty() {
            self.symptoms_by_day.insert(day, symptoms);
        }
    }

    pub fn record_contact(&mut self, handle: ContactHandle, day: u32, duration_min: f64, band: DistanceBand, level: RiskLevel) {
        self.contact_log.push(ContactLogEntry {
            handle,
            day,
            duration_min,
            distance_band: band,
            received_level: level,
            prior_level: None,
            arrival_day_of_last_update: day,
            cluster_id: None,
        });
    }

    /// Apply an update for the contact behind `handle` on `day`. Returns
    /// false when no such entry is in the log.
    pub fn apply_update(&mut self, handle: ContactHandle, day: u32, level: RiskLevel, arrival_day: u32) -> bool {
        let mut hit = false;
        for e in self.contact_log.iter_mut().filter(|e| e.handle == handle && e.day == day) {
            e.prior_level = Some(e.received_level);
            e.received_level = level;
            e.arrival_day_of_last_update = arrival_day;
            hit = true;
        }
        hit
    }

    pub fn has_positive_test(&self) -> bool {
        self.test_results.iter().any(|t| t.positive)
    }
}

/// Stable in-process predictor interface. Implementations must be
/// stateless or internally synchronized.
pub trait RiskPredictor: Send + Sync {
    fn predict(&self, data: &PhoneData) -> Scores;
}

/// Hand-tuned baseline combining prior, cluster-aware exposure, symptoms
/// and test results in log-odds space.
#[derive(Debug, Clone)]
pub struct HeuristicPredictor {
    quantizer: Quantizer<f64>,
    pub cluster_threshold: f64,
    pub base_prior: f64,
    pub contact_strength: f64,
    pub symptom_weight: f64,
    pub cold_discount: f64,
    pub negative_test_odds: f64,
}

impl HeuristicPredictor {
    pub fn new(quantizer: Quantizer<f64>, cluster_threshold: f64) -> Self {
        HeuristicPredictor {
            quantizer,
            cluster_threshold,
            base_prior: 0.001,
            contact_strength: 0.01,
            symptom_weight: 0.35,
            cold_discount: 0.5,
            negative_test_odds: 0.2,
        }
    }

    pub fn quantizer(&self) -> &Quantizer<f64> {
        &self.quantizer
    }

    pub fn prior(&self, s: &StaticInfo) -> f64 {
        let age = 1.0 + 0.1 * f64::from(s.age_band.min(9));
        let cond = 1.0 + 0.2 * f64::from(s.conditions.count());
        let hcw = if s.healthcare_worker { 2.0 } else { 1.0 };
        (self.base_prior * age * cond * hcw).min(0.5)
    }

    /// Score of a phone with no observations.
    pub fn baseline(&self, s: &StaticInfo) -> f64 {
        self.prior(s)
    }

    fn symptom_weight_of(&self, set: SymptomSet) -> f64 {
        let strong = set.contains(Symptom::Fever) && set.contains(Symptom::Anosmia);
        set.iter()
            .map(|s| {
                let w = s.specificity();
                if s.shared_with_cold() && !strong {
                    w * self.cold_discount
                } else {
                    w
                }
            })
            .sum()
    }

    fn transmission_given_contagious(&self, e: &ContactLogEntry) -> f64 {
        let dist = match e.distance_band {
            DistanceBand::Close => 1.0,
            DistanceBand::Medium => 0.3,
            DistanceBand::Far => 0.0,
        };
        let dur = (e.duration_min / 15.0).min(8.0);
        1.0 - (-self.contact_strength * dur * dist).exp()
    }
}

fn odds(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0 - 1e-12);
    p / (1.0 - p)
}

impl RiskPredictor for HeuristicPredictor {
    fn predict(&self, data: &PhoneData) -> Scores {
        let today = data.day_cursor;
        let first_day = i64::from(today) - i64::from(WINDOW_DAYS);
        let prior = self.prior(&data.static_info);
        let clusters = cluster_contacts(&data.contact_log, self.cluster_threshold);
        let n_clusters = clusters.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let t: Vec<f64> = data.contact_log.iter().map(|e| self.transmission_given_contagious(e)).collect();
        let q: Vec<f64> = data.contact_log.iter().map(|e| self.quantizer.representative(e.received_level)).collect();

        let symptom_w: BTreeMap<u32, f64> =
            data.symptoms_by_day.iter().map(|(&d, &s)| (d, self.symptom_weight_of(s))).collect();

        let positive_from = data
            .test_results
            .iter()
            .filter(|r| r.positive && r.result_day <= today)
            .map(|r| {
                let onset = data
                    .symptoms_by_day
                    .range(r.sample_day.saturating_sub(WINDOW_DAYS)..=r.sample_day)
                    .next()
                    .map(|(&d, _)| d);
                i64::from(onset.unwrap_or(r.sample_day.saturating_sub(5))) - 2
            })
            .min();

        let mut q_max = vec![0.0f64; n_clusters];
        let mut miss = vec![1.0f64; n_clusters];
        let mut scores = [0.0; N_SCORES];
        for (i, score) in scores.iter_mut().enumerate() {
            let d = first_day + i as i64;
            if positive_from.is_some_and(|from| d >= from) {
                *score = 1.0;
                continue;
            }
            // Contagious on day d needs infection two to twelve days earlier.
            q_max.iter_mut().for_each(|v| *v = 0.0);
            miss.iter_mut().for_each(|v| *v = 1.0);
            for (k, e) in data.contact_log.iter().enumerate() {
                let gap = d - i64::from(e.day);
                if (2..=12).contains(&gap) {
                    let c = clusters[k] as usize;
                    q_max[c] = q_max[c].max(q[k]);
                    miss[c] *= 1.0 - t[k];
                }
            }
            let escape: f64 = q_max.iter().zip(&miss).map(|(q, m)| 1.0 - q * (1.0 - m)).product();
            let p = 1.0 - (1.0 - prior) * escape;

            let lo = (d - 2).max(0) as u32;
            let hi = (d + 7).max(0) as u32;
            let s: f64 = if hi >= lo { symptom_w.range(lo..=hi).map(|(_, w)| w).sum() } else { 0.0 };
            let mut o = odds(p) * (self.symptom_weight * s.min(25.0)).exp();
            for r in data.test_results.iter().filter(|r| !r.positive && r.result_day <= today) {
                let sd = i64::from(r.sample_day);
                if d >= sd - 3 && d <= sd {
                    o *= self.negative_test_odds;
                }
            }
            *score = (o / (1.0 + o)).clamp(0.0, 1.0);
        }
        scores
    }
}
