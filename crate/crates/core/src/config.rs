//! Run configuration.
//!
//! A run is described by one TOML document. Every table and every key is
//! optional; missing values take the defaults below. Example:
//!
//! ```toml
//! [world]
//! population = 1000
//! n_days = 30
//! app_adoption = 0.6
//! seed = 7
//!
//! [world.location_counts]
//! household = 420
//! workplace = 50
//!
//! [disease]
//! base_rate = 0.02
//!
//! [scenario]
//! intervention_day = 4
//! ```

use serde::{Deserialize, Serialize};

use crate::epi::symptoms::SymptomTable;
use crate::error::{Error, Result};

/// Number of 15-minute slots in a simulated day.
pub const SLOTS_PER_DAY: u16 = 96;
/// First slot (07:00) in which co-location is recorded as an encounter.
pub const WAKE_SLOT: u16 = 28;
/// First night slot (23:00); encounters are not recorded from here on.
pub const SLEEP_SLOT: u16 = 92;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationCounts {
    pub household: u32,
    pub store: u32,
    pub park: u32,
    pub hospital: u32,
    pub icu: u32,
    pub nursing_home: u32,
    pub workplace: u32,
    pub transit: u32,
}

impl Default for LocationCounts {
    fn default() -> Self {
        LocationCounts {
            household: 420,
            store: 12,
            park: 6,
            hospital: 1,
            icu: 1,
            nursing_home: 1,
            workplace: 50,
            transit: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub population: u32,
    pub n_days: u32,
    /// Fixed at 15.
    pub slot_minutes: u32,
    pub location_counts: LocationCounts,
    pub app_adoption: f64,
    pub seed: u64,
    pub initial_infected: u32,
    /// Regular zones; households are dealt round-robin into these.
    pub zone_count: u32,
    /// Extra zones that only receive a handful of households, so that
    /// small-zone lumping is exercised.
    pub small_zones: u32,
    /// Target residents per small zone (kept below 100).
    pub small_zone_residents: u32,
    /// Fraction of working-age agents with a workplace (schools count).
    pub employment_rate: f64,
    /// Fraction of workers employed by the hospital.
    pub healthcare_worker_rate: f64,
    /// Fraction of workers commuting through transit.
    pub transit_use_rate: f64,
    /// Fraction of non-healthcare workers able to work from home.
    pub work_from_home_rate: f64,
    /// Fraction of agents aged 80+ living in a nursing home.
    pub nursing_home_rate: f64,
    /// Days of the week (day % 7) without work anchors.
    pub weekend: Vec<u32>,
    /// Location-mediated residual infection.
    pub environmental_transmission: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            population: 1000,
            n_days: 30,
            slot_minutes: 15,
            location_counts: LocationCounts::default(),
            app_adoption: 0.6,
            seed: 0,
            initial_infected: 10,
            zone_count: 4,
            small_zones: 2,
            small_zone_residents: 40,
            employment_rate: 0.75,
            healthcare_worker_rate: 0.04,
            transit_use_rate: 0.4,
            work_from_home_rate: 0.5,
            nursing_home_rate: 0.3,
            weekend: vec![5, 6],
            environmental_transmission: true,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::config("population", "must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.app_adoption) {
            return Err(Error::config("app_adoption", format!("{} not in [0, 1]", self.app_adoption)));
        }
        if self.slot_minutes != 15 {
            return Err(Error::config("slot_minutes", "only 15-minute slots are supported"));
        }
        if self.initial_infected > self.population {
            return Err(Error::config("initial_infected", "exceeds population"));
        }
        if self.location_counts.household == 0 || self.location_counts.household > self.population {
            return Err(Error::config("location_counts.household", "must be in 1..=population"));
        }
        if self.zone_count == 0 {
            return Err(Error::config("zone_count", "must be at least 1"));
        }
        if self.small_zone_residents >= 100 {
            return Err(Error::config("small_zone_residents", "small zones must stay below 100 residents"));
        }
        for (name, v) in [
            ("employment_rate", self.employment_rate),
            ("healthcare_worker_rate", self.healthcare_worker_rate),
            ("transit_use_rate", self.transit_use_rate),
            ("work_from_home_rate", self.work_from_home_rate),
            ("nursing_home_rate", self.nursing_home_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} not in [0, 1]")));
            }
        }
        let lc = &self.location_counts;
        if self.employment_rate > 0.0 && lc.workplace == 0 {
            return Err(Error::config("location_counts.workplace", "needed when employment_rate > 0"));
        }
        if lc.store + lc.park == 0 {
            return Err(Error::config("location_counts.store", "at least one store or park is required"));
        }
        if self.weekend.iter().any(|&d| d > 6) {
            return Err(Error::config("weekend", "days of week are 0..=6"));
        }
        Ok(())
    }
}

/// Disease constants. Names follow what the value controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiseaseConfig {
    /// Calibration scalar of the per-encounter transmission kernel.
    pub base_rate: f64,
    /// Scale of location-mediated residual hazard.
    pub environmental_rate: f64,
    pub asymptomatic_prob: f64,
    pub really_sick_prob: f64,
    pub extremely_sick_given_really_sick: f64,
    pub fatal_prob: f64,
    pub asymptomatic_infectiousness: f64,
    /// Infectiousness multiplier for symptomatic agents who cough.
    pub cough_multiplier: f64,
    pub incubation_mean_days: f64,
    pub incubation_sd_days: f64,
    pub rise_mean_days: f64,
    pub rise_sd_days: f64,
    pub plateau_mean_days: f64,
    pub plateau_sd_days: f64,
    pub decay_mean_days: f64,
    pub decay_sd_days: f64,
    pub symptom_onset_mean_days: f64,
    pub symptom_onset_sd_days: f64,
    /// Lower truncation for every sampled duration.
    pub min_duration_days: f64,
    /// Plateau height for agents under 20.
    pub plateau_height_young: f64,
    /// Plateau height for agents 80 and over.
    pub plateau_height_old: f64,
    pub mask_efficacy_healthcare: f64,
    pub mask_efficacy_other: f64,
    pub hygiene_factor: f64,
    /// Cap on the duration factor, in 15-minute units.
    pub duration_cap: f64,
    /// Distance factors for close, medium and far bands.
    pub distance_factors: [f64; 3],
    pub background_illness_rate: f64,
    pub background_illness_days: u32,
    pub symptoms: SymptomTable,
}

impl Default for DiseaseConfig {
    fn default() -> Self {
        DiseaseConfig {
            base_rate: 0.022,
            environmental_rate: 0.0001,
            asymptomatic_prob: 0.40,
            really_sick_prob: 0.15,
            extremely_sick_given_really_sick: 0.30,
            fatal_prob: 0.002,
            asymptomatic_infectiousness: 0.1,
            cough_multiplier: 1.5,
            incubation_mean_days: 2.5,
            incubation_sd_days: 1.0,
            rise_mean_days: 2.5,
            rise_sd_days: 1.0,
            plateau_mean_days: 5.0,
            plateau_sd_days: 1.5,
            decay_mean_days: 5.0,
            decay_sd_days: 1.5,
            symptom_onset_mean_days: 2.5,
            symptom_onset_sd_days: 1.0,
            min_duration_days: 0.5,
            plateau_height_young: 0.5,
            plateau_height_old: 0.9,
            mask_efficacy_healthcare: 0.98,
            mask_efficacy_other: 0.32,
            hygiene_factor: 0.8,
            duration_cap: 8.0,
            distance_factors: [1.0, 0.3, 0.0],
            background_illness_rate: 0.01,
            background_illness_days: 7,
            symptoms: SymptomTable::default(),
        }
    }
}

impl DiseaseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("asymptomatic_prob", self.asymptomatic_prob),
            ("really_sick_prob", self.really_sick_prob),
            ("extremely_sick_given_really_sick", self.extremely_sick_given_really_sick),
            ("fatal_prob", self.fatal_prob),
            ("asymptomatic_infectiousness", self.asymptomatic_infectiousness),
            ("mask_efficacy_healthcare", self.mask_efficacy_healthcare),
            ("mask_efficacy_other", self.mask_efficacy_other),
            ("hygiene_factor", self.hygiene_factor),
            ("background_illness_rate", self.background_illness_rate),
            ("plateau_height_young", self.plateau_height_young),
            ("plateau_height_old", self.plateau_height_old),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} not in [0, 1]")));
            }
        }
        if self.base_rate < 0.0 {
            return Err(Error::config("base_rate", "must be non-negative"));
        }
        if self.environmental_rate < 0.0 {
            return Err(Error::config("environmental_rate", "must be non-negative"));
        }
        if self.cough_multiplier < 1.0 {
            return Err(Error::config("cough_multiplier", "must be at least 1"));
        }
        if self.min_duration_days <= 0.0 {
            return Err(Error::config("min_duration_days", "must be positive"));
        }
        if self.duration_cap <= 0.0 {
            return Err(Error::config("duration_cap", "must be positive"));
        }
        if self.distance_factors.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config("distance_factors", "entries must be in [0, 1]"));
        }
        if self.distance_factors[2] != 0.0 {
            return Err(Error::config("distance_factors", "the far band must not transmit"));
        }
        self.symptoms.validate()
    }
}

/// Lab test model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub turnaround_days: u32,
    /// Tests available per day; `None` means unconstrained.
    pub daily_capacity: Option<u32>,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig { false_positive_rate: 0.0, false_negative_rate: 0.10, turnaround_days: 1, daily_capacity: None }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.false_positive_rate) {
            return Err(Error::config("false_positive_rate", "not in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.false_negative_rate) {
            return Err(Error::config("false_negative_rate", "not in [0, 1]"));
        }
        Ok(())
    }
}

/// Mobility and health-seeking behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    /// Mean discretionary outings per weekday.
    pub weekday_outings: f64,
    pub weekend_outings: f64,
    /// Mean extra stops chained onto an outing.
    pub extra_stops: f64,
    /// Probability a stop goes to a location outside the agent's favourites.
    pub explore_prob: f64,
    /// Share of outings that go to a store rather than a park.
    pub store_share: f64,
    /// Outing multiplier at recommendation level 4.
    pub quarantine_outing_factor: f64,
    /// Pre-intervention chance of masking outside the household, scaled by mask propensity.
    pub baseline_mask_rate: f64,
    /// Daily chance that an agent with symptoms asks for a test.
    pub symptomatic_test_prob: f64,
    /// Probability that a shifted band moves one step farther under 2m distancing.
    pub distancing_shift_prob: f64,
    pub quarantine_days: u32,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig {
            weekday_outings: 1.0,
            weekend_outings: 1.6,
            extra_stops: 0.4,
            explore_prob: 0.15,
            store_share: 0.65,
            quarantine_outing_factor: 0.1,
            baseline_mask_rate: 0.1,
            symptomatic_test_prob: 0.2,
            distancing_shift_prob: 0.5,
            quarantine_days: 14,
        }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("explore_prob", self.explore_prob),
            ("store_share", self.store_share),
            ("quarantine_outing_factor", self.quarantine_outing_factor),
            ("baseline_mask_rate", self.baseline_mask_rate),
            ("symptomatic_test_prob", self.symptomatic_test_prob),
            ("distancing_shift_prob", self.distancing_shift_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} not in [0, 1]")));
            }
        }
        if self.weekday_outings < 0.0 || self.weekend_outings < 0.0 || self.extra_stops < 0.0 {
            return Err(Error::config("weekday_outings", "outing rates must be non-negative"));
        }
        Ok(())
    }
}

/// Scenario comparison settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub intervention_day: u32,
    /// Distancing strength of the social-distancing reference scenario.
    pub distancing_reference: f64,
    /// Relative mobility gap accepted by the equalizer.
    pub equalization_tolerance: f64,
    pub max_bisection_steps: u32,
    /// Days a contact stays traceable.
    pub tracing_window_days: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            intervention_day: 4,
            distancing_reference: 0.5,
            equalization_tolerance: 0.01,
            max_bisection_steps: 40,
            tracing_window_days: 14,
        }
    }
}

/// How risk messages travel between phones inside a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessagePath {
    /// Delivery with the protocol's random delay, without encryption.
    Direct,
    /// Full token exchange, onion routing and mailbox fetch.
    Mixnet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub message_path: MessagePath,
    pub mix_servers: u32,
    pub batch_threshold: u32,
    pub null_crypto: bool,
    pub daily_post_quota: u32,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            message_path: MessagePath::Direct,
            mix_servers: 3,
            batch_threshold: 8,
            null_crypto: true,
            daily_post_quota: 1000,
        }
    }
}

/// Phone-side risk engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub cluster_threshold: f64,
    /// Overrides the shipped quantizer thresholds when present.
    pub thresholds: Option<Vec<f64>>,
    /// Fraction of app users who opt in to research packets.
    pub opt_in_rate: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig { cluster_threshold: 0.35, thresholds: None, opt_in_rate: 1.0 }
    }
}

/// The whole run document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub disease: DiseaseConfig,
    pub testing: TestConfig,
    pub behavior: BehaviorConfig,
    pub scenario: ScenarioConfig,
    pub transport: TransportConfig,
    pub risk: RiskConfig,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.disease.validate()?;
        self.testing.validate()?;
        self.behavior.validate()?;
        if let Some(t) = &self.risk.thresholds {
            crate::risk::quantizer::Quantizer::new(t.clone())?;
        }
        if self.transport.mix_servers == 0 {
            return Err(Error::config("transport.mix_servers", "at least one mix server is required"));
        }
        if self.transport.batch_threshold == 0 {
            return Err(Error::config("transport.batch_threshold", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.scenario.distancing_reference) {
            return Err(Error::config("scenario.distancing_reference", "not in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.risk.opt_in_rate) {
            return Err(Error::config("risk.opt_in_rate", "not in [0, 1]"));
        }
        Ok(())
    }

    /// Digest of the canonical serialization, used in run manifests.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let d = Sha256::digest(canonical.as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn adoption_out_of_range_names_field() {
        let mut cfg = SimConfig::default();
        cfg.world.app_adoption = 1.5;
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "app_adoption"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_population_rejected() {
        let mut cfg = SimConfig::default();
        cfg.world.population = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "population", .. })));
    }

    #[test]
    fn toml_round_trip_and_partial_documents() {
        let cfg = SimConfig::from_toml("[world]\npopulation = 50\n[world.location_counts]\nhousehold = 20\n").unwrap();
        assert_eq!(cfg.world.population, 50);
        assert_eq!(cfg.world.n_days, 30);
        let back = SimConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(SimConfig::from_toml("[world]\npopulaton = 5\n"), Err(Error::ConfigParse(_))));
    }
}
