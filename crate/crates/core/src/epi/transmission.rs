//! Per-encounter transmission kernel.

use crate::config::DiseaseConfig;
use crate::epi::course::Status;
use crate::num::{clamp, Real};
use crate::world::DistanceBand;

/// Closed-form infection probability for one encounter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionKernel<T> {
    pub base_rate: T,
    /// Cap on duration in 15-minute units.
    pub duration_cap: T,
    pub distance_factors: [T; 3],
    pub mask_efficacy_healthcare: T,
    pub mask_efficacy_other: T,
    pub hygiene_factor: T,
}

impl<T: Real> TransmissionKernel<T> {
    pub fn from_config(cfg: &DiseaseConfig) -> Self {
        TransmissionKernel {
            base_rate: T::lit(cfg.base_rate),
            duration_cap: T::lit(cfg.duration_cap),
            distance_factors: cfg.distance_factors.map(T::lit),
            mask_efficacy_healthcare: T::lit(cfg.mask_efficacy_healthcare),
            mask_efficacy_other: T::lit(cfg.mask_efficacy_other),
            hygiene_factor: T::lit(cfg.hygiene_factor),
        }
    }

    /// Linear in 15-minute units, capped.
    pub fn duration_factor(&self, duration_min: T) -> T {
        (duration_min / T::lit(15.0)).min(self.duration_cap).max(T::zero())
    }

    pub fn distance_factor(&self, band: DistanceBand) -> T {
        self.distance_factors[band.index()]
    }

    pub fn mask_factor(&self, party: &PartyState<T>) -> T {
        if !party.masked {
            return T::one();
        }
        let eff = if party.healthcare_worker { self.mask_efficacy_healthcare } else { self.mask_efficacy_other };
        T::one() - eff
    }

    /// Probability that `source` infects `recipient` during this contact.
    pub fn probability(&self, source: &PartyState<T>, recipient: &PartyState<T>, duration_min: T, band: DistanceBand) -> T {
        let hygiene = if recipient.hygiene { self.hygiene_factor } else { T::one() };
        let p = self.base_rate
            * source.infectiousness
            * self.duration_factor(duration_min)
            * self.distance_factor(band)
            * self.mask_factor(source)
            * self.mask_factor(recipient)
            * hygiene;
        clamp(p, T::zero(), T::one())
    }
}

/// Infectiousness from viral load: scaled down for asymptomatic cases and
/// up for coughing symptomatic ones.
pub fn infectiousness<T: Real>(viral_load: T, asymptomatic: bool, coughing: bool, cfg: &DiseaseConfig) -> T {
    let mut v = viral_load;
    if asymptomatic {
        v = v * T::lit(cfg.asymptomatic_infectiousness);
    } else if coughing {
        v = v * T::lit(cfg.cough_multiplier);
    }
    v
}

/// One side of an encounter as seen by the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartyState<T> {
    pub status: Status,
    pub infectiousness: T,
    pub masked: bool,
    pub healthcare_worker: bool,
    pub hygiene: bool,
}

impl<T: Real> PartyState<T> {
    pub fn susceptible() -> Self {
        PartyState { status: Status::Susceptible, infectiousness: T::zero(), masked: false, healthcare_worker: false, hygiene: false }
    }
}

/// Which way an infection went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AtoB,
    BtoA,
}

/// Resolve an encounter with one uniform draw. No-op unless exactly one
/// party is infectious and the other susceptible.
pub fn transmit<T: Real>(
    kernel: &TransmissionKernel<T>,
    a: &PartyState<T>,
    b: &PartyState<T>,
    duration_min: T,
    band: DistanceBand,
    u: T,
) -> Option<Direction> {
    let (source, recipient, dir) = match (a.status, b.status) {
        (Status::Infectious, Status::Susceptible) => (a, b, Direction::AtoB),
        (Status::Susceptible, Status::Infectious) => (b, a, Direction::BtoA),
        _ => return None,
    };
    (u < kernel.probability(source, recipient, duration_min, band)).then_some(dir)
}
