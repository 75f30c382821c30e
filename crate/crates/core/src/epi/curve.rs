use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Piece of the viral-load trajectory a time falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Incubation,
    Rise,
    Plateau,
    Decay,
    Cleared,
}

/// Three-piece linear viral-load trajectory: rise, plateau, decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViralLoadCurve<T> {
    pub incubation_days: T,
    pub rise_days: T,
    pub plateau_height: T,
    pub plateau_days: T,
    pub decay_days: T,
}

impl<T: Real> ViralLoadCurve<T> {
    pub fn new(incubation_days: T, rise_days: T, plateau_height: T, plateau_days: T, decay_days: T) -> Result<Self> {
        let positive = [incubation_days, rise_days, plateau_days, decay_days];
        if positive.iter().any(|d| !(*d > T::zero()) || !d.is_finite()) {
            return Err(Error::Domain("curve durations must be positive".into()));
        }
        if !(plateau_height > T::zero() && plateau_height <= T::one()) {
            return Err(Error::Domain(format!("plateau height {plateau_height} not in (0, 1]")));
        }
        Ok(ViralLoadCurve { incubation_days, rise_days, plateau_height, plateau_days, decay_days })
    }

    pub fn plateau_start(&self) -> T {
        self.incubation_days + self.rise_days
    }

    pub fn decay_start(&self) -> T {
        self.plateau_start() + self.plateau_days
    }

    /// Days after infection when the load returns to zero.
    pub fn end(&self) -> T {
        self.decay_start() + self.decay_days
    }

    /// Steepest slope of the curve; bounds `|load(t + e) - load(t)| / e`.
    pub fn max_slope(&self) -> T {
        (self.plateau_height / self.rise_days).max(self.plateau_height / self.decay_days)
    }

    pub fn stage(&self, t: T) -> Stage {
        if t < self.incubation_days {
            Stage::Incubation
        } else if t < self.plateau_start() {
            Stage::Rise
        } else if t < self.decay_start() {
            Stage::Plateau
        } else if t < self.end() {
            Stage::Decay
        } else {
            Stage::Cleared
        }
    }

    /// Viral load `t` days after infection, in `[0, plateau_height]`.
    pub fn viral_load(&self, t: T) -> Result<T> {
        if t < T::zero() || t.is_nan() {
            return Err(Error::Domain(format!("time since infection {t} is negative")));
        }
        Ok(self.load(t))
    }

    /// As [`viral_load`](Self::viral_load) for callers that guarantee `t >= 0`.
    pub fn load(&self, t: T) -> T {
        match self.stage(t) {
            Stage::Incubation | Stage::Cleared => T::zero(),
            Stage::Rise => self.plateau_height * (t - self.incubation_days) / self.rise_days,
            Stage::Plateau => self.plateau_height,
            Stage::Decay => self.plateau_height * (T::one() - (t - self.decay_start()) / self.decay_days),
        }
    }
}
