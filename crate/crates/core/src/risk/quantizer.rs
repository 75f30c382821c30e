//! Equal-frequency 4-bit quantization of contagiousness scores.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// A 4-bit risk level, 0..=15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct RiskLevel(u8);

impl RiskLevel {
    pub const MAX: RiskLevel = RiskLevel(15);
    pub const COUNT: usize = 16;

    pub fn new(v: u8) -> Result<Self> {
        if v > 15 {
            return Err(Error::Domain(format!("risk level {v} exceeds 4 bits")));
        }
        Ok(RiskLevel(v))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = RiskLevel> {
        (0..16).map(RiskLevel)
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fifteen strictly increasing cut points in `(0, 1]` splitting `[0, 1]`
/// into sixteen bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer<T> {
    thresholds: Vec<T>,
}

const SHIPPED: &str = include_str!("../../fixtures/quantizer_thresholds.txt");

impl Quantizer<f64> {
    /// Thresholds frozen from the calibration run.
    pub fn shipped() -> Self {
        Self::from_text(SHIPPED).expect("shipped fixture is valid")
    }
}

impl<T: Real> Quantizer<T> {
    pub fn new(thresholds: Vec<T>) -> Result<Self> {
        if thresholds.len() != 15 {
            return Err(Error::config("risk.thresholds", format!("expected 15 cut points, got {}", thresholds.len())));
        }
        if thresholds.iter().any(|t| !(*t > T::zero() && *t <= T::one())) {
            return Err(Error::config("risk.thresholds", "cut points must lie in (0, 1]"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("risk.thresholds", "cut points must be strictly increasing"));
        }
        Ok(Quantizer { thresholds })
    }

    /// Equal-frequency cut points from a reference score sample. Ties at a
    /// quantile push the cut to the next distinct value.
    pub fn from_reference(sample: &[T]) -> Result<Self> {
        let mut sorted: Vec<T> = sample.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.len() < 16 {
            return Err(Error::Domain("reference sample needs at least 16 scores".into()));
        }
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let n = sorted.len();
        let mut cuts: Vec<T> = Vec::with_capacity(15);
        for k in 1..16 {
            let mut idx = k * n / 16;
            let floor = cuts.last().copied().unwrap_or(T::zero());
            while idx < n && sorted[idx] <= floor {
                idx += 1;
            }
            if idx >= n {
                return Err(Error::Domain("reference sample has too few distinct values".into()));
            }
            cuts.push(sorted[idx]);
        }
        Self::new(cuts)
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    /// Bin of a score in `[0, 1]`.
    pub fn quantize(&self, score: T) -> Result<RiskLevel> {
        if !(score >= T::zero() && score <= T::one()) {
            return Err(Error::Domain(format!("score {score} not in [0, 1]")));
        }
        Ok(self.level_of(score))
    }

    /// As [`quantize`](Self::quantize), clamping out-of-range input.
    pub fn level_of(&self, score: T) -> RiskLevel {
        let above = self.thresholds.partition_point(|t| *t <= score);
        RiskLevel(above as u8)
    }

    /// Bin bounds `[lo, hi)`; the top bin includes 1.
    pub fn bounds(&self, level: RiskLevel) -> (T, T) {
        let i = level.value() as usize;
        let lo = if i == 0 { T::zero() } else { self.thresholds[i - 1] };
        let hi = if i == 15 { T::one() } else { self.thresholds[i] };
        (lo, hi)
    }

    /// Midpoint of a bin; quantizes back to the same level.
    pub fn representative(&self, level: RiskLevel) -> T {
        let (lo, hi) = self.bounds(level);
        (lo + hi) / T::lit(2.0)
    }

    /// Fixture format: one decimal per line, ascending.
    pub fn to_text(&self) -> String {
        self.thresholds.iter().map(|t| format!("{:.9}\n", t)).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cuts = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::config("risk.thresholds", format!("bad decimal `{l}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        Self::new(cuts)
    }
}
