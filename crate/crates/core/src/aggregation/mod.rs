//! Opt-in aggregate reporting: zone lumping, heat-map and flow-map packets,
//! immediate aggregation behind a 100-anonymity floor, and the
//! pseudonymized record store with retention rules.

mod aggregator;
mod store;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RiskLevel;
use crate::world::{ZoneId, ZoneInfo};

pub use aggregator::{Aggregator, FlowRow, HeatRow, Emission, write_flowmap_csv, write_heatmap_csv};
pub use store::{expire_phone_log, DiagnosisStatus, ContactSummary, ExpiryReport, Pseudonym, PseudonymStore, PseudonymizedRecord, Revocation, PHONE_LOG_RETENTION_DAYS, RECORD_RETENTION_DAYS};

/// Smallest group or zone population that may be released.
pub const ANONYMITY_FLOOR: u64 = 100;

/// Zone as released: its own id, or the shared code for small zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ZoneCode {
    Zone(u32),
    Lumped,
}

impl fmt::Display for ZoneCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZoneCode::Zone(z) => write!(f, "{z}"),
            ZoneCode::Lumped => f.write_str("lumped"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub population: u64,
    pub lumped: bool,
}

/// Stable zone-to-code mapping for one run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ZoneTable {
    zones: BTreeMap<ZoneId, Zone>,
}

impl ZoneTable {
    pub fn code(&self, id: ZoneId) -> ZoneCode {
        match self.zones.get(&id) {
            Some(z) if !z.lumped => ZoneCode::Zone(id.0),
            _ => ZoneCode::Lumped,
        }
    }

    pub fn zones(&self) -> impl Iterator<Item = &Zone> {
        self.zones.values()
    }
}

/// Zones under 100 residents share the lumped code.
pub fn lump_small_zones(zones: &[ZoneInfo]) -> ZoneTable {
    ZoneTable {
        zones: zones
            .iter()
            .map(|z| {
                let population = u64::from(z.population);
                (z.id, Zone { id: z.id, population, lumped: population < ANONYMITY_FLOOR })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatMapPacket {
    pub zone_id: ZoneId,
    pub day: u32,
    pub risk_level: RiskLevel,
    pub mobility_nibble: u8,
    pub old_risk_level: Option<RiskLevel>,
}

impl HeatMapPacket {
    pub fn new(zone_id: ZoneId, day: u32, risk_level: RiskLevel, mobility_nibble: u8, old_risk_level: Option<RiskLevel>) -> Result<Self> {
        if mobility_nibble > 15 {
            return Err(Error::Domain(format!("mobility nibble {mobility_nibble} exceeds 4 bits")));
        }
        Ok(HeatMapPacket { zone_id, day, risk_level, mobility_nibble, old_risk_level })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMapPacket {
    pub home_zone_id: ZoneId,
    pub day: u32,
    pub contact_zone_id: ZoneId,
    pub received_level: RiskLevel,
    pub old_received_level: Option<RiskLevel>,
}

/// Phone-side 4-bit mobility index: capped daily outings (0..=7) in the
/// high three bits, hygiene in the low bit.
pub fn mobility_nibble(outings: u32, hygiene: bool) -> u8 {
    (outings.min(7) as u8) << 1 | u8::from(hygiene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zones(pops: &[usize]) -> Vec<ZoneInfo> {
        pops.iter().enumerate().map(|(i, &p)| ZoneInfo { id: ZoneId(i as u32), population: p as u32 }).collect()
    }

    #[test]
    fn lumping_boundary() {
        let t = lump_small_zones(&zones(&[99, 100, 5000]));
        assert_eq!(t.code(ZoneId(0)), ZoneCode::Lumped);
        assert_eq!(t.code(ZoneId(1)), ZoneCode::Zone(1));
        assert_eq!(t.code(ZoneId(2)), ZoneCode::Zone(2));
        assert_eq!(t.code(ZoneId(9)), ZoneCode::Lumped);
    }

    #[test]
    fn large_zones_map_to_themselves() {
        let t = lump_small_zones(&zones(&[100, 200, 300]));
        assert!((0..3).all(|i| t.code(ZoneId(i)) == ZoneCode::Zone(i)));
    }

    #[test]
    fn nibble_fits() {
        assert_eq!(mobility_nibble(0, false), 0);
        assert_eq!(mobility_nibble(99, true), 15);
        assert!(HeatMapPacket::new(ZoneId(0), 0, RiskLevel::default(), 16, None).is_err());
    }
}
