use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::epi::SymptomSet;
use crate::risk::ContactLogEntry;
use crate::world::{Conditions, Sex};

/// Records older than this are expunged.
pub const RECORD_RETENTION_DAYS: u32 = 90;
/// Phone-side contact logs are purged on this rolling horizon.
pub const PHONE_LOG_RETENTION_DAYS: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pseudonym(pub [u8; 16]);

impl Pseudonym {
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Pseudonym(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisStatus {
    Unknown,
    TestedNegative,
    TestedPositive,
}

/// Contact statistics without tokens.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactSummary {
    pub count: u32,
    pub total_duration_min: f64,
    pub levels: [u32; 16],
}

impl ContactSummary {
    pub fn of(log: &[ContactLogEntry]) -> Self {
        let mut s = ContactSummary::default();
        for e in log {
            s.count += 1;
            s.total_duration_min += e.duration_min;
            s.levels[e.received_level.value() as usize] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudonymizedRecord {
    pub pseudonym: Pseudonym,
    /// Ten-year band.
    pub age_band: u8,
    pub sex: Sex,
    pub conditions: Conditions,
    pub symptoms_by_day: BTreeMap<u32, SymptomSet>,
    pub diagnosis_status: DiagnosisStatus,
    pub contacts: ContactSummary,
    pub location_visits: BTreeMap<String, u32>,
    pub received_day: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpiryReport {
    pub deleted: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Revocation {
    Deleted(usize),
    UnknownPseudonym,
}

#[derive(Debug, Clone, Default)]
pub struct PseudonymStore {
    records: BTreeMap<Pseudonym, Vec<PseudonymizedRecord>>,
}

impl PseudonymStore {
    pub fn insert(&mut self, r: PseudonymizedRecord) {
        self.records.entry(r.pseudonym).or_default().push(r);
    }

    pub fn len(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records_of(&self, p: &Pseudonym) -> &[PseudonymizedRecord] {
        self.records.get(p).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PseudonymizedRecord> {
        self.records.values().flatten()
    }

    /// Delete records aged 90 days or more.
    pub fn expire_data(&mut self, now: u32) -> ExpiryReport {
        let before = self.len();
        self.records.retain(|_, v| {
            v.retain(|r| now.saturating_sub(r.received_day) < RECORD_RETENTION_DAYS);
            !v.is_empty()
        });
        let retained = self.len();
        ExpiryReport { deleted: before - retained, retained }
    }

    pub fn revoke(&mut self, p: &Pseudonym) -> Revocation {
        match self.records.remove(p) {
            Some(v) => Revocation::Deleted(v.len()),
            None => Revocation::UnknownPseudonym,
        }
    }
}

/// Drop phone-side contact entries older than the rolling horizon.
pub fn expire_phone_log(log: &mut Vec<ContactLogEntry>, now: u32) -> usize {
    let before = log.len();
    log.retain(|e| now.saturating_sub(e.day) < PHONE_LOG_RETENTION_DAYS);
    before - log.len()
}
