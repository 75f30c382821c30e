use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::risk::RiskLevel;

use super::{FlowMapPacket, HeatMapPacket, ZoneCode, ZoneTable, ANONYMITY_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct HeatCell {
    count: u64,
    levels: [u64; 16],
    mobility: [u64; 16],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct FlowCell {
    count: u64,
    levels: [u64; 16],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HeatRow {
    pub zone: ZoneCode,
    pub day: u32,
    pub count: u64,
    pub levels: [u64; 16],
    pub mobility: [u64; 16],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowRow {
    pub home_zone: ZoneCode,
    pub contact_zone: ZoneCode,
    pub day: u32,
    pub count: u64,
    pub levels: [u64; 16],
}

/// Released rows plus how many packets were withheld.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission<R> {
    pub rows: Vec<R>,
    pub suppressed: u64,
}

/// Folds each packet into per-(zone, day) histograms on arrival. Packets
/// are never stored.
#[derive(Debug, Clone, Default)]
pub struct Aggregator {
    zones: ZoneTable,
    heat: BTreeMap<(u32, ZoneCode), HeatCell>,
    flow: BTreeMap<(u32, ZoneCode, ZoneCode), FlowCell>,
    pub ingested: u64,
}

fn correct(levels: &mut [u64; 16], old: Option<RiskLevel>, new: RiskLevel) -> bool {
    if let Some(o) = old {
        let slot = &mut levels[o.value() as usize];
        if *slot > 0 {
            *slot -= 1;
            levels[new.value() as usize] += 1;
            return true;
        }
    }
    false
}

impl Aggregator {
    pub fn new(zones: ZoneTable) -> Self {
        Aggregator { zones, ..Aggregator::default() }
    }

    /// An update (with `old_risk_level`) moves one count between levels;
    /// an update with no matching original counts as a fresh packet.
    pub fn ingest_heat(&mut self, p: HeatMapPacket) {
        self.ingested += 1;
        let cell = self.heat.entry((p.day, self.zones.code(p.zone_id))).or_default();
        if correct(&mut cell.levels, p.old_risk_level, p.risk_level) {
            return;
        }
        cell.count += 1;
        cell.levels[p.risk_level.value() as usize] += 1;
        cell.mobility[usize::from(p.mobility_nibble & 0x0f)] += 1;
    }

    pub fn ingest_flow(&mut self, p: FlowMapPacket) {
        self.ingested += 1;
        let key = (p.day, self.zones.code(p.home_zone_id), self.zones.code(p.contact_zone_id));
        let cell = self.flow.entry(key).or_default();
        if correct(&mut cell.levels, p.old_received_level, p.received_level) {
            return;
        }
        cell.count += 1;
        cell.levels[p.received_level.value() as usize] += 1;
    }

    /// Cells held, bounded by zones x days x key width.
    pub fn state_size(&self) -> usize {
        self.heat.len() + self.flow.len()
    }

    pub fn total_heat_count(&self, day: u32) -> u64 {
        self.heat.range((day, ZoneCode::Zone(0))..=(day, ZoneCode::Lumped)).map(|(_, c)| c.count).sum()
    }

    /// Groups under the floor fold into the lumped row first; whatever is
    /// still under the floor is withheld.
    pub fn emit_heatmap(&self, day: u32) -> Emission<HeatRow> {
        let mut rows = Vec::new();
        let mut lumped = HeatCell::default();
        for (&(_, zone), cell) in self.heat.range((day, ZoneCode::Zone(0))..=(day, ZoneCode::Lumped)) {
            if zone != ZoneCode::Lumped && cell.count >= ANONYMITY_FLOOR {
                rows.push(HeatRow { zone, day, count: cell.count, levels: cell.levels, mobility: cell.mobility });
            } else {
                lumped.count += cell.count;
                (0..16).for_each(|i| {
                    lumped.levels[i] += cell.levels[i];
                    lumped.mobility[i] += cell.mobility[i];
                });
            }
        }
        let mut suppressed = 0;
        if lumped.count >= ANONYMITY_FLOOR {
            rows.push(HeatRow { zone: ZoneCode::Lumped, day, count: lumped.count, levels: lumped.levels, mobility: lumped.mobility });
        } else {
            suppressed = lumped.count;
        }
        Emission { rows, suppressed }
    }

    pub fn emit_flowmap(&self, day: u32) -> Emission<FlowRow> {
        let lo = (day, ZoneCode::Zone(0), ZoneCode::Zone(0));
        let hi = (day, ZoneCode::Lumped, ZoneCode::Lumped);
        let mut rows = Vec::new();
        let mut lumped = FlowCell::default();
        for (&(_, home, contact), cell) in self.flow.range(lo..=hi) {
            let is_lumped_key = home == ZoneCode::Lumped && contact == ZoneCode::Lumped;
            if !is_lumped_key && cell.count >= ANONYMITY_FLOOR {
                rows.push(FlowRow { home_zone: home, contact_zone: contact, day, count: cell.count, levels: cell.levels });
            } else {
                lumped.count += cell.count;
                (0..16).for_each(|i| lumped.levels[i] += cell.levels[i]);
            }
        }
        let mut suppressed = 0;
        if lumped.count >= ANONYMITY_FLOOR {
            rows.push(FlowRow { home_zone: ZoneCode::Lumped, contact_zone: ZoneCode::Lumped, day, count: lumped.count, levels: lumped.levels });
        } else {
            suppressed = lumped.count;
        }
        Emission { rows, suppressed }
    }

    pub fn days(&self) -> Vec<u32> {
        let mut d: Vec<u32> = self.heat.keys().map(|k| k.0).chain(self.flow.keys().map(|k| k.0)).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

fn level_headers(prefix: &str) -> impl Iterator<Item = String> + '_ {
    (0..16).map(move |i| format!("{prefix}_{i}"))
}

pub fn write_heatmap_csv<W: Write>(w: W, rows: &[HeatRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["zone_id".into(), "day".into(), "count".into()];
    header.extend(level_headers("level"));
    header.extend(level_headers("mobility"));
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.zone.to_string(), r.day.to_string(), r.count.to_string()];
        rec.extend(r.levels.iter().map(u64::to_string));
        rec.extend(r.mobility.iter().map(u64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_flowmap_csv<W: Write>(w: W, rows: &[FlowRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["home_zone".into(), "contact_zone".into(), "day".into(), "count".into()];
    header.extend(level_headers("level"));
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.home_zone.to_string(), r.contact_zone.to_string(), r.day.to_string(), r.count.to_string()];
        rec.extend(r.levels.iter().map(u64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
