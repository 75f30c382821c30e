//! Greedy grouping of contact-log entries into putative persons.

use crate::risk::predictor::ContactLogEntry;

const DAY_GAP_WEIGHT: f64 = 0.05;
const ARRIVAL_GAP_WEIGHT: f64 = 0.1;
const DURATION_WEIGHT: f64 = 0.05;

/// Distance between two entries: normalized Hamming distance on the
/// (prior, latest) level sequences plus day, arrival and duration gaps.
pub fn entry_distance(a: &ContactLogEntry, b: &ContactLogEntry) -> f64 {
    let (sa, la) = a.level_sequence();
    let (sb, lb) = b.level_sequence();
    let len = la.max(lb);
    let mismatches = (0..len).filter(|&i| (i < la).then(|| sa[i]) != (i < lb).then(|| sb[i])).count();
    let hamming = mismatches as f64 / len as f64;
    let day_gap = f64::from(a.day.abs_diff(b.day));
    let arrival_gap = f64::from(a.arrival_day_of_last_update.abs_diff(b.arrival_day_of_last_update));
    let dur = (a.duration_min.max(1.0) / b.duration_min.max(1.0)).log2().abs().min(2.0);
    hamming + DAY_GAP_WEIGHT * day_gap + ARRIVAL_GAP_WEIGHT * arrival_gap + DURATION_WEIGHT * dur
}

/// Sequential single-link clustering in log order. Each entry joins the
/// nearest existing cluster closer than `threshold` or opens a new one, so
/// appending entries never moves earlier ones.
pub fn cluster_contacts(log: &[ContactLogEntry], threshold: f64) -> Vec<u32> {
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut assignment = Vec::with_capacity(log.len());
    let max_arrival_gap = (threshold / ARRIVAL_GAP_WEIGHT).ceil() as u32;
    for (i, e) in log.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (c, ms) in members.iter().enumerate() {
            let mut d_min = f64::INFINITY;
            for &m in ms {
                let other = &log[m];
                if other.arrival_day_of_last_update.abs_diff(e.arrival_day_of_last_update) > max_arrival_gap {
                    continue;
                }
                d_min = d_min.min(entry_distance(e, other));
                if d_min == 0.0 {
                    break;
                }
            }
            if d_min < threshold && best.map_or(true, |(bd, _)| d_min < bd) {
                best = Some((d_min, c));
            }
        }
        let c = match best {
            Some((_, c)) => c,
            None => {
                members.push(Vec::new());
                members.len() - 1
            }
        };
        members[c].push(i);
        assignment.push(c as u32);
    }
    assignment
}

/// Fraction of entries whose cluster's majority sender matches their own.
pub fn cluster_purity(assignment: &[u32], truth: &[u32]) -> f64 {
    use std::collections::BTreeMap;
    if assignment.is_empty() {
        return 1.0;
    }
    let mut counts: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&c, &t) in assignment.iter().zip(truth) {
        *counts.entry(c).or_default().entry(t).or_default() += 1;
    }
    let majority: usize = counts.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    majority as f64 / assignment.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::predictor::ContactHandle;
    use crate::risk::quantizer::RiskLevel;
    use crate::world::encounter::DistanceBand;

    fn entry(day: u32, level: u8, arrival: u32) -> ContactLogEntry {
        ContactLogEntry {
            handle: ContactHandle(u64::from(day)),
            day,
            duration_min: 30.0,
            distance_band: DistanceBand::Close,
            received_level: RiskLevel::new(level).unwrap(),
            prior_level: None,
            arrival_day_of_last_update: arrival,
            cluster_id: None,
        }
    }

    #[test]
    fn single_entry_single_cluster() {
        assert_eq!(cluster_contacts(&[entry(3, 4, 3)], 0.35), vec![0]);
    }

    #[test]
    fn identical_signatures_on_consecutive_days_merge() {
        let log = [entry(3, 4, 5), entry(4, 4, 5)];
        assert_eq!(cluster_contacts(&log, 0.35), vec![0, 0]);
    }

    #[test]
    fn different_levels_split() {
        let log = [entry(3, 4, 3), entry(3, 9, 3)];
        assert_eq!(cluster_contacts(&log, 0.35), vec![0, 1]);
    }

    #[test]
    fn appending_keeps_prefix() {
        let log: Vec<_> = (0..30).map(|i| entry(i % 7, (i * 5 % 16) as u8, i % 5)).collect();
        let full = cluster_contacts(&log, 0.35);
        let prefix = cluster_contacts(&log[..20], 0.35);
        assert_eq!(&full[..20], &prefix[..]);
    }

    #[test]
    fn purity_bounds() {
        assert_eq!(cluster_purity(&[0, 0, 1], &[7, 7, 8]), 1.0);
        assert!((cluster_purity(&[0, 0, 0, 0], &[1, 1, 2, 3]) - 0.5).abs() < 1e-12);
    }
}
