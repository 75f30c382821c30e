use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::RunOutput;

/// Checks of a set of runs against qualitative epidemic targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub runs: usize,
    /// Secondary infections per closed case, split by where they happened.
    pub r_by_location_kind: BTreeMap<String, f64>,
    pub r_overall: f64,
    pub closed_cases: u64,
    /// Infections per encounter with one infectious, one susceptible party.
    pub encounter_transmission_rate: f64,
    /// Tested positive over symptomatic.
    pub secondary_attack_rate: f64,
    /// Symptomatic share of infected agents per age decade.
    pub symptomatic_fraction_by_age: BTreeMap<u8, f64>,
    pub location_infection_share: f64,
    pub unimodal: bool,
}

/// Single peak after a centred 3-day moving average; wiggles smaller than
/// 5% of the peak (at least one agent) are ignored.
pub fn is_unimodal(series: &[f64]) -> bool {
    if series.len() < 3 {
        return true;
    }
    let n = series.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let peak = smooth.iter().cloned().fold(f64::MIN, f64::max);
    let tol = (0.05 * peak).max(1.0);
    let p = smooth.iter().position(|&v| v == peak).unwrap_or(0);
    let mut hi = f64::MIN;
    for &v in &smooth[..=p] {
        if v < hi - tol {
            return false;
        }
        hi = hi.max(v);
    }
    let mut lo = f64::MAX;
    for &v in &smooth[p..] {
        if v > lo + tol {
            return false;
        }
        lo = lo.min(v);
    }
    true
}

pub fn validation_report(runs: &[RunOutput]) -> ValidationReport {
    let mut by_kind: BTreeMap<String, u64> = BTreeMap::new();
    let mut closed = 0u64;
    let (mut risky, mut enc_inf, mut loc_inf) = (0u64, 0u64, 0u64);
    let (mut symptomatic, mut positive) = (0u64, 0u64);
    let mut age: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
    let mut unimodal = true;
    for run in runs {
        let horizon = run.daily.len() as f64;
        let index: BTreeMap<_, _> = run.tree.nodes.iter().map(|n| (n.child, n)).collect();
        for n in &run.tree.nodes {
            if n.infectious_end < horizon {
                closed += 1;
            }
            if let Some(parent) = n.parent.and_then(|p| index.get(&p)) {
                if parent.infectious_end < horizon {
                    let kind = n.location_kind.map_or("seed", |k| k.as_str());
                    *by_kind.entry(kind.to_string()).or_default() += 1;
                }
            }
        }
        risky += run.risky_encounters;
        enc_inf += run.encounter_infections;
        loc_inf += run.location_infections;
        for o in &run.outcomes {
            symptomatic += u64::from(o.symptomatic);
            positive += u64::from(o.tested_positive && o.infected);
            if o.infected {
                let e = age.entry((o.age / 10).min(8) * 10).or_default();
                e.0 += u64::from(o.symptomatic);
                e.1 += 1;
            }
        }
        let curve: Vec<f64> = run.daily.iter().map(|d| f64::from(d.infectious)).collect();
        unimodal &= is_unimodal(&curve);
    }
    let per_case = |x: u64| if closed == 0 { 0.0 } else { x as f64 / closed as f64 };
    let r_by_location_kind: BTreeMap<String, f64> = by_kind.iter().map(|(k, &v)| (k.clone(), per_case(v))).collect();
    let total_inf = enc_inf + loc_inf;
    ValidationReport {
        runs: runs.len(),
        r_overall: per_case(by_kind.values().sum()),
        r_by_location_kind,
        closed_cases: closed,
        encounter_transmission_rate: if risky == 0 { 0.0 } else { enc_inf as f64 / risky as f64 },
        secondary_attack_rate: if symptomatic == 0 { 0.0 } else { positive as f64 / symptomatic as f64 },
        symptomatic_fraction_by_age: age.into_iter().map(|(k, (s, n))| (k, s as f64 / n as f64)).collect(),
        location_infection_share: if total_inf == 0 { 0.0 } else { loc_inf as f64 / total_inf as f64 },
        unimodal,
    }
}
