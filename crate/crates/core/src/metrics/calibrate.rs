use rayon::prelude::*;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::metrics::rt::mean_post_rt;
use crate::metrics::compare::run_many;
use crate::risk::Quantizer;
use crate::sim::{PhoneMode, Scenario, SimOptions, Simulation};

/// First day whose today-scores enter the reference sample.
pub const SCORE_SAMPLE_FROM: u32 = 7;

/// Today-scores of every app phone in unmitigated shadow runs, pooled
/// over `seeds`.
pub fn reference_scores(cfg: &SimConfig, quantizer: &Quantizer<f64>, seeds: &[u64]) -> Result<Vec<f64>> {
    let runs: Result<Vec<Vec<f64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = cfg.clone();
            cfg.world.seed = seed;
            cfg.risk.thresholds = Some(quantizer.thresholds().to_vec());
            let options = SimOptions { phones: PhoneMode::Shadow, collect_scores_from: Some(SCORE_SAMPLE_FROM), keep_encounters: false, collect_packets: false };
            Ok(Simulation::new(&cfg, Scenario::unmitigated(), options)?.run().scores)
        })
        .collect();
    Ok(runs?.concat())
}

/// Share of `scores` per level under `q`.
pub fn bin_masses(q: &Quantizer<f64>, scores: &[f64]) -> Vec<f64> {
    let mut counts = vec![0usize; 16];
    for &s in scores {
        counts[q.level_of(s).value() as usize] += 1;
    }
    counts.iter().map(|&c| c as f64 / scores.len().max(1) as f64).collect()
}

#[derive(Debug, Clone)]
pub struct ThresholdCalibration {
    pub quantizer: Quantizer<f64>,
    pub iterations: u32,
    /// Largest relative threshold move in the last iteration.
    pub last_change: f64,
    pub masses: Vec<f64>,
}

/// Iterate thresholds to a fixed point: levels exchanged in the run feed
/// the scores the thresholds are cut from.
pub fn calibrate_thresholds(cfg: &SimConfig, start: Quantizer<f64>, seeds: &[u64], max_iter: u32) -> Result<ThresholdCalibration> {
    let mut q = start;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let scores = reference_scores(cfg, &q, seeds)?;
        let next = Quantizer::from_reference(&scores)?;
        last_change = q
            .thresholds()
            .iter()
            .zip(next.thresholds())
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        q = next;
        if last_change < 1e-3 {
            break;
        }
    }
    let masses = bin_masses(&q, &reference_scores(cfg, &q, seeds)?);
    Ok(ThresholdCalibration { quantizer: q, iterations, last_change, masses })
}

/// Mean post-intervention R_t of unmitigated runs over `seeds`.
pub fn unmitigated_rt(cfg: &SimConfig, seeds: &[u64]) -> Result<f64> {
    let runs = run_many(cfg, Scenario::unmitigated(), seeds)?;
    let rts: Vec<f64> = runs.iter().filter_map(|o| mean_post_rt(&o.daily, cfg.scenario.intervention_day)).collect();
    if rts.is_empty() {
        return Err(Error::Domain("no closed cohorts after the intervention day".into()));
    }
    Ok(rts.iter().sum::<f64>() / rts.len() as f64)
}

/// Bisect `base_rate` so the unmitigated R_t hits `target`.
pub fn calibrate_base_rate(cfg: &SimConfig, seeds: &[u64], target: f64, tolerance: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (0.0, 0.2);
    let mut best = (cfg.disease.base_rate, f64::INFINITY);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let mut c = cfg.clone();
        c.disease.base_rate = mid;
        let rt = unmitigated_rt(&c, seeds)?;
        if (rt - target).abs() < (best.1 - target).abs() {
            best = (mid, rt);
        }
        if (rt - target).abs() <= tolerance {
            break;
        }
        if rt < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
