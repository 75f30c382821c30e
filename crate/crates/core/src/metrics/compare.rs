use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::Result;
use crate::metrics::rt::mean_post_rt;
use crate::sim::{RunOutput, Scenario, ScenarioKind, SimOptions, Simulation};

/// One run of `scenario` with the world seed replaced by `seed`.
pub fn run_scenario(cfg: &SimConfig, scenario: Scenario, seed: u64) -> Result<RunOutput> {
    let mut cfg = cfg.clone();
    cfg.world.seed = seed;
    Ok(Simulation::new(&cfg, scenario, SimOptions::for_scenario(scenario.kind))?.run())
}

/// Runs over several seeds, fanned out over the rayon pool.
pub fn run_many(cfg: &SimConfig, scenario: Scenario, seeds: &[u64]) -> Result<Vec<RunOutput>> {
    seeds.par_iter().map(|&s| run_scenario(cfg, scenario, s)).collect()
}

/// Mean post-intervention contacts per agent-day over runs.
pub fn mean_mobility(runs: &[RunOutput]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().map(RunOutput::post_intervention_mobility).sum::<f64>() / runs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equalization {
    /// Mobility of the social-distancing reference.
    pub target: f64,
    pub strengths: BTreeMap<ScenarioKind, f64>,
    pub achieved: BTreeMap<ScenarioKind, f64>,
    /// Relative gap to the target.
    pub gaps: BTreeMap<ScenarioKind, f64>,
    pub converged: bool,
    pub steps: BTreeMap<ScenarioKind, u32>,
}

impl Equalization {
    pub fn max_gap(&self) -> f64 {
        self.gaps.values().fold(0.0, |m, g| m.max(g.abs()))
    }
}

fn rel_gap(m: f64, target: f64) -> f64 {
    if target == 0.0 {
        0.0
    } else {
        (m - target) / target
    }
}

/// Bisect each scenario's distancing strength until its mobility matches
/// the social-distancing reference.
pub fn equalize_mobility(
    cfg: &SimConfig,
    kinds: &[ScenarioKind],
    seeds: &[u64],
) -> Result<(Equalization, BTreeMap<ScenarioKind, Vec<RunOutput>>)> {
    let sc = &cfg.scenario;
    let reference = Scenario::new(ScenarioKind::SocialDistancing, sc.distancing_reference);
    let ref_runs = run_many(cfg, reference, seeds)?;
    let target = mean_mobility(&ref_runs);
    let tol = sc.equalization_tolerance;
    let mut eq = Equalization {
        target,
        strengths: BTreeMap::new(),
        achieved: BTreeMap::new(),
        gaps: BTreeMap::new(),
        converged: true,
        steps: BTreeMap::new(),
    };
    let mut kept = BTreeMap::new();
    for &kind in kinds {
        if kind == ScenarioKind::Unmitigated {
            continue;
        }
        if kind == ScenarioKind::SocialDistancing {
            eq.strengths.insert(kind, reference.distancing);
            eq.achieved.insert(kind, target);
            eq.gaps.insert(kind, 0.0);
            eq.steps.insert(kind, 0);
            kept.insert(kind, ref_runs.clone());
            continue;
        }
        let eval = |s: f64| -> Result<(f64, Vec<RunOutput>)> {
            let runs = run_many(cfg, Scenario::new(kind, s), seeds)?;
            Ok((mean_mobility(&runs), runs))
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut best: Option<(f64, f64, Vec<RunOutput>)> = None;
        let mut steps = 0;
        // Start from the reference strength: tracing policies sit close to it.
        let mut s = reference.distancing;
        let mut ok = false;
        while steps < sc.max_bisection_steps {
            steps += 1;
            let (m, runs) = eval(s)?;
            let gap = rel_gap(m, target);
            if best.as_ref().map_or(true, |b| gap.abs() < rel_gap(b.1, target).abs()) {
                best = Some((s, m, runs));
            }
            if gap.abs() <= tol {
                ok = true;
                break;
            }
            if gap > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            if hi - lo < 1e-4 {
                break;
            }
            s = 0.5 * (lo + hi);
        }
        let (s, m, runs) = best.expect("at least one step");
        eq.converged &= ok;
        eq.strengths.insert(kind, s);
        eq.achieved.insert(kind, m);
        eq.gaps.insert(kind, rel_gap(m, target));
        eq.steps.insert(kind, steps);
        kept.insert(kind, runs);
    }
    Ok((eq, kept))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: ScenarioKind,
    pub distancing: f64,
    pub mean_final_cases: f64,
    pub mean_post_rt: Option<f64>,
    pub mobility: f64,
    pub mobility_gap: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub equalization: Equalization,
    pub summaries: Vec<ScenarioSummary>,
    /// Strict ordering of mean final cases across the compared scenarios;
    /// `None` with fewer than three seeds.
    pub ordering_holds: Option<bool>,
    #[serde(skip)]
    pub runs: BTreeMap<ScenarioKind, Vec<RunOutput>>,
}

/// Run every scenario under equalized mobility, reusing the equalization
/// runs at the chosen strengths.
pub fn compare(cfg: &SimConfig, kinds: &[ScenarioKind], seeds: &[u64]) -> Result<Comparison> {
    let (equalization, mut runs) = equalize_mobility(cfg, kinds, seeds)?;
    if kinds.contains(&ScenarioKind::Unmitigated) {
        runs.insert(ScenarioKind::Unmitigated, run_many(cfg, Scenario::unmitigated(), seeds)?);
    }
    let target = equalization.target;
    let summaries: Vec<ScenarioSummary> = kinds
        .iter()
        .filter_map(|k| runs.get(k).map(|r| (k, r)))
        .map(|(&kind, r)| {
            let mobility = mean_mobility(r);
            let rts: Vec<f64> = r.iter().filter_map(|o| mean_post_rt(&o.daily, o.intervention_day)).collect();
            ScenarioSummary {
                scenario: kind,
                distancing: equalization.strengths.get(&kind).copied().unwrap_or(0.0),
                mean_final_cases: r.iter().map(|o| f64::from(o.final_cases())).sum::<f64>() / r.len().max(1) as f64,
                mean_post_rt: (!rts.is_empty()).then(|| rts.iter().sum::<f64>() / rts.len() as f64),
                mobility,
                mobility_gap: rel_gap(mobility, target),
                seeds: r.len(),
            }
        })
        .collect();
    let ordering_holds = (seeds.len() >= 3).then(|| ordering_holds(&summaries));
    Ok(Comparison { equalization, summaries, ordering_holds, runs })
}

/// Cases strictly decrease along `ScenarioKind::COMPARED` order.
fn ordering_holds(summaries: &[ScenarioSummary]) -> bool {
    let cases: Vec<f64> = ScenarioKind::COMPARED
        .iter()
        .filter_map(|k| summaries.iter().find(|s| s.scenario == *k))
        .map(|s| s.mean_final_cases)
        .collect();
    cases.windows(2).all(|w| w[0] > w[1])
}
