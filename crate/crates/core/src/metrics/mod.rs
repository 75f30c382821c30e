//! Epidemic metrics, validation checks, calibration and the scenario
//! comparison harness.

mod calibrate;
mod compare;
mod rt;
mod validation;

pub use calibrate::{
    bin_masses, calibrate_base_rate, calibrate_thresholds, reference_scores, unmitigated_rt, ThresholdCalibration, SCORE_SAMPLE_FROM,
};
pub use compare::{compare, equalize_mobility, mean_mobility, run_many, run_scenario, Comparison, Equalization, ScenarioSummary};
pub use rt::{estimate_rt, mean_post_rt, rt_series, RT_WINDOW_DAYS};
pub use validation::{is_unimodal, validation_report, ValidationReport};
