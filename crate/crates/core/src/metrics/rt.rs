use crate::sim::InfectionTree;

/// Cohort width used for the daily series.
pub const RT_WINDOW_DAYS: u32 = 3;

/// Mean out-degree of the agents whose infectiousness ended within
/// `[day - window, day]`. `None` for an empty cohort.
pub fn estimate_rt(tree: &InfectionTree, day: u32, window: u32) -> Option<f64> {
    let window = window.max(1);
    let lo = f64::from(day.saturating_sub(window));
    let hi = f64::from(day) + 1.0;
    let deg = tree.out_degrees();
    let (mut sum, mut n) = (0u64, 0u64);
    for (node, d) in tree.nodes.iter().zip(deg) {
        if node.infectious_end >= lo && node.infectious_end < hi {
            sum += u64::from(d);
            n += 1;
        }
    }
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Daily estimates for days `0..n_days`; an empty cohort repeats the
/// previous value and is flagged `true`.
pub fn rt_series(tree: &InfectionTree, n_days: u32, window: u32) -> Vec<(f64, bool)> {
    let mut last = 0.0;
    (0..n_days)
        .map(|d| match estimate_rt(tree, d, window) {
            Some(v) => {
                last = v;
                (v, false)
            }
            None => (last, true),
        })
        .collect()
}

/// Mean of the non-carried daily estimates from `from_day` on.
pub fn mean_post_rt(daily: &[crate::sim::DailyMetrics], from_day: u32) -> Option<f64> {
    let v: Vec<f64> = daily.iter().filter(|d| d.day >= from_day && !d.rt_carried).map(|d| d.rt_estimate).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
