use std::collections::{BTreeMap, BTreeSet};

use crate::risk::quantizer::RiskLevel;

/// Days whose quantized level differs between the previously communicated
/// history and the fresh one. Days absent from `old` were never sent and
/// are not updates.
pub fn should_send_update(old: &BTreeMap<u32, RiskLevel>, new: &BTreeMap<u32, RiskLevel>) -> BTreeSet<u32> {
    new.iter()
        .filter(|(day, level)| old.get(day).is_some_and(|prev| prev != *level))
        .map(|(day, _)| *day)
        .collect()
}
