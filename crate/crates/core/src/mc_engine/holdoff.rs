use serde::{Deserialize, Serialize};

use super::DetectionRecord;
use crate::error::{Error, Result};

/// What the hold-off window is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldoffAnchor {
    /// Only accepted detections open a new window; discarded detections do not
    /// extend it (non-paralyzable).
    #[default]
    Accepted,
    /// Every detection, accepted or not, restarts the window (paralyzable).
    AnyEvent,
}

/// Flags records with the default accepted-anchored rule: a record is kept
/// iff its gate index exceeds that of the last kept record by more than
/// `holdoff_gates`.
pub fn apply_holdoff(records: &mut [DetectionRecord], holdoff_gates: u64) -> Result<()> {
    apply_holdoff_with(records, holdoff_gates, HoldoffAnchor::Accepted)
}

pub fn apply_holdoff_with(
    records: &mut [DetectionRecord],
    holdoff_gates: u64,
    anchor: HoldoffAnchor,
) -> Result<()> {
    if let Some(i) = records.windows(2).position(|w| w[1].gate_index < w[0].gate_index) {
        return Err(Error::Unsorted { index: i + 1 });
    }
    let mut last: Option<u64> = None;
    for r in records.iter_mut() {
        r.accepted = match last {
            None => true,
            Some(g) => r.gate_index - g > holdoff_gates,
        };
        if r.accepted || anchor == HoldoffAnchor::AnyEvent {
            last = Some(r.gate_index);
        }
    }
    Ok(())
}
