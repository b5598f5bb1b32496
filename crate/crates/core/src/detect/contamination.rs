use crate::error::{Error, Result};

pub const CONTAMINATION_FLOOR: f64 = 0.01;
pub const CONTAMINATION_CEIL: f64 = 0.35;

/// Attack ratio of the labels and the contamination clamped into `[0.01, 0.35]`.
///
/// This reads ground-truth labels, so it is an offline-evaluation setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationEstimate {
    pub raw_ratio: f64,
    pub clamped: f64,
}

impl ContaminationEstimate {
    pub fn from_ratio(raw_ratio: f64) -> Self {
        Self {
            raw_ratio,
            clamped: raw_ratio.clamp(CONTAMINATION_FLOOR, CONTAMINATION_CEIL),
        }
    }
}

pub fn compute_contamination(labels: &[u8]) -> Result<ContaminationEstimate> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok(ContaminationEstimate::from_ratio(
        pos as f64 / labels.len() as f64,
    ))
}

/// `ceil(c * n)`, snapping products within 1e-9 of an integer so that
/// representation error in `c` cannot add a spurious extra sample.
pub fn flagged_count(c: f64, n: usize) -> usize {
    let x = c * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    (k.max(0.0) as usize).min(n)
}
