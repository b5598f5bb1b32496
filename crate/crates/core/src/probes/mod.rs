//! Diagnostic probes that pick a feature paradigm before any detector runs.
//!
//! The routing is a two-step cascade. A high lag-1 autocorrelation of the
//! aggregated flow signal selects the temporal space and stops. Otherwise a
//! compact PCA spectrum (enough variance in the first few components)
//! selects the structural space. When neither fires the result is the
//! hybrid fallback, which is flagged as unvalidated.

mod acf;
mod pca;

pub use acf::{
    acf, acf_probe, aggregate_signal, AcfProbeResult, Aggregation, DEFAULT_ACF_THRESHOLD,
    DEFAULT_MAX_LAG,
};
#[cfg(test)]
pub(crate) use pca::variance_probe_from_ratios;
pub use pca::{
    fit_pca, max_components, project, variance_probe, PcaModel, VarianceProbeResult,
    DEFAULT_COMPONENT_BUDGET, DEFAULT_VARIANCE_TARGET,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Paradigm {
    Temporal,
    Structural,
    Hybrid,
}

impl Paradigm {
    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Temporal => "temporal",
            Paradigm::Structural => "structural",
            Paradigm::Hybrid => "hybrid",
        }
    }
}

impl std::fmt::Display for Paradigm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "temporal" => Ok(Paradigm::Temporal),
            "structural" => Ok(Paradigm::Structural),
            "hybrid" => Ok(Paradigm::Hybrid),
            other => Err(Error::param(format!("unknown paradigm `{other}`"))),
        }
    }
}

/// The routed paradigm with the probe evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParadigmDecision {
    pub branch: Paradigm,
    pub acf_evidence: AcfProbeResult,
    /// Absent on the temporal branch: the variance probe is never reached.
    pub variance_evidence: Option<VarianceProbeResult>,
    /// Set only on the hybrid branch, which has no empirical backing.
    pub hybrid_flag: bool,
}

/// Routes on the ACF verdict first and only evaluates `variance` when it is negative.
pub fn decide_paradigm<F>(acf_result: AcfProbeResult, variance: F) -> Result<ParadigmDecision>
where
    F: FnOnce() -> Result<VarianceProbeResult>,
{
    if acf_result.verdict {
        return Ok(ParadigmDecision {
            branch: Paradigm::Temporal,
            acf_evidence: acf_result,
            variance_evidence: None,
            hybrid_flag: false,
        });
    }
    let var = variance()?;
    let branch = if var.verdict {
        Paradigm::Structural
    } else {
        Paradigm::Hybrid
    };
    Ok(ParadigmDecision {
        branch,
        acf_evidence: acf_result,
        variance_evidence: Some(var),
        hybrid_flag: branch == Paradigm::Hybrid,
    })
}
