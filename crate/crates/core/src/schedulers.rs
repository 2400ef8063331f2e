//! Sampling policies and the built-in trigger library.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::isochron::{IsochronError, RegionPartition};
use crate::models::{ModelError, QuadraticTrigger};

/// How the next sampling instant is chosen.
#[derive(Debug, Clone)]
pub enum SchedulerPolicy {
    /// Dwell `τ_i` of the region containing the sampled state.
    RegionStc(Arc<RegionPartition>),
    /// Closed-form small-gain dwell of the benchmark loop.
    BaselineStc,
    /// Sample when `φ` crosses zero; handled by event detection in the
    /// simulator.
    Etc,
    /// Constant dwell.
    Fixed(f64),
}

impl SchedulerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RegionStc(_) => "region-stc",
            Self::BaselineStc => "baseline-stc",
            Self::Etc => "etc",
            Self::Fixed(_) => "fixed",
        }
    }

    /// Dwell for a sample taken at `x`; `None` for event-triggered sampling.
    pub fn dwell(&self, x: &[f64]) -> Result<Option<f64>, IsochronError> {
        match self {
            Self::RegionStc(p) => region_stc_dwell(p, x).map(Some),
            Self::BaselineStc => Ok(Some(baseline_stc_dwell(x))),
            Self::Etc => Ok(None),
            Self::Fixed(d) => Ok(Some(*d)),
        }
    }
}

/// `τ_{region_index(x)}`.
pub fn region_stc_dwell(partition: &RegionPartition, x: &[f64]) -> Result<f64, IsochronError> {
    partition.dwell(x)
}

/// `1.54 / (28(|x| + 4) + 29)`.
pub fn baseline_stc_dwell(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    1.54 / (28.0 * (norm + 4.0) + 29.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerKind {
    /// `|ε|² − ε̄²`
    Lebesgue,
    /// `|ε|² − σ|ζ|² − ε̄²`
    Mixed,
    /// `|ε|² − 0.0049|ζ|² − 16` on the benchmark plant.
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerParams {
    pub dim: usize,
    #[serde(default)]
    pub sigma: f64,
    pub eps_bar: f64,
}

/// Builds a built-in trigger.
pub fn make_trigger(kind: TriggerKind, params: TriggerParams) -> Result<QuadraticTrigger, ModelError> {
    match kind {
        TriggerKind::Lebesgue => QuadraticTrigger::lebesgue(params.dim, params.eps_bar),
        TriggerKind::Mixed => {
            if !(params.sigma > 0.0) {
                return Err(ModelError::Parameter(format!(
                    "mixed trigger needs σ > 0, got {}",
                    params.sigma
                )));
            }
            QuadraticTrigger::mixed(params.dim, params.sigma, params.eps_bar)
        }
        TriggerKind::Benchmark => Ok(QuadraticTrigger::benchmark()),
    }
}
