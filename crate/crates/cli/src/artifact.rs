//! Persisted synthesis output.

use std::path::Path;
use std::sync::Arc;

use regstc::isochron::{EngineParams, IsochronEngine, RegionPartition, TimeGrid};
use regstc::models::Trigger;
use regstc::setsynth::{ConstraintDomain, DeltaCoefficients, SetBundle};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub first: f64,
    pub ratio: f64,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub w_min: f64,
    pub radius: f64,
    pub b1_radius_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// `min (δ₀ φ̃ + δ₁ − L)` over the checked points.
    pub margin: f64,
    pub boundary_margin: f64,
    pub points: usize,
    pub max_lie: f64,
    pub refits: usize,
    pub inflated_by: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisArtifact {
    pub version: u32,
    pub model_hash: String,
    pub model: String,
    pub trigger: String,
    pub alpha: f64,
    pub theta: f64,
    /// `"synthesized"` or `"override"`.
    pub delta_source: String,
    pub domain: ConstraintDomain,
    pub sets: SetBundle,
    pub coefficients: DeltaCoefficients,
    pub verification: Verification,
    pub cone: ConeSpec,
    pub grid: GridSpec,
}

impl SynthesisArtifact {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Io(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(e.to_string()))?;
        }
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read artifact {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let a: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("artifact: {e}")))?;
        if a.version != ARTIFACT_VERSION {
            return Err(CliError::Config(format!("unsupported artifact version {}", a.version)));
        }
        a.time_grid()?;
        Ok(a)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::geometric(self.grid.first, self.grid.ratio, self.grid.q)
            .map_err(|e| CliError::Config(format!("artifact grid: {e}")))
    }

    pub fn engine(&self, trigger: Arc<dyn Trigger>) -> Result<IsochronEngine, CliError> {
        IsochronEngine::new(
            EngineParams {
                delta0: self.coefficients.delta0,
                delta1: self.coefficients.delta1,
                radius: self.cone.radius,
                w_min: self.cone.w_min,
                alpha: self.alpha,
            },
            trigger,
        )
        .map_err(|e| CliError::Config(format!("artifact engine: {e}")))
    }

    pub fn partition(&self, trigger: Arc<dyn Trigger>) -> Result<RegionPartition, CliError> {
        Ok(RegionPartition::new(self.engine(trigger)?, self.time_grid()?))
    }

    /// Fails unless the artifact was synthesized from the same model
    /// sections.
    pub fn check_hash(&self, expected: &str) -> Result<(), CliError> {
        if self.model_hash != expected {
            return Err(CliError::Config(format!(
                "artifact model hash {} does not match config hash {expected}",
                self.model_hash
            )));
        }
        Ok(())
    }
}
