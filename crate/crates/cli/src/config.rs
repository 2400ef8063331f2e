//! Run configuration (TOML).
//!
//! Units: times in seconds, states in plant units. See `configs/benchmark.toml`
//! at the repository root for a complete document.

use std::path::Path;
use std::sync::Arc;

use regstc::models::{BenchmarkPlant, ConstantPlant, DisturbanceBox, LinearPlant, Plant, Trigger};
use regstc::schedulers::{make_trigger, TriggerKind, TriggerParams};
use regstc::setsynth::{BoxSet, Interval};
use regstc::simulate::{DisturbanceSignal, RealizationFamily};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub trigger: TriggerConfig,
    pub sets: SetsConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Benchmark {
        #[serde(default = "one")]
        alpha: f64,
    },
    /// `ζ̇ = rate`.
    Constant {
        rate: Vec<f64>,
        #[serde(default = "one")]
        alpha: f64,
    },
    /// `ζ̇ = Aζ + B K ĥ + E d`, row-major matrices.
    Linear {
        n: usize,
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
        #[serde(default)]
        k: Vec<f64>,
        #[serde(default)]
        e: Vec<f64>,
        #[serde(default)]
        d_lo: Vec<f64>,
        #[serde(default)]
        d_hi: Vec<f64>,
        #[serde(default = "one")]
        alpha: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    pub kind: TriggerKind,
    #[serde(default)]
    pub eps_bar: f64,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsConfig {
    pub z_lo: Vec<f64>,
    pub z_hi: Vec<f64>,
    /// `[w̲, w̄]`
    pub w: [f64; 2],
    #[serde(default = "default_inflation")]
    pub inflation: f64,
}

fn default_inflation() -> f64 {
    regstc::setsynth::DEFAULT_INFLATION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    #[default]
    Projected,
    Reachable,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaOverride {
    pub delta0: f64,
    pub delta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub eps_delta: f64,
    pub rows: usize,
    pub verify_points: usize,
    pub max_refits: usize,
    pub domain: DomainKind,
    /// `r = radius_safety · √(inradius(Z)² + w̲²)`.
    pub radius_safety: f64,
    pub seed: u64,
    /// Skip fitting and use these coefficients (still verified and reported).
    pub delta_override: Option<DeltaOverride>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            eps_delta: regstc::setsynth::DEFAULT_EPS_DELTA,
            rows: 20_000,
            verify_points: 100_000,
            max_refits: 20,
            domain: DomainKind::Projected,
            radius_safety: 0.99,
            seed: 0,
            delta_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridConfig {
    Geometric {
        first: f64,
        ratio: f64,
        q: usize,
    },
    /// Deepest time at the origin, first time below the sphere of
    /// `coverage_radius`.
    Auto {
        #[serde(default = "default_ratio")]
        ratio: f64,
        coverage_radius: f64,
    },
}

fn default_ratio() -> f64 {
    1.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub h: f64,
    /// Event-detection tolerance (s).
    pub event_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            h: regstc::simulate::DEFAULT_STEP,
            event_tol: regstc::simulate::DEFAULT_EVENT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub count: usize,
    pub ball_radius: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Initial condition of `simulate` and `plot-data`.
    pub single_x0: Option<Vec<f64>>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            count: 100,
            ball_radius: 2.0,
            horizon: 5.0,
            seed: 0,
            single_x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalConfig {
    /// The plant's reference realization: `(4 sin 2πt, sin ζ₁, sin ζ₂)` for
    /// the benchmark plant, the centre of `Δ` otherwise.
    #[default]
    Default,
    Constant {
        value: Vec<f64>,
    },
    /// Piecewise-constant vertex-biased realization.
    Random {
        switches: usize,
        window: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let plant = self.plant()?;
        let trigger = self.trigger()?;
        if trigger.state_dim() != plant.state_dim() {
            return Err(config_err(format!(
                "trigger acts on dimension {}, plant has {}",
                trigger.state_dim(),
                plant.state_dim()
            )));
        }
        let z = self.z()?;
        if z.dim() != plant.state_dim() {
            return Err(config_err("Z dimension does not match the plant"));
        }
        if !z.has_origin_inside() {
            return Err(config_err("Z must contain the origin in its interior"));
        }
        self.w()?;
        let s = &self.synthesis;
        if !(s.eps_delta > 0.0) || s.rows == 0 || !(s.radius_safety > 0.0 && s.radius_safety <= 1.0) {
            return Err(config_err(
                "synthesis needs eps_delta > 0, rows > 0, radius_safety in (0, 1]",
            ));
        }
        if let Some(o) = s.delta_override {
            if !(o.delta0 >= 0.0) || !(o.delta1 > 0.0) {
                return Err(config_err("delta_override needs delta0 ≥ 0 and delta1 > 0"));
            }
        }
        match self.grid {
            GridConfig::Geometric { first, ratio, q } => {
                if !(first > 0.0) || !(ratio > 1.0) || q == 0 {
                    return Err(config_err("grid needs first > 0, ratio > 1, q ≥ 1"));
                }
            }
            GridConfig::Auto { ratio, coverage_radius } => {
                if !(ratio > 1.0) || !(coverage_radius > 0.0) {
                    return Err(config_err("auto grid needs ratio > 1 and coverage_radius > 0"));
                }
            }
        }
        if !(self.integrator.h > 0.0) || !(self.integrator.event_tol > 0.0) {
            return Err(config_err("integrator needs h > 0 and event_tol > 0"));
        }
        let b = &self.benchmark;
        if !(b.ball_radius >= 0.0) || !(b.horizon > 0.0) {
            return Err(config_err("benchmark needs ball_radius ≥ 0 and horizon > 0"));
        }
        if let Some(x0) = &b.single_x0 {
            if x0.len() != plant.state_dim() {
                return Err(config_err("single_x0 dimension does not match the plant"));
            }
        }
        self.signal_for(plant.as_ref())?;
        Ok(())
    }

    pub fn plant(&self) -> Result<Arc<dyn Plant>, CliError> {
        let map = |e: regstc::models::ModelError| config_err(e.to_string());
        Ok(match &self.model {
            ModelConfig::Benchmark { alpha } => Arc::new(BenchmarkPlant::new(*alpha).map_err(map)?),
            ModelConfig::Constant { rate, alpha } => Arc::new(ConstantPlant::new(rate.clone(), *alpha).map_err(map)?),
            ModelConfig::Linear {
                n,
                a,
                b,
                k,
                e,
                d_lo,
                d_hi,
                alpha,
            } => {
                let disturbance = if d_lo.is_empty() && d_hi.is_empty() {
                    DisturbanceBox::empty()
                } else {
                    DisturbanceBox::new(d_lo.clone(), d_hi.clone()).map_err(map)?
                };
                Arc::new(
                    LinearPlant::new(*n, a.clone(), b.clone(), k.clone(), e.clone(), disturbance, *alpha)
                        .map_err(map)?,
                )
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.sets.z_lo.len()
    }

    pub fn trigger(&self) -> Result<Arc<dyn Trigger>, CliError> {
        let params = TriggerParams {
            dim: self.dim(),
            sigma: self.trigger.sigma,
            eps_bar: self.trigger.eps_bar,
        };
        let t = make_trigger(self.trigger.kind, params).map_err(|e| config_err(e.to_string()))?;
        Ok(Arc::new(t))
    }

    pub fn z(&self) -> Result<BoxSet, CliError> {
        BoxSet::new(self.sets.z_lo.clone(), self.sets.z_hi.clone()).map_err(|e| config_err(e.to_string()))
    }

    pub fn w(&self) -> Result<Interval, CliError> {
        Interval::homogenizing(self.sets.w[0], self.sets.w[1]).map_err(|e| config_err(e.to_string()))
    }

    /// Disturbance realization used by `simulate`, `benchmark` and
    /// `plot-data`.
    pub fn signal_for(&self, plant: &dyn Plant) -> Result<DisturbanceSignal, CliError> {
        let bounds = plant.disturbance_box();
        let signal = match &self.signal {
            SignalConfig::Default => {
                if matches!(self.model, ModelConfig::Benchmark { .. }) {
                    DisturbanceSignal::Benchmark
                } else {
                    DisturbanceSignal::constant(bounds.center())
                }
            }
            SignalConfig::Constant { value } => DisturbanceSignal::constant(value.clone()),
            SignalConfig::Random { switches, window, seed } => {
                if !(*window > 0.0) {
                    return Err(config_err("random signal needs window > 0"));
                }
                RealizationFamily {
                    count: 1,
                    switches: *switches,
                    switch_window: *window,
                    seed: *seed,
                }
                .realization(bounds, 0)
            }
        };
        if signal.dim() != bounds.dim() {
            return Err(config_err(format!(
                "signal has dimension {}, plant expects {}",
                signal.dim(),
                bounds.dim()
            )));
        }
        signal.check_within(bounds).map_err(|e| config_err(e.to_string()))?;
        Ok(signal)
    }

    /// SHA-256 of the sections that determine the synthesized objects.
    pub fn model_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            model: &'a ModelConfig,
            trigger: &'a TriggerConfig,
            sets: &'a SetsConfig,
        }
        let text = toml::to_string(&Hashed {
            model: &self.model,
            trigger: &self.trigger,
            sets: &self.sets,
        })
        .expect("config sections serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BENCH: &str = r#"
[model]
name = "benchmark"

[trigger]
kind = "benchmark"

[sets]
z_lo = [-0.1, -0.1]
z_hi = [0.1, 0.1]
w = [1e-6, 0.1]

[grid]
mode = "geometric"
first = 63e-5
ratio = 1.01
q = 434
"#;

    #[test]
    fn parses_minimal_benchmark() {
        let cfg = RunConfig::parse(BENCH).unwrap();
        assert_eq!(cfg.synthesis.domain, DomainKind::Projected);
        assert_eq!(cfg.benchmark.count, 100);
        assert_eq!(cfg.integrator.h, 5e-5);
        assert_eq!(cfg.plant().unwrap().state_dim(), 2);
    }

    #[test]
    fn rejects_z_without_origin() {
        let bad = BENCH.replace("z_lo = [-0.1, -0.1]", "z_lo = [0.0, -0.1]");
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_unknown_fields_and_ratio_one() {
        assert!(RunConfig::parse(&format!("{BENCH}\n[extra]\nx = 1\n")).is_err());
        assert!(RunConfig::parse(&BENCH.replace("ratio = 1.01", "ratio = 1.0")).is_err());
    }

    #[test]
    fn hash_tracks_model_sections_only() {
        let a = RunConfig::parse(BENCH).unwrap();
        let mut b = a.clone();
        b.benchmark.count = 3;
        assert_eq!(a.model_hash(), b.model_hash());
        b.sets.w[1] = 0.09;
        assert_ne!(a.model_hash(), b.model_hash());
    }
}
