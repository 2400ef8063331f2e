use std::f64::consts::PI;

use super::SimError;
use crate::models::DisturbanceBox;

/// A realization `t ↦ d(t) ∈ Δ`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal {
    /// Value `values[k]` on `[grid[k], grid[k+1])`; the last value holds
    /// forever and the first value also covers `t < grid[0]`.
    Piecewise { grid: Vec<f64>, values: Vec<Vec<f64>> },
    /// Realization used by the benchmark loop:
    /// `d = (4 sin 2πt, sin ζ₁, sin ζ₂)`. It reads the plant state, which is
    /// how the bounded uncertainties `0.1 ζ₁ sin ζ₁` and `0.2 ζ₂² sin ζ₂`
    /// enter the disturbance-affine model.
    Benchmark,
}

impl DisturbanceSignal {
    pub fn piecewise(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, SimError> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(SimError::Signal(format!(
                "{} switching times for {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SimError::Signal("switching grid must be strictly increasing".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(SimError::Signal("values of mixed dimension".into()));
        }
        Ok(Self::Piecewise { grid, values })
    }

    pub fn constant(d: Vec<f64>) -> Self {
        Self::Piecewise {
            grid: vec![0.0],
            values: vec![d],
        }
    }

    /// Checks every stored value against `Δ`. Closed-form signals are
    /// inside their box by construction.
    pub fn check_within(&self, bounds: &DisturbanceBox) -> Result<(), SimError> {
        match self {
            Self::Piecewise { values, .. } => {
                for v in values {
                    bounds.check(v).map_err(|e| SimError::Signal(e.to_string()))?;
                }
                Ok(())
            }
            Self::Benchmark => {
                if bounds.dim() == 3 && bounds.contains(&[4.0, 1.0, 1.0]) && bounds.contains(&[-4.0, -1.0, -1.0]) {
                    Ok(())
                } else {
                    Err(SimError::Signal(
                        "benchmark realization needs Δ ⊇ [-4,4]×[-1,1]²".into(),
                    ))
                }
            }
        }
    }

    /// The signal `t ↦ d(factor · t)`.
    pub fn time_scaled(&self, factor: f64) -> Result<Self, SimError> {
        if !(factor > 0.0) {
            return Err(SimError::Signal(format!("time scale must be positive, got {factor}")));
        }
        match self {
            Self::Piecewise { grid, values } => Ok(Self::Piecewise {
                grid: grid.iter().map(|t| t / factor).collect(),
                values: values.clone(),
            }),
            Self::Benchmark => Err(SimError::Signal(
                "the benchmark realization reads the plant state and cannot be rescaled".into(),
            )),
        }
    }

    /// `d(t)` for plant state `zeta`.
    pub fn evaluate(&self, t: f64, zeta: &[f64], out: &mut [f64]) {
        match self {
            Self::Piecewise { grid, values } => {
                let k = grid.partition_point(|&g| g <= t).saturating_sub(1);
                out.copy_from_slice(&values[k]);
            }
            Self::Benchmark => {
                out[0] = 4.0 * (2.0 * PI * t).sin();
                out[1] = zeta[0].sin();
                out[2] = zeta[1].sin();
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Piecewise { values, .. } => values[0].len(),
            Self::Benchmark => 3,
        }
    }
}
