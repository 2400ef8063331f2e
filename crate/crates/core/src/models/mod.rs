//! Plant dynamics, triggering functions and the homogenization operators
//! that lift both from `ℝ²ⁿ` to `ℝ²ⁿ⁺¹`.
//!
//! The extended state is `ξ = (ζ, ε)` where `ζ ∈ ℝⁿ` is the plant state and
//! `ε = ζ(tₖ) − ζ` the measurement error since the last sample. The held
//! measurement fed to the controller is therefore `ζ + ε`.
//!
//! Homogenization adds a coordinate `w > 0`:
//!
//! ```text
//! f̃(ξ, w, d) = (w^{α+1} f_e(ξ / w, d), 0)
//! φ̃(ξ, w)    = w^{θ+1} φ(ξ / w)
//! ```
//!
//! so that `f̃(λξ, λw, d) = λ^{α+1} f̃(ξ, w, d)` for every `λ > 0`, and the
//! original loop is recovered on the `w = 1` plane.

mod plants;
mod trigger;

pub use plants::{BenchmarkPlant, ConstantPlant, LinearPlant};
pub use trigger::QuadraticTrigger;

use smallvec::SmallVec;
use thiserror::Error;

/// Inline buffer used for per-evaluation scratch vectors.
pub(crate) type Scratch = SmallVec<[f64; 8]>;

/// Step used for central finite-difference gradients.
pub const FD_STEP: f64 = 1e-6;

/// `w` used to approximate `φ̃(·, 0)` when a trigger has no exact form.
pub const W_LIMIT_PROBE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("homogenizing coordinate must be positive, got w = {0}")]
    NonPositiveW(f64),
    #[error("disturbance box bound {index} is inverted: [{lo}, {hi}]")]
    InvertedBox { index: usize, lo: f64, hi: f64 },
    #[error("disturbance {value} outside [{lo}, {hi}] in component {index}")]
    DisturbanceOutside { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("invalid model parameter: {0}")]
    Parameter(String),
}

/// Axis-aligned compact set `Δ` of admissible disturbance values.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DisturbanceBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ModelError> {
        if lo.len() != hi.len() {
            return Err(ModelError::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (index, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l <= h) || !l.is_finite() || !h.is_finite() {
                return Err(ModelError::InvertedBox { index, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric box `[-b_j, b_j]`.
    pub fn symmetric(bounds: &[f64]) -> Result<Self, ModelError> {
        Self::new(bounds.iter().map(|b| -b).collect(), bounds.to_vec())
    }

    /// The zero-dimensional box, for plants without disturbance input.
    pub fn empty() -> Self {
        Self {
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, d: &[f64]) -> bool {
        d.len() == self.dim()
            && d.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn check(&self, d: &[f64]) -> Result<(), ModelError> {
        if d.len() != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                got: d.len(),
            });
        }
        for (index, &value) in d.iter().enumerate() {
            let (lo, hi) = (self.lo[index], self.hi[index]);
            if value < lo || value > hi {
                return Err(ModelError::DisturbanceOutside { index, value, lo, hi });
            }
        }
        Ok(())
    }

    /// All `2^m` corners. Degenerate axes are not deduplicated.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        (0..1usize << m)
            .map(|mask| {
                (0..m)
                    .map(|j| if mask >> j & 1 == 1 { self.hi[j] } else { self.lo[j] })
                    .collect()
            })
            .collect()
    }
}

/// Sampled-data plant with its emulated feedback law.
///
/// Implementations must be pure; they are shared across worker threads.
pub trait Plant: Send + Sync {
    fn name(&self) -> &str;
    /// `n`
    fn state_dim(&self) -> usize;
    /// `m_u`
    fn input_dim(&self) -> usize;
    fn disturbance_box(&self) -> &DisturbanceBox;
    /// Degree `α > 0` used for homogenization.
    fn homogeneity_degree(&self) -> f64;
    /// `υ(held)`
    fn control(&self, held: &[f64], u: &mut [f64]);
    /// `f(ζ, u, d)`
    fn dynamics(&self, zeta: &[f64], u: &[f64], d: &[f64], out: &mut [f64]);
}

/// Scalar triggering function `φ(ξ)` on the extended state `ξ = (ζ, ε)`.
///
/// Sampling is requested as soon as `φ ≥ 0`. Implementations must satisfy
/// `φ((x, 0)) < 0` for every `x`.
pub trait Trigger: Send + Sync {
    fn name(&self) -> &str;
    /// `n`; the trigger is evaluated on `ℝ²ⁿ`.
    fn state_dim(&self) -> usize;
    /// Degree `θ > 0` used for homogenization.
    fn homogeneity_degree(&self) -> f64;
    fn value(&self, xi: &[f64]) -> f64;

    /// `∇φ(ξ)`. Defaults to central differences with step [`FD_STEP`].
    fn gradient(&self, xi: &[f64], out: &mut [f64]) {
        central_difference(|p| self.value(p), xi, out);
    }

    /// Exact `φ̃(ξ, w)`, valid for every `w ≥ 0` including the continuation
    /// at `w = 0`. `None` when the trigger has no closed homogeneous form.
    fn homogenized_exact(&self, _xi: &[f64], _w: f64) -> Option<f64> {
        None
    }

    /// Exact `∂φ̃/∂ξ (ξ, w)`; returns `false` when not available.
    fn homogenized_gradient_exact(&self, _xi: &[f64], _w: f64, _out: &mut [f64]) -> bool {
        false
    }
}

pub(crate) fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], out: &mut [f64]) {
    let mut probe: Scratch = x.iter().copied().collect();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::Dimension { expected, got })
    }
}

/// Extended closed-loop field `f_e(ξ, d) = (f(ζ, υ(ζ+ε), d), −f(ζ, υ(ζ+ε), d))`.
///
/// Does not validate `d ∈ Δ`; callers that accept external disturbance
/// values should go through [`DisturbanceBox::check`] first.
pub fn assemble_extended_field(plant: &dyn Plant, xi: &[f64], d: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
    let n = plant.state_dim();
    check_dim(2 * n, xi.len())?;
    check_dim(2 * n, out.len())?;
    check_dim(plant.disturbance_box().dim(), d.len())?;
    extended_field_unchecked(plant, xi, d, out);
    Ok(())
}

pub(crate) fn extended_field_unchecked(plant: &dyn Plant, xi: &[f64], d: &[f64], out: &mut [f64]) {
    let n = plant.state_dim();
    let (zeta, eps) = xi.split_at(n);
    let held: Scratch = zeta.iter().zip(eps).map(|(z, e)| z + e).collect();
    let mut u: Scratch = smallvec::smallvec![0.0; plant.input_dim()];
    plant.control(&held, &mut u);
    let (flow, err) = out.split_at_mut(n);
    plant.dynamics(zeta, &u, d, flow);
    for (e, f) in err.iter_mut().zip(flow.iter()) {
        *e = -*f;
    }
}

/// Homogenized field on `ℝ²ⁿ⁺¹`: writes `w^{α+1} f_e(ξ/w, d)` into the first
/// `2n` entries of `out` and `0` into the last.
pub fn homogenize_field(plant: &dyn Plant, xi: &[f64], w: f64, d: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
    let n = plant.state_dim();
    check_dim(2 * n, xi.len())?;
    check_dim(2 * n + 1, out.len())?;
    check_dim(plant.disturbance_box().dim(), d.len())?;
    if !(w > 0.0) {
        return Err(ModelError::NonPositiveW(w));
    }
    homogenized_field_unchecked(plant, xi, w, d, &mut out[..2 * n]);
    out[2 * n] = 0.0;
    Ok(())
}

/// `w^{α+1} f_e(ξ/w, d)` without the trailing zero; `w > 0` is assumed.
pub(crate) fn homogenized_field_unchecked(plant: &dyn Plant, xi: &[f64], w: f64, d: &[f64], out: &mut [f64]) {
    let scaled: Scratch = xi.iter().map(|v| v / w).collect();
    extended_field_unchecked(plant, &scaled, d, out);
    let factor = w.powf(plant.homogeneity_degree() + 1.0);
    for v in out.iter_mut() {
        *v *= factor;
    }
}

/// `φ̃(ξ, w) = w^{θ+1} φ(ξ/w)`.
///
/// At `w = 0` only triggers with an exact homogeneous form are accepted; see
/// [`homogenize_trigger_boundary`] for the flagged fallback.
pub fn homogenize_trigger(trigger: &dyn Trigger, xi: &[f64], w: f64) -> Result<f64, ModelError> {
    check_dim(2 * trigger.state_dim(), xi.len())?;
    if w < 0.0 || w.is_nan() {
        return Err(ModelError::NonPositiveW(w));
    }
    if let Some(v) = trigger.homogenized_exact(xi, w) {
        return Ok(v);
    }
    if w == 0.0 {
        return Err(ModelError::NonPositiveW(w));
    }
    Ok(homogenized_trigger_generic(trigger, xi, w))
}

/// Like [`homogenize_trigger`] but never fails at `w = 0`: triggers without
/// an exact form are evaluated at `w = `[`W_LIMIT_PROBE`] instead. The flag is
/// `true` when that approximation was used.
pub fn homogenize_trigger_boundary(trigger: &dyn Trigger, xi: &[f64], w: f64) -> Result<(f64, bool), ModelError> {
    match homogenize_trigger(trigger, xi, w) {
        Ok(v) => Ok((v, false)),
        Err(ModelError::NonPositiveW(0.0)) => Ok((homogenized_trigger_generic(trigger, xi, W_LIMIT_PROBE), true)),
        Err(e) => Err(e),
    }
}

fn homogenized_trigger_generic(trigger: &dyn Trigger, xi: &[f64], w: f64) -> f64 {
    let scaled: Scratch = xi.iter().map(|v| v / w).collect();
    w.powf(trigger.homogeneity_degree() + 1.0) * trigger.value(&scaled)
}

/// `φ̃` for `w > 0` with no error plumbing; used on hot paths.
pub(crate) fn homogenized_trigger_unchecked(trigger: &dyn Trigger, xi: &[f64], w: f64) -> f64 {
    trigger
        .homogenized_exact(xi, w)
        .unwrap_or_else(|| homogenized_trigger_generic(trigger, xi, w))
}

/// `∂φ̃/∂ξ (ξ, w) = w^θ ∇φ(ξ/w)` for `w > 0`.
pub fn homogenized_trigger_gradient(
    trigger: &dyn Trigger,
    xi: &[f64],
    w: f64,
    out: &mut [f64],
) -> Result<(), ModelError> {
    check_dim(2 * trigger.state_dim(), xi.len())?;
    check_dim(xi.len(), out.len())?;
    if !(w > 0.0) {
        return Err(ModelError::NonPositiveW(w));
    }
    homogenized_gradient_unchecked(trigger, xi, w, out);
    Ok(())
}

pub(crate) fn homogenized_gradient_unchecked(trigger: &dyn Trigger, xi: &[f64], w: f64, out: &mut [f64]) {
    if trigger.homogenized_gradient_exact(xi, w, out) {
        return;
    }
    let scaled: Scratch = xi.iter().map(|v| v / w).collect();
    trigger.gradient(&scaled, out);
    let factor = w.powf(trigger.homogeneity_degree());
    for g in out.iter_mut() {
        *g *= factor;
    }
}

/// Lie derivative `∂φ̃/∂ξ · w^{α+1} f_e(ξ/w, d)` of the homogenized trigger
/// along the homogenized field.
pub fn homogenized_lie_derivative(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    xi: &[f64],
    w: f64,
    d: &[f64],
) -> Result<f64, ModelError> {
    check_dim(2 * plant.state_dim(), xi.len())?;
    check_dim(2 * trigger.state_dim(), xi.len())?;
    check_dim(plant.disturbance_box().dim(), d.len())?;
    if !(w > 0.0) {
        return Err(ModelError::NonPositiveW(w));
    }
    Ok(lie_derivative_unchecked(plant, trigger, xi, w, d))
}

pub(crate) fn lie_derivative_unchecked(plant: &dyn Plant, trigger: &dyn Trigger, xi: &[f64], w: f64, d: &[f64]) -> f64 {
    let mut grad: Scratch = smallvec::smallvec![0.0; xi.len()];
    let mut field: Scratch = smallvec::smallvec![0.0; xi.len()];
    homogenized_gradient_unchecked(trigger, xi, w, &mut grad);
    homogenized_field_unchecked(plant, xi, w, d, &mut field);
    grad.iter().zip(&field).map(|(g, f)| g * f).sum()
}
