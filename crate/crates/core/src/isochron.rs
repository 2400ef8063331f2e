//! Inner approximations of isochronous manifolds and the region partition
//! built from them.
//!
//! Given comparison coefficients `δ₀ ≥ 0, δ₁ > 0` and a radius `r`, the
//! bound on the homogenized trigger along any disturbance realization is
//!
//! ```text
//! μ((x,w), t) = (|(x,w)|/r)^{θ+1} · ψ(φ₀, (|(x,w)|/r)^α t)
//! ψ(φ₀, s)    = e^{δ₀s} φ₀ + (e^{δ₀s} − 1)/δ₀ · δ₁
//! φ₀          = φ̃((r x/|(x,w)|, 0, r w/|(x,w)|))
//! ```
//!
//! `ψ` is the first row of `exp([[δ₀, 1], [0, 0]] s) · (φ₀, δ₁)ᵀ`. Since it is
//! strictly increasing in `s` its zero has the closed form
//! `s* = −ln(1 + δ₀φ₀/δ₁)/δ₀`, and the lower bound on the inter-sampling time
//! is `τ↓ = s* (r/|(x,w)|)^α`. The bound is valid inside the cone
//! `|x|² + w² ≤ (w/w̲)² r²`.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::models::{homogenized_trigger_unchecked, Scratch, Trigger};
use crate::rng::{seeded, uniform_in_ball};
use crate::setsynth::{BoxSet, Interval};

/// Below this `|δ₀ t|` the linear limit `φ₀ + δ₁ t` is used for `ψ`.
pub const PSI_LINEAR_SWITCH: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsochronError {
    #[error("point must be non-zero with w > 0 (|(x,w)| = {norm}, w = {w})")]
    Domain { norm: f64, w: f64 },
    #[error("invalid engine parameter: {0}")]
    Parameter(String),
    #[error("no feasible radius: need r > w̲ = {w_min} but the bound is {bound}")]
    InfeasibleRadius { w_min: f64, bound: f64 },
    #[error("δ₀φ₀ + δ₁ = {0} ≤ 0 at the projection; the coefficients violate the boundary condition")]
    Inconsistent(f64),
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("state outside the cone (B₁): |x|² = {norm_sq} > {limit}")]
    OutsideCone { norm_sq: f64, limit: f64 },
    #[error("state outside B₂: τ↓ = {tau_down} < τ₁ = {tau_first}")]
    BelowFirstTime { tau_down: f64, tau_first: f64 },
}

/// `ψ(φ₀, t) = e^{δ₀t}φ₀ + ((e^{δ₀t} − 1)/δ₀) δ₁`.
pub fn psi(phi0: f64, delta0: f64, delta1: f64, t: f64) -> f64 {
    let a = delta0 * t;
    if a.abs() < PSI_LINEAR_SWITCH {
        phi0 + delta1 * t
    } else {
        a.exp() * phi0 + a.exp_m1() / delta0 * delta1
    }
}

/// Zero of `s ↦ ψ(φ₀, s)` for `φ₀ < 0`.
pub fn psi_root(phi0: f64, delta0: f64, delta1: f64) -> Result<f64, IsochronError> {
    let slope0 = delta0 * phi0 + delta1;
    if !(slope0 > 0.0) {
        return Err(IsochronError::Inconsistent(slope0));
    }
    if delta0 == 0.0 {
        Ok(-phi0 / delta1)
    } else {
        Ok(-(delta0 * phi0 / delta1).ln_1p() / delta0)
    }
}

/// Largest radius whose spherical segment `D_r` fits in `Z × W`, scaled by
/// `safety`: `r = safety · √(inradius(Z)² + w̲²)`.
pub fn pick_radius(z: &BoxSet, w: Interval, safety: f64) -> Result<f64, IsochronError> {
    let rho = z.inradius();
    if !(rho > 0.0) {
        return Err(IsochronError::Parameter(format!(
            "Z must contain the origin in its interior (inradius {rho})"
        )));
    }
    if !(w.lo > 0.0) || !(w.hi >= w.lo) {
        return Err(IsochronError::Parameter(format!(
            "W = [{}, {}] must satisfy 0 < w̲ ≤ w̄",
            w.lo, w.hi
        )));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(IsochronError::Parameter(format!("safety {safety} not in (0, 1]")));
    }
    let bound = (rho * rho + w.lo * w.lo).sqrt();
    let r = safety * bound;
    if r <= w.lo {
        return Err(IsochronError::InfeasibleRadius { w_min: w.lo, bound: r });
    }
    Ok(r)
}

/// Evaluates `μ` and `τ↓` for fixed coefficients.
#[derive(Clone)]
pub struct IsochronEngine {
    delta0: f64,
    delta1: f64,
    radius: f64,
    w_min: f64,
    alpha: f64,
    theta: f64,
    trigger: Arc<dyn Trigger>,
}

impl std::fmt::Debug for IsochronEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IsochronEngine")
            .field("delta0", &self.delta0)
            .field("delta1", &self.delta1)
            .field("radius", &self.radius)
            .field("w_min", &self.w_min)
            .field("alpha", &self.alpha)
            .field("theta", &self.theta)
            .field("trigger", &self.trigger.name())
            .finish()
    }
}

/// Parameters of an [`IsochronEngine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineParams {
    pub delta0: f64,
    pub delta1: f64,
    pub radius: f64,
    pub w_min: f64,
    pub alpha: f64,
}

impl IsochronEngine {
    pub fn new(params: EngineParams, trigger: Arc<dyn Trigger>) -> Result<Self, IsochronError> {
        let EngineParams {
            delta0,
            delta1,
            radius,
            w_min,
            alpha,
        } = params;
        if !(delta0 >= 0.0) || !delta0.is_finite() {
            return Err(IsochronError::Parameter(format!("δ₀ = {delta0} must be ≥ 0")));
        }
        if !(delta1 > 0.0) || !delta1.is_finite() {
            return Err(IsochronError::Parameter(format!("δ₁ = {delta1} must be > 0")));
        }
        if !(w_min > 0.0) {
            return Err(IsochronError::Parameter(format!("w̲ = {w_min} must be > 0")));
        }
        if !(radius > w_min) {
            return Err(IsochronError::InfeasibleRadius { w_min, bound: radius });
        }
        if !(alpha > 0.0) {
            return Err(IsochronError::Parameter(format!("α = {alpha} must be > 0")));
        }
        let theta = trigger.homogeneity_degree();
        Ok(Self {
            delta0,
            delta1,
            radius,
            w_min,
            alpha,
            theta,
            trigger,
        })
    }

    /// Checks that `D_r` lies inside `Z × W`.
    pub fn check_segment_inside(&self, z: &BoxSet) -> Result<(), IsochronError> {
        let reach = (self.radius * self.radius - self.w_min * self.w_min).sqrt();
        let rho = z.inradius();
        if reach > rho * (1.0 + 1e-12) {
            return Err(IsochronError::InfeasibleRadius {
                w_min: self.w_min,
                bound: (rho * rho + self.w_min * self.w_min).sqrt(),
            });
        }
        Ok(())
    }

    pub fn params(&self) -> EngineParams {
        EngineParams {
            delta0: self.delta0,
            delta1: self.delta1,
            radius: self.radius,
            w_min: self.w_min,
            alpha: self.alpha,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn trigger(&self) -> &Arc<dyn Trigger> {
        &self.trigger
    }

    fn norm(x: &[f64], w: f64) -> Result<f64, IsochronError> {
        let norm = (x.iter().map(|v| v * v).sum::<f64>() + w * w).sqrt();
        if !(w > 0.0) || !(norm > 0.0) || !norm.is_finite() {
            return Err(IsochronError::Domain { norm, w });
        }
        Ok(norm)
    }

    /// `φ̃` at the projection of `(x, w)` onto `D_r`, with zero error part.
    pub fn projected_trigger(&self, x: &[f64], w: f64) -> Result<f64, IsochronError> {
        let norm = Self::norm(x, w)?;
        Ok(self.projected_trigger_at(x, w, norm))
    }

    fn projected_trigger_at(&self, x: &[f64], w: f64, norm: f64) -> f64 {
        let k = self.radius / norm;
        let n = x.len();
        let mut xi: Scratch = smallvec::smallvec![0.0; 2 * n];
        for (slot, v) in xi.iter_mut().zip(x) {
            *slot = k * v;
        }
        homogenized_trigger_unchecked(self.trigger.as_ref(), &xi, k * w)
    }

    /// `μ((x, w), t)`.
    pub fn mu(&self, x: &[f64], w: f64, t: f64) -> Result<f64, IsochronError> {
        let norm = Self::norm(x, w)?;
        let ratio = norm / self.radius;
        let phi0 = self.projected_trigger_at(x, w, norm);
        let s = ratio.powf(self.alpha) * t;
        Ok(ratio.powf(self.theta + 1.0) * psi(phi0, self.delta0, self.delta1, s))
    }

    /// Closed-form zero of `t ↦ μ((x, w), t)`.
    pub fn tau_down(&self, x: &[f64], w: f64) -> Result<f64, IsochronError> {
        let norm = Self::norm(x, w)?;
        let phi0 = self.projected_trigger_at(x, w, norm);
        let s = psi_root(phi0, self.delta0, self.delta1)?;
        Ok(s * (self.radius / norm).powf(self.alpha))
    }

    /// Membership of the closed cone `|x|² + w² ≤ (w/w̲)² r²`, `w > 0`.
    pub fn in_cone(&self, x: &[f64], w: f64) -> bool {
        if !(w > 0.0) {
            return false;
        }
        let lhs = x.iter().map(|v| v * v).sum::<f64>() + w * w;
        lhs <= (w / self.w_min).powi(2) * self.radius * self.radius
    }

    /// Squared radius of `B₁ = {x : (x, 1) ∈ C}`: `(r² − w̲²)/w̲²`.
    pub fn b1_radius_sq(&self) -> f64 {
        (self.radius * self.radius - self.w_min * self.w_min) / (self.w_min * self.w_min)
    }
}

/// Strictly increasing sampling times `τ₁ < … < τ_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    first: f64,
    ratio: f64,
}

impl TimeGrid {
    /// `τ_i = τ₁ · ratio^{i−1}` for `i = 1..=q`.
    pub fn geometric(first: f64, ratio: f64, q: usize) -> Result<Self, IsochronError> {
        if !(first > 0.0) || !first.is_finite() {
            return Err(IsochronError::Grid(format!("τ₁ = {first} must be > 0")));
        }
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(IsochronError::Grid(format!("ratio = {ratio} must be > 1")));
        }
        if q == 0 {
            return Err(IsochronError::Grid("q must be ≥ 1".into()));
        }
        let times: Vec<f64> = (0..q).map(|i| first * ratio.powi(i as i32)).collect();
        if times.windows(2).any(|w| !(w[0] < w[1])) || !times[q - 1].is_finite() {
            return Err(IsochronError::Grid("grid is not strictly increasing".into()));
        }
        Ok(Self { times, first, ratio })
    }

    /// Grid whose deepest time is `τ↓((0,1))` and whose first time lies
    /// below every `τ↓((x,1))` found on the sphere `|x| = coverage_radius`.
    pub fn auto(
        engine: &IsochronEngine,
        dim: usize,
        coverage_radius: f64,
        ratio: f64,
        seed: u64,
    ) -> Result<Self, IsochronError> {
        if !(coverage_radius > 0.0) {
            return Err(IsochronError::Grid(format!(
                "coverage radius {coverage_radius} must be > 0"
            )));
        }
        if !(ratio > 1.0) {
            return Err(IsochronError::Grid(format!("ratio = {ratio} must be > 1")));
        }
        let deepest = engine.tau_down(&vec![0.0; dim], 1.0)?;
        let mut rng = seeded(seed);
        let shallow = RegionPartition::min_tau_on_sphere(engine, dim, coverage_radius, 2000, &mut rng)?;
        let shallow = shallow.min(deepest);
        let q = ((deepest / shallow).ln() / ratio.ln()).ceil() as usize + 1;
        Self::geometric(deepest / ratio.powi(q as i32 - 1), ratio, q)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn first(&self) -> f64 {
        self.first
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `τ_i` with `i` 1-based.
    pub fn time(&self, index: usize) -> f64 {
        self.times[index - 1]
    }
}

/// Regions `R_i = {(x,w) ∈ C : μ(·, τ_i) ≤ 0 ≤ μ(·, τ_{i+1})}` looked up on
/// the `w = 1` plane.
#[derive(Debug, Clone)]
pub struct RegionPartition {
    engine: IsochronEngine,
    grid: TimeGrid,
}

/// Coverage of the partition on the `w = 1` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub b1_radius_sq: f64,
    /// Radius of the probe ball the fractions refer to.
    pub probe_radius: f64,
    pub samples: usize,
    /// Fraction of the probe ball inside `B₂ = {x : τ↓((x,1)) ≥ τ₁}`.
    pub b2_fraction: f64,
    /// Fraction of the probe ball inside `B = B₁ ∩ B₂`.
    pub covered_fraction: f64,
}

impl RegionPartition {
    pub fn new(engine: IsochronEngine, grid: TimeGrid) -> Self {
        Self { engine, grid }
    }

    pub fn engine(&self) -> &IsochronEngine {
        &self.engine
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// 1-based index `i = max{ j : τ_j ≤ τ↓((x, 1)) }`; `τ↓ = τ_j` belongs to
    /// region `j`. States outside `B = B₁ ∩ B₂` are errors.
    pub fn region_index(&self, x: &[f64]) -> Result<usize, IsochronError> {
        if !self.engine.in_cone(x, 1.0) {
            return Err(IsochronError::OutsideCone {
                norm_sq: x.iter().map(|v| v * v).sum(),
                limit: self.engine.b1_radius_sq(),
            });
        }
        let tau = self.engine.tau_down(x, 1.0)?;
        let index = self.grid.times.partition_point(|&t| t <= tau);
        if index == 0 {
            return Err(IsochronError::BelowFirstTime {
                tau_down: tau,
                tau_first: self.grid.first,
            });
        }
        Ok(index)
    }

    pub fn dwell(&self, x: &[f64]) -> Result<f64, IsochronError> {
        self.region_index(x).map(|i| self.grid.time(i))
    }

    /// `B₁` radius and a Monte-Carlo estimate of how much of the ball of
    /// radius `probe_radius` is covered.
    pub fn coverage_report(&self, dim: usize, probe_radius: f64, samples: usize, seed: u64) -> CoverageReport {
        let mut rng = seeded(seed);
        let (mut in_b2, mut in_b) = (0usize, 0usize);
        for _ in 0..samples {
            let x = uniform_in_ball(&mut rng, dim, probe_radius);
            let b2 = self
                .engine
                .tau_down(&x, 1.0)
                .map(|t| t >= self.grid.first)
                .unwrap_or(false);
            if b2 {
                in_b2 += 1;
                if self.engine.in_cone(&x, 1.0) {
                    in_b += 1;
                }
            }
        }
        let denom = samples.max(1) as f64;
        CoverageReport {
            b1_radius_sq: self.engine.b1_radius_sq(),
            probe_radius,
            samples,
            b2_fraction: in_b2 as f64 / denom,
            covered_fraction: in_b as f64 / denom,
        }
    }

    /// Smallest `τ↓((x,1))` over `n_dirs` directions on the sphere `|x| =
    /// radius`, sampled with `rng`.
    pub fn min_tau_on_sphere<R: Rng>(
        engine: &IsochronEngine,
        dim: usize,
        radius: f64,
        n_dirs: usize,
        rng: &mut R,
    ) -> Result<f64, IsochronError> {
        let mut best = f64::INFINITY;
        for _ in 0..n_dirs {
            let dir = crate::rng::unit_direction(rng, dim);
            let x: Vec<f64> = dir.iter().map(|v| v * radius).collect();
            best = best.min(engine.tau_down(&x, 1.0)?);
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::QuadraticTrigger;

    fn reference_engine() -> IsochronEngine {
        IsochronEngine::new(
            EngineParams {
                delta0: 0.0353,
                delta1: 0.3440,
                radius: 0.099,
                w_min: 1e-6,
                alpha: 1.0,
            },
            Arc::new(QuadraticTrigger::benchmark()),
        )
        .unwrap()
    }

    #[test]
    fn auto_grid_spans_sphere() {
        let e = reference_engine();
        let g = TimeGrid::auto(&e, 2, 2.0, 1.01, 1).unwrap();
        assert!((g.last() - e.tau_down(&[0.0, 0.0], 1.0).unwrap()).abs() < 1e-15);
        let p = RegionPartition::new(e.clone(), g.clone());
        for x in [[2.0, 0.0], [0.0, -2.0], [1.2, 1.6]] {
            assert!(p.region_index(&x).is_ok());
        }
        assert_eq!(p.region_index(&[0.0, 0.0]).unwrap(), g.len());
        assert!(TimeGrid::auto(&e, 2, 0.0, 1.01, 1).is_err());
    }

    #[test]
    fn psi_linear_limit() {
        assert!((psi(-16.0, 0.0, 0.344, 1.0) - (-15.656)).abs() < 1e-12);
    }

    #[test]
    fn psi_at_zero_time() {
        assert_eq!(psi(-16.0, 0.0353, 0.344, 0.0), -16.0);
    }

    #[test]
    fn psi_exact_root() {
        assert!(psi(-1.0, 1.0, 2.0, 2f64.ln()).abs() < 1e-15);
        assert!((psi_root(-1.0, 1.0, 2.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn psi_is_continuous_across_switch() {
        let (phi0, d1, t) = (-0.5, 0.3, 2.0);
        let below = psi(phi0, 0.4e-12, d1, t);
        let above = psi(phi0, 0.6e-12, d1, t);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn radius_for_benchmark_sets() {
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let r = pick_radius(&z, Interval::new(1e-6, 0.1).unwrap(), 0.99).unwrap();
        assert!((r - 0.099).abs() < 1e-9);
    }

    #[test]
    fn radius_unit_box_full_safety() {
        let z = BoxSet::symmetric(&[1.0, 1.0]).unwrap();
        let r = pick_radius(&z, Interval::new(0.1, 1.0).unwrap(), 1.0).unwrap();
        assert!((r - 1.01f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn radius_infeasible_when_band_collapses() {
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let w = Interval::new(0.1, 0.2).unwrap();
        assert!(matches!(
            pick_radius(&z, w, 0.5),
            Err(IsochronError::InfeasibleRadius { .. })
        ));
        let off_center = BoxSet::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(pick_radius(&off_center, w, 0.99).is_err());
    }

    #[test]
    fn mu_negative_at_time_zero() {
        let e = reference_engine();
        for x in [[0.0, 0.0], [1.0, -2.0], [1e3, 4.0]] {
            assert!(e.mu(&x, 1.0, 0.0).unwrap() < 0.0);
        }
    }

    #[test]
    fn mu_hand_value_at_unit_w() {
        // projection (0, 0, r): φ̃ = −16 r², prefactor (1/r)².
        let e = reference_engine();
        assert!((e.mu(&[0.0, 0.0], 1.0, 0.0).unwrap() + 16.0).abs() < 1e-12);
    }

    #[test]
    fn mu_scaling_identity() {
        let e = reference_engine();
        let (x, w, t) = ([0.7, -1.3], 0.8, 0.01);
        let lambda: f64 = 2.0;
        let lhs = e.mu(&[lambda * x[0], lambda * x[1]], lambda * w, t).unwrap();
        let rhs = lambda.powi(2) * e.mu(&x, w, lambda * t).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn mu_rejects_origin() {
        let e = reference_engine();
        assert!(matches!(e.mu(&[0.0, 0.0], 0.0, 1.0), Err(IsochronError::Domain { .. })));
        assert!(e.tau_down(&[1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn tau_down_on_segment_with_unit_coefficients() {
        // φ̃ ≡ −r²-scaled constant chosen so that φ₀ = −1 on D_r.
        let trig = QuadraticTrigger::lebesgue(1, 1.0).unwrap();
        let e = IsochronEngine::new(
            EngineParams {
                delta0: 1.0,
                delta1: 2.0,
                radius: 1.0,
                w_min: 0.5,
                alpha: 1.0,
            },
            Arc::new(trig),
        )
        .unwrap();
        // (0, 1) lies on D_1 and projects to itself: φ₀ = −1.
        assert!((e.tau_down(&[0.0], 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn tau_down_reference_parameters() {
        let e = reference_engine();
        let tau = e.tau_down(&[0.0, 0.0], 1.0).unwrap();
        let phi0 = -16.0 * 0.099 * 0.099;
        let s = (0.344f64 / (0.344 + 0.0353 * phi0)).ln() / 0.0353;
        assert!((tau - s * 0.099).abs() < 1e-15);
        assert!((tau - 0.0452).abs() < 5e-4, "{tau}");
    }

    #[test]
    fn tau_down_scales_with_degree() {
        let e = reference_engine();
        let (x, w) = ([0.4, 0.9], 0.7);
        let base = e.tau_down(&x, w).unwrap();
        let scaled = e.tau_down(&[0.8, 1.8], 1.4).unwrap();
        assert!((scaled - base / 2.0).abs() <= 1e-12 * base);
    }

    #[test]
    fn tau_down_reports_inconsistent_coefficients() {
        let e = IsochronEngine::new(
            EngineParams {
                delta0: 10.0,
                delta1: 0.1,
                radius: 0.099,
                w_min: 1e-6,
                alpha: 1.0,
            },
            Arc::new(QuadraticTrigger::benchmark()),
        )
        .unwrap();
        assert!(matches!(
            e.tau_down(&[0.0, 0.0], 1.0),
            Err(IsochronError::Inconsistent(_))
        ));
    }

    #[test]
    fn cone_membership() {
        let e = reference_engine();
        assert!(e.in_cone(&[0.0, 0.0], 3.0));
        assert!(e.in_cone(&[2.0, 0.0], 1.0));
        let reach = (0.099f64.powi(2) - 1e-12).sqrt();
        assert!(!e.in_cone(&[reach * 1.001, 0.0], 1e-6));
        assert!(e.in_cone(&[reach * 0.999, 0.0], 1e-6));
        assert!(!e.in_cone(&[0.0, 0.0], 0.0));
    }

    #[test]
    fn b1_radius_for_reference_values() {
        let e = reference_engine();
        assert!((e.b1_radius_sq().sqrt() - 9.9e4).abs() < 1.0);
    }

    #[test]
    fn engine_validates_parameters() {
        let t: Arc<dyn Trigger> = Arc::new(QuadraticTrigger::benchmark());
        let base = reference_engine().params();
        for bad in [
            EngineParams { delta0: -1.0, ..base },
            EngineParams { delta1: 0.0, ..base },
            EngineParams { radius: 1e-6, ..base },
            EngineParams { alpha: 0.0, ..base },
        ] {
            assert!(IsochronEngine::new(bad, t.clone()).is_err());
        }
    }

    #[test]
    fn grid_generation() {
        let g = TimeGrid::geometric(63e-5, 1.01, 434).unwrap();
        assert_eq!(g.len(), 434);
        let expected = 63e-5 * 1.01f64.powi(433);
        assert!((g.last() - expected).abs() < 1e-15);
        assert!((g.last() - 0.0468).abs() < 1e-4);
        assert!(TimeGrid::geometric(1e-3, 1.0, 3).is_err());
        assert!(TimeGrid::geometric(0.0, 1.1, 3).is_err());
        assert!(TimeGrid::geometric(1e-3, 1.1, 0).is_err());
    }

    fn scalar_partition(times: &[f64]) -> RegionPartition {
        // Lebesgue trigger in one dimension, δ₀ = 0: φ₀ = −r²w²/(x²+w²) on the
        // w = 1 plane, so τ↓((x,1)) = r³/(δ₁ (1+x²)^{3/2}).
        let trig = QuadraticTrigger::lebesgue(1, 1.0).unwrap();
        let e = IsochronEngine::new(
            EngineParams {
                delta0: 0.0,
                delta1: 1.0,
                radius: 1.0,
                w_min: 1e-3,
                alpha: 1.0,
            },
            Arc::new(trig),
        )
        .unwrap();
        let g = TimeGrid::geometric(times[0], times[1] / times[0], times.len()).unwrap();
        RegionPartition::new(e, g)
    }

    fn x_for_tau(tau: f64) -> f64 {
        (tau.powf(-2.0 / 3.0) - 1.0).max(0.0).sqrt()
    }

    #[test]
    fn region_lookup_bands() {
        let p = scalar_partition(&[0.1, 0.2, 0.4, 0.8, 1.6, 3.2]);
        let x = x_for_tau(0.5);
        assert_eq!(p.region_index(&[x]).unwrap(), 3);
        assert_eq!(p.dwell(&[x]).unwrap(), p.grid().time(3));
        // τ↓ at the origin is 1 < τ_q: deepest populated region is τ₄ = 0.8.
        assert_eq!(p.region_index(&[0.0]).unwrap(), 4);
        assert!(matches!(
            p.region_index(&[x_for_tau(0.05)]),
            Err(IsochronError::BelowFirstTime { .. })
        ));
    }

    #[test]
    fn region_lookup_tie_is_inclusive_lower() {
        let p = scalar_partition(&[0.1, 0.2, 0.4]);
        // Find x with τ↓ exactly on a grid time by nudging to the first point
        // whose computed τ↓ is ≥ τ₂.
        let mut x = x_for_tau(0.2);
        let tau_of = |x: f64| p.engine().tau_down(&[x], 1.0).unwrap();
        while tau_of(x) < 0.2 {
            x = f64::from_bits(x.to_bits() - 1);
        }
        while tau_of(f64::from_bits(x.to_bits() + 1)) >= 0.2 {
            x = f64::from_bits(x.to_bits() + 1);
        }
        assert!(tau_of(x) >= 0.2);
        assert_eq!(p.region_index(&[x]).unwrap(), 2);
        assert_eq!(p.region_index(&[f64::from_bits(x.to_bits() + 1)]).unwrap(), 1);
    }

    #[test]
    fn region_lookup_outside_cone() {
        let p = scalar_partition(&[1e-12, 2e-12]);
        let far = 2.0 * p.engine().b1_radius_sq().sqrt();
        assert!(matches!(p.region_index(&[far]), Err(IsochronError::OutsideCone { .. })));
    }

    #[test]
    fn single_time_grid_assigns_first_time() {
        let e = reference_engine();
        let p = RegionPartition::new(e, TimeGrid::geometric(1e-3, 2.0, 1).unwrap());
        assert_eq!(p.dwell(&[0.3, 0.3]).unwrap(), 1e-3);
        assert_eq!(p.dwell(&[0.0, 0.0]).unwrap(), 1e-3);
    }

    #[test]
    fn coverage_grows_with_smaller_first_time() {
        let e = reference_engine();
        let coarse = RegionPartition::new(e.clone(), TimeGrid::geometric(4e-3, 1.01, 10).unwrap());
        let fine = RegionPartition::new(e, TimeGrid::geometric(1e-3, 1.01, 10).unwrap());
        let a = coarse.coverage_report(2, 6.0, 4000, 3);
        let b = fine.coverage_report(2, 6.0, 4000, 3);
        assert!(b.b2_fraction > a.b2_fraction);
        assert_eq!(a.b1_radius_sq, b.b1_radius_sq);
    }

    #[test]
    fn halving_w_min_quadruples_b1() {
        let t: Arc<dyn Trigger> = Arc::new(QuadraticTrigger::benchmark());
        let base = reference_engine().params();
        let a = IsochronEngine::new(EngineParams { w_min: 1e-3, ..base }, t.clone()).unwrap();
        let b = IsochronEngine::new(EngineParams { w_min: 5e-4, ..base }, t).unwrap();
        let ratio = b.b1_radius_sq() / a.b1_radius_sq();
        assert!((ratio - 4.0).abs() < 1e-3, "{ratio}");
    }
}
