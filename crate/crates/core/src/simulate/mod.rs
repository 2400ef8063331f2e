//! Fixed-step integration of the sampled-data loop, triggering-crossing
//! detection, and brute-force inter-sampling time oracles.
//!
//! All integration is classical fourth-order Runge–Kutta. Disturbances are
//! evaluated at the RK stage times, so closed-form realizations are not
//! frozen over a step.

mod closed_loop;
mod disturbance;

pub use closed_loop::{closed_loop_run, RunOptions, SimResult};
pub use disturbance::DisturbanceSignal;

use rand::Rng;
use thiserror::Error;

use crate::isochron::IsochronError;
use crate::models::{
    extended_field_unchecked, homogenized_field_unchecked, homogenized_trigger_unchecked, ModelError, Plant, Trigger,
};
use crate::rng::{stream, vertex_biased};

/// Default integration step for the benchmark loop (s).
pub const DEFAULT_STEP: f64 = 5e-5;
/// Default event-location tolerance (s).
pub const DEFAULT_EVENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("triggering function is already non-negative at the sample: φ = {0}")]
    TriggeredAtSample(f64),
    #[error("invalid integration setting: {0}")]
    Setting(String),
    #[error("invalid disturbance signal: {0}")]
    Signal(String),
    #[error("scheduler returned non-positive dwell {dwell} at t = {t}")]
    NonPositiveDwell { t: f64, dwell: f64 },
    #[error("state left the partition coverage at t = {t}: {source}")]
    Coverage {
        t: f64,
        state: Vec<f64>,
        source: IsochronError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// States sampled on a uniform grid of step `h`; only the last point may
/// be closer to its predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    trigger_values: Vec<f64>,
}

impl Trajectory {
    pub fn new(step: f64, dim: usize) -> Self {
        Self {
            step,
            dim,
            times: Vec::new(),
            states: Vec::new(),
            trigger_values: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, state: &[f64], phi: Option<f64>) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(t);
        self.states.extend_from_slice(state);
        if let Some(p) = phi {
            self.trigger_values.push(p);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// `φ` at each recorded point; empty when no trigger was tracked.
    pub fn trigger_values(&self) -> &[f64] {
        &self.trigger_values
    }
}

/// Outcome of a triggering-crossing search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    At(f64),
    /// No crossing before the search horizon.
    HorizonExceeded,
}

impl Crossing {
    pub fn time(self) -> Option<f64> {
        match self {
            Self::At(t) => Some(t),
            Self::HorizonExceeded => None,
        }
    }

    /// Crossing time, with `+∞` standing in for a missed crossing.
    pub fn time_or_inf(self) -> f64 {
        self.time().unwrap_or(f64::INFINITY)
    }
}

pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub(crate) fn step<F>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64, out: &mut [f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        f(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = y[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// How a segment ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SegmentEnd {
    Crossed,
    Reached,
}

/// Integrates `y` from `t0` up to `t_end` on the grid `t0 + k·h`, stopping
/// early at the first point where `event(y) ≥ 0`. The crossing is located
/// by bisection on the length of the final RK step to within `tol`; the
/// returned time is the right end of the bracket, where `event ≥ 0`.
///
/// `observe` sees every new point (never the initial one).
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_segment<F, G, O>(
    rk: &mut Rk4,
    field: &mut F,
    event: Option<&G>,
    t0: f64,
    y: &mut [f64],
    h: f64,
    t_end: f64,
    tol: f64,
    observe: &mut O,
) -> Result<(f64, SegmentEnd), SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: Fn(&[f64]) -> f64,
    O: FnMut(f64, &[f64]),
{
    let mut prev = y.to_vec();
    let mut next = vec![0.0; y.len()];
    let mut k: u64 = 0;
    let mut t = t0;
    // Remainders below this are rounding noise, not a step.
    let eps_t = 1e-9 * h;
    while t < t_end - eps_t {
        let grid_next = t0 + (k + 1) as f64 * h;
        let t_next = if grid_next > t_end - eps_t { t_end } else { grid_next };
        let dt = t_next - t;
        rk.step(field, t, &prev, dt, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Divergence { t: t_next });
        }
        if let Some(g) = event {
            if g(&next) >= 0.0 {
                let (mut lo, mut hi) = (0.0, dt);
                let mut probe = vec![0.0; y.len()];
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    rk.step(field, t, &prev, mid, &mut probe);
                    if g(&probe) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if hi < dt {
                    rk.step(field, t, &prev, hi, &mut next);
                }
                y.copy_from_slice(&next);
                observe(t + hi, y);
                return Ok((t + hi, SegmentEnd::Crossed));
            }
        }
        observe(t_next, &next);
        std::mem::swap(&mut prev, &mut next);
        t = t_next;
        k += 1;
    }
    y.copy_from_slice(&prev);
    Ok((t, SegmentEnd::Reached))
}

fn check_step(h: f64, horizon: f64) -> Result<(), SimError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(SimError::Setting(format!("step must be positive, got {h}")));
    }
    if !(horizon >= h) {
        return Err(SimError::Setting(format!(
            "horizon {horizon} shorter than one step {h}"
        )));
    }
    Ok(())
}

/// Field of the held loop `ξ̇ = f_e(ξ, d(t))` as an RK right-hand side.
pub(crate) fn held_field<'a>(
    plant: &'a dyn Plant,
    signal: &'a DisturbanceSignal,
) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    let n = plant.state_dim();
    let mut d = vec![0.0; plant.disturbance_box().dim()];
    move |t, xi, out| {
        signal.evaluate(t, &xi[..n], &mut d);
        extended_field_unchecked(plant, xi, &d, out);
    }
}

/// Field of the homogenized loop at fixed `w > 0`, restricted to the
/// `ξ`-coordinates (`ẇ = 0`).
pub(crate) fn homogenized_field<'a>(
    plant: &'a dyn Plant,
    signal: &'a DisturbanceSignal,
    w: f64,
) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    let n = plant.state_dim();
    let mut d = vec![0.0; plant.disturbance_box().dim()];
    let mut zeta = vec![0.0; n];
    move |t, xi, out| {
        for (z, x) in zeta.iter_mut().zip(&xi[..n]) {
            *z = x / w;
        }
        signal.evaluate(t, &zeta, &mut d);
        homogenized_field_unchecked(plant, xi, w, &d, out);
    }
}

fn check_signal(plant: &dyn Plant, signal: &DisturbanceSignal) -> Result<(), SimError> {
    if signal.dim() != plant.disturbance_box().dim() {
        return Err(SimError::Signal(format!(
            "signal has dimension {}, plant expects {}",
            signal.dim(),
            plant.disturbance_box().dim()
        )));
    }
    Ok(())
}

/// Integrates the held loop from `ξ0` over `[0, T]` without sampling
/// resets.
pub fn integrate_held(
    plant: &dyn Plant,
    xi0: &[f64],
    signal: &DisturbanceSignal,
    h: f64,
    horizon: f64,
) -> Result<Trajectory, SimError> {
    let n = plant.state_dim();
    if xi0.len() != 2 * n {
        return Err(ModelError::Dimension {
            expected: 2 * n,
            got: xi0.len(),
        }
        .into());
    }
    check_step(h, horizon)?;
    check_signal(plant, signal)?;
    let mut traj = Trajectory::new(h, 2 * n);
    traj.push(0.0, xi0, None);
    let mut y = xi0.to_vec();
    let mut rk = Rk4::new(2 * n);
    let mut field = held_field(plant, signal);
    run_segment::<_, fn(&[f64]) -> f64, _>(&mut rk, &mut field, None, 0.0, &mut y, h, horizon, 0.0, &mut |t, s| {
        traj.push(t, s, None)
    })?;
    Ok(traj)
}

/// Integrates the homogenized loop from `(ξ0, w)` over `[0, T]`, recording
/// `φ̃` at every step.
pub fn integrate_homogenized(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    xi0: &[f64],
    w: f64,
    signal: &DisturbanceSignal,
    h: f64,
    horizon: f64,
) -> Result<Trajectory, SimError> {
    let n = plant.state_dim();
    if xi0.len() != 2 * n || trigger.state_dim() != n {
        return Err(ModelError::Dimension {
            expected: 2 * n,
            got: xi0.len(),
        }
        .into());
    }
    if !(w > 0.0) {
        return Err(ModelError::NonPositiveW(w).into());
    }
    check_step(h, horizon)?;
    check_signal(plant, signal)?;
    let mut traj = Trajectory::new(h, 2 * n);
    traj.push(0.0, xi0, Some(homogenized_trigger_unchecked(trigger, xi0, w)));
    let mut y = xi0.to_vec();
    let mut rk = Rk4::new(2 * n);
    let mut field = homogenized_field(plant, signal, w);
    run_segment::<_, fn(&[f64]) -> f64, _>(&mut rk, &mut field, None, 0.0, &mut y, h, horizon, 0.0, &mut |t, s| {
        traj.push(t, s, Some(homogenized_trigger_unchecked(trigger, s, w)))
    })?;
    Ok(traj)
}

/// Search settings for a triggering crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingSearch {
    pub step: f64,
    pub tol: f64,
    /// Search horizon `T_max` (s).
    pub horizon: f64,
}

impl CrossingSearch {
    pub fn new(step: f64, tol: f64, horizon: f64) -> Result<Self, SimError> {
        check_step(step, horizon)?;
        if !(tol > 0.0) {
            return Err(SimError::Setting(format!("tolerance must be positive, got {tol}")));
        }
        Ok(Self { step, tol, horizon })
    }
}

/// First time `φ(ξ(t; (x0, 0))) ≥ 0` along the held loop under `signal`.
pub fn etc_intersample_time(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    x0: &[f64],
    signal: &DisturbanceSignal,
    search: &CrossingSearch,
) -> Result<Crossing, SimError> {
    let n = plant.state_dim();
    if x0.len() != n || trigger.state_dim() != n {
        return Err(ModelError::Dimension {
            expected: n,
            got: x0.len(),
        }
        .into());
    }
    check_signal(plant, signal)?;
    let mut y: Vec<f64> = x0.iter().copied().chain(std::iter::repeat_n(0.0, n)).collect();
    let phi0 = trigger.value(&y);
    if phi0 >= 0.0 {
        return Err(SimError::TriggeredAtSample(phi0));
    }
    let mut rk = Rk4::new(2 * n);
    let mut field = held_field(plant, signal);
    let event = |s: &[f64]| trigger.value(s);
    let (t, end) = run_segment(
        &mut rk,
        &mut field,
        Some(&event),
        0.0,
        &mut y,
        search.step,
        search.horizon,
        search.tol,
        &mut |_, _| {},
    )?;
    Ok(match end {
        SegmentEnd::Crossed => Crossing::At(t),
        SegmentEnd::Reached => Crossing::HorizonExceeded,
    })
}

/// First time `φ̃(ξ(t), w) ≥ 0` along the homogenized loop from `(x0, 0, w)`.
pub fn homogenized_intersample_time(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    x0: &[f64],
    w: f64,
    signal: &DisturbanceSignal,
    search: &CrossingSearch,
) -> Result<Crossing, SimError> {
    let n = plant.state_dim();
    if x0.len() != n || trigger.state_dim() != n {
        return Err(ModelError::Dimension {
            expected: n,
            got: x0.len(),
        }
        .into());
    }
    if !(w > 0.0) {
        return Err(ModelError::NonPositiveW(w).into());
    }
    check_signal(plant, signal)?;
    let mut y: Vec<f64> = x0.iter().copied().chain(std::iter::repeat_n(0.0, n)).collect();
    let phi0 = homogenized_trigger_unchecked(trigger, &y, w);
    if phi0 >= 0.0 {
        return Err(SimError::TriggeredAtSample(phi0));
    }
    let mut rk = Rk4::new(2 * n);
    let mut field = homogenized_field(plant, signal, w);
    let event = |s: &[f64]| homogenized_trigger_unchecked(trigger, s, w);
    let (t, end) = run_segment(
        &mut rk,
        &mut field,
        Some(&event),
        0.0,
        &mut y,
        search.step,
        search.horizon,
        search.tol,
        &mut |_, _| {},
    )?;
    Ok(match end {
        SegmentEnd::Crossed => Crossing::At(t),
        SegmentEnd::Reached => Crossing::HorizonExceeded,
    })
}

/// Family of piecewise-constant realizations used by the worst-case oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationFamily {
    pub count: usize,
    pub switches: usize,
    /// Switching times are drawn uniformly from `[0, switch_window]`.
    pub switch_window: f64,
    pub seed: u64,
}

impl RealizationFamily {
    /// Realization `index`; depends only on `(seed, index)`, so families with
    /// the same seed are nested in `count`.
    pub fn realization(&self, bounds: &crate::models::DisturbanceBox, index: usize) -> DisturbanceSignal {
        let mut rng = stream(self.seed, index as u64);
        let mut times: Vec<f64> = (0..self.switches)
            .map(|_| rng.random::<f64>() * self.switch_window)
            .filter(|t| *t > 0.0)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut grid = Vec::with_capacity(times.len() + 1);
        grid.push(0.0);
        grid.extend(times);
        let values = grid
            .iter()
            .map(|_| vertex_biased(&mut rng, bounds.lo(), bounds.hi()))
            .collect();
        DisturbanceSignal::Piecewise { grid, values }
    }
}

/// Under-approximation of the worst-case (differential-inclusion)
/// inter-sampling time at `x0`: the minimum ETC time over a finite family of
/// piecewise-constant disturbance realizations.
///
/// This is an upper bound on the true worst case and is meant for testing
/// lower bounds against, never for synthesis. Returns `+∞` when no
/// realization crosses within the search horizon.
pub fn di_intersample_oracle(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    x0: &[f64],
    family: &RealizationFamily,
    search: &CrossingSearch,
) -> Result<f64, SimError> {
    if family.count == 0 {
        return Err(SimError::Setting("need at least one realization".into()));
    }
    let bounds = plant.disturbance_box();
    let mut best = f64::INFINITY;
    for k in 0..family.count {
        let signal = family.realization(bounds, k);
        let tau = etc_intersample_time(plant, trigger, x0, &signal, search)?.time_or_inf();
        best = best.min(tau);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstantPlant, DisturbanceBox, LinearPlant, QuadraticTrigger};

    fn decay() -> LinearPlant {
        LinearPlant::autonomous(1, vec![-1.0], 1.0).unwrap()
    }

    #[test]
    fn zero_field_keeps_state() {
        let p = ConstantPlant::new(vec![0.0, 0.0], 1.0).unwrap();
        let s = DisturbanceSignal::constant(vec![]);
        let traj = integrate_held(&p, &[1.0, -2.0, 0.5, 0.0], &s, 0.1, 1.0).unwrap();
        assert_eq!(traj.len(), 11);
        for i in 0..traj.len() {
            assert_eq!(traj.state(i), &[1.0, -2.0, 0.5, 0.0]);
        }
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let s = DisturbanceSignal::constant(vec![]);
        let traj = integrate_held(&decay(), &[1.0, 0.0], &s, 1e-3, 1.0).unwrap();
        let last = traj.last_state().unwrap();
        assert!((last[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!((traj.times().last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rk4_error_is_fourth_order() {
        let s = DisturbanceSignal::constant(vec![]);
        let exact = (-1.0f64).exp();
        let err = |h: f64| {
            let traj = integrate_held(&decay(), &[1.0, 0.0], &s, h, 1.0).unwrap();
            (traj.last_state().unwrap()[0] - exact).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn uniform_times_with_short_final_step() {
        let s = DisturbanceSignal::constant(vec![]);
        let traj = integrate_held(&decay(), &[1.0, 0.0], &s, 0.3, 1.0).unwrap();
        assert_eq!(traj.times().len(), 5);
        assert!((traj.times()[3] - 0.9).abs() < 1e-15);
        assert_eq!(traj.times()[4], 1.0);
    }

    #[test]
    fn divergence_reports_time() {
        // ζ̇ = ζ² blows up at t = 1 from ζ = 1.
        struct Riccati(DisturbanceBox);
        impl Plant for Riccati {
            fn name(&self) -> &str {
                "riccati"
            }
            fn state_dim(&self) -> usize {
                1
            }
            fn input_dim(&self) -> usize {
                0
            }
            fn disturbance_box(&self) -> &DisturbanceBox {
                &self.0
            }
            fn homogeneity_degree(&self) -> f64 {
                1.0
            }
            fn control(&self, _: &[f64], _: &mut [f64]) {}
            fn dynamics(&self, z: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
                out[0] = z[0] * z[0];
            }
        }
        let s = DisturbanceSignal::constant(vec![]);
        match integrate_held(&Riccati(DisturbanceBox::empty()), &[1.0, 0.0], &s, 1e-3, 5.0) {
            Err(SimError::Divergence { t }) => assert!(t > 0.9 && t < 1.2, "{t}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn lebesgue_constant_field_crossing() {
        // |ε| grows as |c|·t, so φ = |ε|² − ε̄² crosses at ε̄/|c|.
        let c = [0.3, -0.4];
        let p = ConstantPlant::new(c.to_vec(), 1.0).unwrap();
        let t = QuadraticTrigger::lebesgue(2, 0.2).unwrap();
        let s = DisturbanceSignal::constant(vec![]);
        let search = CrossingSearch::new(1e-3, 1e-10, 10.0).unwrap();
        let tau = etc_intersample_time(&p, &t, &[1.0, 1.0], &s, &search).unwrap();
        assert!((tau.time().unwrap() - 0.4).abs() < 1e-9);
    }

    #[test]
    fn crossing_requires_negative_trigger_at_sample() {
        struct Always;
        impl Trigger for Always {
            fn name(&self) -> &str {
                "always"
            }
            fn state_dim(&self) -> usize {
                1
            }
            fn homogeneity_degree(&self) -> f64 {
                1.0
            }
            fn value(&self, _: &[f64]) -> f64 {
                1.0
            }
        }
        let s = DisturbanceSignal::constant(vec![]);
        let search = CrossingSearch::new(1e-3, 1e-9, 1.0).unwrap();
        assert!(matches!(
            etc_intersample_time(&decay(), &Always, &[1.0], &s, &search),
            Err(SimError::TriggeredAtSample(_))
        ));
    }

    #[test]
    fn missed_crossing_is_reported() {
        let p = ConstantPlant::new(vec![0.0], 1.0).unwrap();
        let t = QuadraticTrigger::lebesgue(1, 1.0).unwrap();
        let s = DisturbanceSignal::constant(vec![]);
        let search = CrossingSearch::new(1e-2, 1e-9, 1.0).unwrap();
        assert_eq!(
            etc_intersample_time(&p, &t, &[1.0], &s, &search).unwrap(),
            Crossing::HorizonExceeded
        );
    }

    #[test]
    fn di_oracle_with_point_box_equals_constant_signal() {
        let p = LinearPlant::new(
            1,
            vec![0.0],
            vec![],
            vec![],
            vec![1.0],
            DisturbanceBox::new(vec![0.5], vec![0.5]).unwrap(),
            1.0,
        )
        .unwrap();
        let t = QuadraticTrigger::lebesgue(1, 0.1).unwrap();
        let search = CrossingSearch::new(1e-3, 1e-10, 5.0).unwrap();
        let family = RealizationFamily {
            count: 5,
            switches: 3,
            switch_window: 0.5,
            seed: 1,
        };
        let oracle = di_intersample_oracle(&p, &t, &[0.0], &family, &search).unwrap();
        let direct = etc_intersample_time(&p, &t, &[0.0], &DisturbanceSignal::constant(vec![0.5]), &search)
            .unwrap()
            .time()
            .unwrap();
        assert_eq!(oracle, direct);
        assert!((direct - 0.2).abs() < 1e-9);
    }

    #[test]
    fn di_oracle_is_monotone_in_family_size() {
        let p = crate::models::BenchmarkPlant::default();
        let t = QuadraticTrigger::benchmark();
        let search = CrossingSearch::new(5e-4, 1e-8, 2.0).unwrap();
        let small = RealizationFamily {
            count: 1,
            switches: 4,
            switch_window: 0.3,
            seed: 9,
        };
        let large = RealizationFamily { count: 30, ..small };
        let a = di_intersample_oracle(&p, &t, &[1.0, 1.0], &small, &search).unwrap();
        let b = di_intersample_oracle(&p, &t, &[1.0, 1.0], &large, &search).unwrap();
        assert!(b <= a);
    }
}
