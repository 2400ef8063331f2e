//! Brute-force reference computations used to check the closed forms.
//!
//! None of these call the closed-form `ψ`, its root, or the set builders;
//! they only go through the model interfaces and the engine's `μ`.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::isochron::IsochronEngine;
use crate::models::{homogenized_trigger_unchecked, Plant, Trigger};
use crate::rng::{stream, uniform, uniform_in_ball};
use crate::setsynth::{BoxSet, Interval};
use crate::simulate::{di_intersample_oracle, CrossingSearch, RealizationFamily, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error("bracket [0, {t_hi}] does not straddle a root: μ(0) = {lo}, μ(t_hi) = {hi}")]
    Bracket { t_hi: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Engine(#[from] crate::isochron::IsochronError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Sample counts and tolerances for the oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBudget {
    pub samples: usize,
    pub realizations: usize,
    pub switches: usize,
    /// Number of doublings of the realization family in [`di_refine`].
    pub depth: usize,
    pub step: f64,
    pub tol: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            samples: 100_000,
            realizations: 200,
            switches: 8,
            depth: 2,
            step: 1e-4,
            tol: 1e-10,
        }
    }
}

impl OracleBudget {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.samples == 0 || self.realizations == 0 {
            return Err(OracleError::Budget("sample counts must be positive".into()));
        }
        if !(self.step > 0.0) || !(self.tol > 0.0) {
            return Err(OracleError::Budget(format!(
                "step {} and tolerance {} must be positive",
                self.step, self.tol
            )));
        }
        Ok(())
    }
}

/// RK4 solution of `ψ̇ = δ₀ψ + δ₁`, `ψ(0) = φ₀`, at time `t`.
pub fn psi_numeric(phi0: f64, delta0: f64, delta1: f64, t: f64, h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let f = |y: f64| delta0 * y + delta1;
    let steps = (t / h).ceil().max(0.0) as usize;
    let mut y = phi0;
    let mut s = 0.0;
    for _ in 0..steps {
        let dt = h.min(t - s);
        if dt <= 0.0 {
            break;
        }
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += dt;
    }
    y
}

/// Root of `t ↦ μ((x, w), t)` on `[0, t_hi]` by bisection.
pub fn mu_root_bisect(engine: &IsochronEngine, x: &[f64], w: f64, t_hi: f64, tol: f64) -> Result<f64, OracleError> {
    let lo_val = engine.mu(x, w, 0.0)?;
    let hi_val = engine.mu(x, w, t_hi)?;
    if !(lo_val < 0.0 && hi_val > 0.0) {
        return Err(OracleError::Bracket {
            t_hi,
            lo: lo_val,
            hi: hi_val,
        });
    }
    let (mut lo, mut hi) = (0.0, t_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if engine.mu(x, w, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of a rejection-sampling containment check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipEstimate {
    pub drawn: usize,
    /// Draws that landed in the exact set.
    pub hits: usize,
    /// Hits outside the candidate over-approximation.
    pub escaped: usize,
}

/// Draws `(x, x₀, w)` uniformly from `probe × Z × W`, keeps those with
/// `φ̃((x, x₀ − x, w)) ≤ 0` (exact members of `Φ`) and counts how many fall
/// outside `phi_box`.
pub fn membership_reject(
    trigger: &dyn Trigger,
    z: &BoxSet,
    w: Interval,
    probe: &BoxSet,
    phi_box: &BoxSet,
    n: usize,
    seed: u64,
) -> MembershipEstimate {
    const CHUNK: usize = 4096;
    let dim = z.dim();
    let (hits, escaped) = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let mut hits = 0;
            let mut escaped = 0;
            for _ in 0..CHUNK.min(n - c * CHUNK) {
                let x: Vec<f64> = (0..dim).map(|j| uniform(&mut rng, probe.lo[j], probe.hi[j])).collect();
                let x0: Vec<f64> = (0..dim).map(|j| uniform(&mut rng, z.lo[j], z.hi[j])).collect();
                let wv = uniform(&mut rng, w.lo, w.hi);
                let xi: Vec<f64> = x.iter().copied().chain(x0.iter().zip(&x).map(|(a, b)| a - b)).collect();
                if homogenized_trigger_unchecked(trigger, &xi, wv) <= 0.0 {
                    hits += 1;
                    if !phi_box.contains(&x) {
                        escaped += 1;
                    }
                }
            }
            (hits, escaped)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    MembershipEstimate {
        drawn: n,
        hits,
        escaped,
    }
}

/// Counts points of the ball of radius `probe_radius` where the closed-form
/// `B₁` radius disagrees with the direct cone test
/// `|x|² + 1 ≤ (r/w̲)²` at `w = 1`.
pub fn b1_disagreements(engine: &IsochronEngine, probe_radius: f64, n: usize, seed: u64) -> usize {
    let p = engine.params();
    let b1 = engine.b1_radius_sq();
    let limit = (p.radius / p.w_min).powi(2);
    let mut rng = stream(seed, 0);
    let dim = engine.trigger().state_dim();
    (0..n)
        .filter(|_| {
            let x = uniform_in_ball(&mut rng, dim, probe_radius);
            let nx2: f64 = x.iter().map(|v| v * v).sum();
            (nx2 <= b1) != (nx2 + 1.0 <= limit)
        })
        .count()
}

/// Worst-case inter-sampling estimates over nested realization families of
/// size `realizations · 2^k`, `k = 0..=depth`. Each entry is no larger than
/// the previous one.
pub fn di_refine(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    x0: &[f64],
    budget: &OracleBudget,
    switch_window: f64,
    seed: u64,
) -> Result<Vec<f64>, OracleError> {
    budget.validate()?;
    let search = CrossingSearch::new(budget.step, budget.tol, 4.0 * switch_window)?;
    (0..=budget.depth)
        .map(|k| {
            let family = RealizationFamily {
                count: budget.realizations << k,
                switches: budget.switches,
                switch_window,
                seed,
            };
            Ok(di_intersample_oracle(plant, trigger, x0, &family, &search)?)
        })
        .collect()
}

/// Uniform draw from `probe` for callers that want their own rejection test.
pub fn sample_box<R: Rng + ?Sized>(rng: &mut R, probe: &BoxSet) -> Vec<f64> {
    probe
        .lo
        .iter()
        .zip(&probe.hi)
        .map(|(l, h)| uniform(rng, *l, *h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isochron::{psi, EngineParams};
    use crate::models::QuadraticTrigger;
    use std::sync::Arc;

    #[test]
    fn psi_numeric_hits_root() {
        let v = psi_numeric(-1.0, 1.0, 2.0, std::f64::consts::LN_2, 1e-4);
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn psi_numeric_constant() {
        assert_eq!(psi_numeric(3.5, 0.0, 0.0, 2.0, 0.1), 3.5);
    }

    #[test]
    fn psi_numeric_matches_closed_form() {
        let a = psi_numeric(-16.0, 0.0353, 0.344, 1.0, 1e-3);
        let b = psi(-16.0, 0.0353, 0.344, 1.0);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn bisect_on_projection_sphere() {
        // Trigger with φ̃((x,0,w)) = −w²: pick r so the projection gives −1.
        let t: Arc<dyn crate::models::Trigger> = Arc::new(QuadraticTrigger::lebesgue(1, 1.0).unwrap());
        let engine = IsochronEngine::new(
            EngineParams {
                delta0: 1.0,
                delta1: 2.0,
                radius: 1.0,
                w_min: 1e-3,
                alpha: 1.0,
            },
            t,
        )
        .unwrap();
        let root = mu_root_bisect(&engine, &[0.0], 1.0, 2.0, 1e-13).unwrap();
        assert!((root - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            mu_root_bisect(&engine, &[0.0], 1.0, 0.1, 1e-9),
            Err(OracleError::Bracket { .. })
        ));
    }

    #[test]
    fn empty_exact_set_has_no_hits() {
        // φ̃ > 0 everywhere on a probe far from Z.
        let t = QuadraticTrigger::lebesgue(1, 0.1).unwrap();
        let z = BoxSet::symmetric(&[0.1]).unwrap();
        let w = Interval::homogenizing(0.01, 0.1).unwrap();
        let probe = BoxSet::new(vec![5.0], vec![6.0]).unwrap();
        let est = membership_reject(&t, &z, w, &probe, &z, 10_000, 1);
        assert_eq!(est.hits, 0);
        assert_eq!(est.escaped, 0);
    }

    #[test]
    fn budget_validation() {
        assert!(OracleBudget::default().validate().is_ok());
        assert!(OracleBudget {
            samples: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OracleBudget {
            step: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
