//! Working sets and comparison coefficients.
//!
//! The coefficients `δ₀ ≥ 0, δ₁ > 0` must satisfy
//!
//! ```text
//! ∂φ̃/∂z (z,w) · w^{α+1} f_e(z/w, u) ≤ δ₀ φ̃(z,w) + δ₁   on the constraint domain × Δ
//! δ₀ φ̃((x,0,w)) + δ₁ ≥ ε_δ                               on Z × {0} × W
//! ```
//!
//! They are fitted by a two-variable linear program over sampled constraint
//! rows, then checked on a dense, independent set of points. Violations are
//! fed back as new rows (cutting planes) until the check passes.
//!
//! [`ConstraintDomain::Product`] is the full box product `Ξ = Φ × E × W`.
//! [`ConstraintDomain::Reachable`] is the subset of `Ξ` that a sampled
//! trajectory can occupy before it triggers: the held value `x + e = x₀`
//! stays in `Z` and `φ̃ ≤ 0`. [`ConstraintDomain::Projected`] further
//! restricts the starting point `(x₀, w)` to the part of the sphere
//! `|(x₀, w)| = r` with `w ≥ w̲`, which is where the bound `μ` is anchored.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{homogenized_trigger_unchecked, lie_derivative_unchecked, Plant, Trigger};
use crate::rng::{seeded, stream, uniform, unit_direction, vertex_biased, SimRng};

/// Default `ε_δ`.
pub const DEFAULT_EPS_DELTA: f64 = 1e-3;
/// Default relative inflation of the probed `Φ` box.
pub const DEFAULT_INFLATION: f64 = 0.05;
/// Ray probes that get further than this many `Z ∪ W` diameters mean `Φ`
/// is unbounded.
const GROWTH_CAP: f64 = 1e6;
const VERIFY_CHUNK: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid set: {0}")]
    Set(String),
    #[error("Φ is not compact: probe from x₀ = {x0:?}, w = {w} along {direction:?} escaped")]
    Unbounded { x0: Vec<f64>, w: f64, direction: Vec<f64> },
    #[error("no constraint rows")]
    NoRows,
    #[error("invalid synthesis setting: {0}")]
    Setting(String),
    #[error("verification failed: min residual {margin} at {point:?}")]
    Verification { margin: f64, point: SamplePoint },
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, SynthError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(SynthError::Set(format!("[{lo}, {hi}] is not an interval")));
        }
        Ok(Self { lo, hi })
    }

    /// `W = [w̲, w̄]` with `w̲ > 0`.
    pub fn homogenizing(lo: f64, hi: f64) -> Result<Self, SynthError> {
        if !(lo > 0.0) {
            return Err(SynthError::Set(format!("w̲ = {lo} must be positive")));
        }
        Self::new(lo, hi)
    }

    pub fn lattice(&self, k: usize) -> Vec<f64> {
        if k <= 1 || self.lo == self.hi {
            return vec![0.5 * (self.lo + self.hi)];
        }
        (0..k)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (k - 1) as f64)
            .collect()
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SynthError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(SynthError::Set("box bounds of mismatched or zero length".into()));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(SynthError::Set(format!("empty box {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(half_widths: &[f64]) -> Result<Self, SynthError> {
        Self::new(half_widths.iter().map(|h| -h).collect(), half_widths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Radius of the largest origin-centred ball inside the box; `0` when the
    /// origin is not interior.
    pub fn inradius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (-l).min(*h))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub fn has_origin_inside(&self) -> bool {
        self.inradius() > 0.0
    }

    /// Scales each half-width by `1 + factor` about the centre.
    pub fn inflated(&self, factor: f64) -> Self {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let c = 0.5 * (l + h);
                let r = 0.5 * (h - l) * (1.0 + factor);
                (c - r, c + r)
            })
            .unzip();
        Self { lo, hi }
    }

    /// `{a − b : a ∈ self, b ∈ other}`.
    pub fn difference(&self, other: &BoxSet) -> Self {
        Self {
            lo: self.lo.iter().zip(&other.hi).map(|(a, b)| a - b).collect(),
            hi: self.hi.iter().zip(&other.lo).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn axis(&self, j: usize) -> Interval {
        Interval {
            lo: self.lo[j],
            hi: self.hi[j],
        }
    }

    /// Per-axis lattice of `k` points, all combinations.
    pub fn lattice(&self, k: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|j| self.axis(j).lattice(k)).collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, face_prob: f64) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| uniform(rng, *l, *h))
            .collect();
        if rng.random_bool(face_prob) {
            let j = rng.random_range(0..self.dim());
            x[j] = if rng.random_bool(0.5) { self.hi[j] } else { self.lo[j] };
        }
        x
    }
}

/// Which points of `Ξ × Δ` the coefficient inequality is imposed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintDomain {
    /// `{(x, x₀ − x, w) : x₀ ∈ Z, w ∈ W, φ̃ ≤ 0}`, the part of `Ξ` reachable
    /// from a fresh sample before the trigger fires.
    #[default]
    Reachable,
    /// The full product `Φ × E × W`.
    Product,
    /// Trajectories of `φ̃ ≤ 0` from fresh samples `(x₀, 0, w)` with
    /// `|(x₀, w)| = radius`, `w ≥ w̲`.
    Projected { radius: f64 },
}

impl ConstraintDomain {
    /// Checks that a projected domain lies inside `Z × W`.
    pub fn validate(&self, sets: &SetBundle) -> Result<(), SynthError> {
        if let Self::Projected { radius } = *self {
            if !(radius > sets.w.lo) || radius > sets.w.hi {
                return Err(SynthError::Setting(format!(
                    "projection radius {radius} must lie in (w̲, w̄] = ({}, {}]",
                    sets.w.lo, sets.w.hi
                )));
            }
            let reach = (radius * radius - sets.w.lo * sets.w.lo).sqrt();
            if reach > sets.z.inradius() * (1.0 + 1e-12) {
                return Err(SynthError::Setting(format!(
                    "projection radius {radius} leaves Z (inradius {})",
                    sets.z.inradius()
                )));
            }
        }
        Ok(())
    }
}

/// `(x₀, w)` on the sphere of the given radius with `w ≥ w_min`.
fn draw_on_projection<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64, w_min: f64) -> (Vec<f64>, f64) {
    let r: f64 = rng.random();
    if r < 0.05 {
        return (vec![0.0; n], radius);
    }
    if r < 0.15 {
        let rho = (radius * radius - w_min * w_min).sqrt();
        let x0 = unit_direction(rng, n).into_iter().map(|v| v * rho).collect();
        return (x0, w_min);
    }
    loop {
        let mut v = unit_direction(rng, n + 1);
        let w = v.pop().expect("n + 1 entries").abs() * radius;
        if w >= w_min {
            return (v.into_iter().map(|c| c * radius).collect(), w);
        }
    }
}

/// The sets `Z, W, Φ, E`; `Ξ = Φ × E × W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetBundle {
    pub z: BoxSet,
    pub w: Interval,
    pub phi: BoxSet,
    pub e: BoxSet,
    /// `Φ` before inflation.
    pub phi_probe: BoxSet,
}

/// First `s > 0` at which `g(s) > 0`, located by doubling from `s0` and then
/// bisection. `None` when `g` stays non-positive up to `cap`.
fn first_exit<G: Fn(f64) -> f64>(g: G, s0: f64, cap: f64) -> Option<f64> {
    let mut lo = 0.0;
    let mut hi = s0;
    while g(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Some(lo)
}

fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[j] = sign;
            dirs.push(d);
        }
    }
    let mut rng = seeded(0x5e75);
    dirs.extend((0..64).map(|_| unit_direction(&mut rng, n)));
    dirs
}

fn lattice_size(n: usize) -> usize {
    match n {
        0..=2 => 9,
        3 => 5,
        _ => 3,
    }
}

fn scale_of(z: &BoxSet, w: Interval) -> f64 {
    let zw = z.lo.iter().zip(&z.hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    zw.max(w.hi)
}

/// Box over-approximations of `Φ = ⋃_{x₀∈Z} {x : ∃w ∈ W, φ̃((x, x₀−x, w)) ≤ 0}`
/// and `E = Z − Φ`.
///
/// `Φ` is probed along rays from every `x₀` of a lattice on `Z` for a
/// lattice of `w ∈ W`, then inflated by `1 + inflation` per half-width.
pub fn build_sets(trigger: &dyn Trigger, z: &BoxSet, w: Interval, inflation: f64) -> Result<SetBundle, SynthError> {
    let n = trigger.state_dim();
    if z.dim() != n {
        return Err(SynthError::Set(format!("Z has dimension {}, expected {n}", z.dim())));
    }
    if !z.has_origin_inside() {
        return Err(SynthError::Set("Z must contain the origin in its interior".into()));
    }
    if !(w.lo > 0.0) {
        return Err(SynthError::Set(format!("w̲ = {} must be positive", w.lo)));
    }
    if !(inflation >= 0.0) {
        return Err(SynthError::Setting(format!("inflation {inflation} must be ≥ 0")));
    }
    let scale = scale_of(z, w);
    let dirs = probe_directions(n);
    let k = lattice_size(n);
    let anchors = z.lattice(k);
    let ws = w.lattice(k);
    let mut lo = z.lo.clone();
    let mut hi = z.hi.clone();
    let mut xi = vec![0.0; 2 * n];
    for x0 in &anchors {
        for &wv in &ws {
            for dir in &dirs {
                let g = |s: f64| {
                    let mut xi = vec![0.0; 2 * n];
                    for j in 0..n {
                        xi[j] = x0[j] + s * dir[j];
                        xi[n + j] = -s * dir[j];
                    }
                    homogenized_trigger_unchecked(trigger, &xi, wv)
                };
                let s = first_exit(g, 1e-3 * scale, GROWTH_CAP * scale).ok_or_else(|| SynthError::Unbounded {
                    x0: x0.clone(),
                    w: wv,
                    direction: dir.clone(),
                })?;
                for j in 0..n {
                    xi[j] = x0[j] + s * dir[j];
                    lo[j] = lo[j].min(xi[j]);
                    hi[j] = hi[j].max(xi[j]);
                }
            }
        }
    }
    let phi_probe = BoxSet { lo, hi };
    let phi = phi_probe.inflated(inflation);
    let e = z.difference(&phi);
    Ok(SetBundle {
        z: z.clone(),
        w,
        phi,
        e,
        phi_probe,
    })
}

/// A point of `Ξ × Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub xi: Vec<f64>,
    pub w: f64,
    pub d: Vec<f64>,
}

/// `(φ̃_i, L_i)`: the homogenized trigger and its derivative along the
/// homogenized field at one sampled point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub phi: f64,
    pub lie: f64,
}

impl ConstraintRow {
    pub fn at(plant: &dyn Plant, trigger: &dyn Trigger, p: &SamplePoint) -> Self {
        Self {
            phi: homogenized_trigger_unchecked(trigger, &p.xi, p.w),
            lie: lie_derivative_unchecked(plant, trigger, &p.xi, p.w, &p.d),
        }
    }
}

/// Largest `s` along `x = x₀ − s·u, e = s·u` with `φ̃ ≤ 0` before the first
/// exit.
fn reachable_extent(trigger: &dyn Trigger, x0: &[f64], u: &[f64], w: f64, scale: f64) -> f64 {
    let n = x0.len();
    let g = |s: f64| {
        let mut xi: crate::models::Scratch = smallvec::smallvec![0.0; 2 * n];
        for j in 0..n {
            xi[j] = x0[j] - s * u[j];
            xi[n + j] = s * u[j];
        }
        homogenized_trigger_unchecked(trigger, &xi, w)
    };
    // Φ has already been checked for compactness; the cap only guards
    // against pathological user triggers.
    first_exit(g, 1e-3 * scale, GROWTH_CAP * scale).unwrap_or(GROWTH_CAP * scale)
}

fn reachable_point(x0: &[f64], u: &[f64], s: f64, w: f64, d: Vec<f64>) -> SamplePoint {
    let n = x0.len();
    let mut xi = vec![0.0; 2 * n];
    for j in 0..n {
        xi[j] = x0[j] - s * u[j];
        xi[n + j] = s * u[j];
    }
    SamplePoint { xi, w, d }
}

fn draw_w<R: Rng + ?Sized>(rng: &mut R, w: Interval) -> f64 {
    let r: f64 = rng.random();
    if r < 0.05 {
        w.lo
    } else if r < 0.1 {
        w.hi
    } else {
        uniform(rng, w.lo, w.hi)
    }
}

/// One random point of the constraint domain with a vertex-biased
/// disturbance value.
pub fn draw_point(
    rng: &mut SimRng,
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    sets: &SetBundle,
    domain: ConstraintDomain,
) -> SamplePoint {
    let delta = plant.disturbance_box();
    let n = sets.z.dim();
    match domain {
        ConstraintDomain::Product => {
            let x = sets.phi.sample(rng, 0.2);
            let e = sets.e.sample(rng, 0.2);
            let w = draw_w(rng, sets.w);
            let d = vertex_biased(rng, delta.lo(), delta.hi());
            SamplePoint {
                xi: x.into_iter().chain(e).collect(),
                w,
                d,
            }
        }
        ConstraintDomain::Reachable | ConstraintDomain::Projected { .. } => {
            let (x0, w) = match domain {
                ConstraintDomain::Projected { radius } => draw_on_projection(rng, n, radius, sets.w.lo),
                _ => {
                    let x0 = sets.z.sample(rng, 0.2);
                    (x0, draw_w(rng, sets.w))
                }
            };
            let u = unit_direction(rng, n);
            let extent = reachable_extent(trigger, &x0, &u, w, scale_of(&sets.z, sets.w));
            let s = if rng.random_bool(0.3) {
                extent
            } else {
                extent * rng.random::<f64>().powf(1.0 / n as f64)
            };
            let d = vertex_biased(rng, delta.lo(), delta.hi());
            reachable_point(&x0, &u, s, w, d)
        }
    }
}

/// `n` constraint rows drawn from the domain.
pub fn sample_constraints(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    sets: &SetBundle,
    domain: ConstraintDomain,
    n: usize,
    seed: u64,
) -> Vec<ConstraintRow> {
    sample_points(plant, trigger, sets, domain, n, seed)
        .par_iter()
        .map(|p| ConstraintRow::at(plant, trigger, p))
        .collect()
}

/// The points behind [`sample_constraints`]; chunked streams keep the result
/// independent of the thread count.
pub fn sample_points(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    sets: &SetBundle,
    domain: ConstraintDomain,
    n: usize,
    seed: u64,
) -> Vec<SamplePoint> {
    let chunks = n.div_ceil(VERIFY_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(seed, c as u64);
            let len = VERIFY_CHUNK.min(n - c * VERIFY_CHUNK);
            (0..len)
                .map(|_| draw_point(&mut rng, plant, trigger, sets, domain))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// `φ̃((x, 0, w))` on a lattice of `Z × W`.
pub fn boundary_values(trigger: &dyn Trigger, sets: &SetBundle, per_axis: usize) -> Vec<f64> {
    let n = sets.z.dim();
    let ws = sets.w.lattice(per_axis);
    sets.z
        .lattice(per_axis)
        .iter()
        .flat_map(|x| {
            let xi: Vec<f64> = x.iter().copied().chain(std::iter::repeat_n(0.0, n)).collect();
            ws.iter()
                .map(move |&w| homogenized_trigger_unchecked(trigger, &xi, w))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Fitted comparison coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCoefficients {
    pub delta0: f64,
    pub delta1: f64,
    pub eps_delta: f64,
    /// Weight `κ` of `δ₀` in the objective `δ₁ + κ δ₀`.
    pub kappa: f64,
    pub objective: f64,
    /// Another LP vertex attains the same objective.
    pub degenerate: bool,
    pub rows: usize,
}

/// A line `δ₁ ≥ a + b δ₀`.
#[derive(Debug, Clone, Copy)]
struct Line {
    a: f64,
    b: f64,
}

/// Upper envelope of `lines`, sorted by slope.
fn upper_envelope(mut lines: Vec<Line>) -> Vec<Line> {
    lines.sort_by(|p, q| p.b.total_cmp(&q.b).then(p.a.total_cmp(&q.a)));
    // Equal slopes: keep the largest intercept (the last after sorting).
    let mut dedup: Vec<Line> = Vec::with_capacity(lines.len());
    for l in lines {
        if let Some(last) = dedup.last_mut() {
            if last.b == l.b {
                *last = l;
                continue;
            }
        }
        dedup.push(l);
    }
    let mut hull: Vec<Line> = Vec::new();
    for l in dedup {
        while hull.len() >= 2 {
            let l1 = hull[hull.len() - 2];
            let l2 = hull[hull.len() - 1];
            // l2 is useless if l1 and l increase past it before it wins.
            // x(l1,l) <= x(l1,l2)  ⇔  (a1−a)(b2−b1) <= (a1−a2)(b−b1)
            if (l1.a - l.a) * (l2.b - l1.b) <= (l1.a - l2.a) * (l.b - l1.b) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(l);
    }
    hull
}

/// Solves `min δ₁ + κ δ₀` subject to `L_i ≤ δ₀ φ̃_i + δ₁` for every row,
/// `δ₀ φ̃_b + δ₁ ≥ ε_δ` for every boundary value, `δ₀ ≥ 0`, `δ₁ ≥ ε_δ`,
/// with `κ` the mean `|φ̃_i|`.
///
/// The feasible set is the epigraph of the upper envelope of the constraint
/// lines over `δ₀ ≥ 0`, so the optimum is `δ₀ = 0` or one of the envelope
/// breakpoints; all of them are evaluated.
pub fn fit_delta(rows: &[ConstraintRow], boundary: &[f64], eps_delta: f64) -> Result<DeltaCoefficients, SynthError> {
    if rows.is_empty() {
        return Err(SynthError::NoRows);
    }
    if !(eps_delta > 0.0) {
        return Err(SynthError::Setting(format!("ε_δ = {eps_delta} must be positive")));
    }
    if rows.iter().any(|r| !r.phi.is_finite() || !r.lie.is_finite()) {
        return Err(SynthError::Setting("non-finite constraint row".into()));
    }
    let kappa = rows.iter().map(|r| r.phi.abs()).sum::<f64>() / rows.len() as f64;
    let mut lines: Vec<Line> = rows.iter().map(|r| Line { a: r.lie, b: -r.phi }).collect();
    lines.extend(boundary.iter().map(|&p| Line { a: eps_delta, b: -p }));
    lines.push(Line { a: eps_delta, b: 0.0 });
    let hull = upper_envelope(lines);

    let mut candidates = vec![0.0];
    for pair in hull.windows(2) {
        let x = (pair[0].a - pair[1].a) / (pair[1].b - pair[0].b);
        if x > 0.0 && x.is_finite() {
            candidates.push(x);
        }
    }
    let envelope = |x: f64| hull.iter().map(|l| l.a + l.b * x).fold(f64::NEG_INFINITY, f64::max);
    let scored: Vec<(f64, f64, f64)> = candidates
        .iter()
        .map(|&x| {
            let y = envelope(x).max(eps_delta);
            (x, y, y + kappa * x)
        })
        .collect();
    let best = scored
        .iter()
        .copied()
        .min_by(|p, q| p.2.total_cmp(&q.2).then(p.0.total_cmp(&q.0)))
        .expect("δ₀ = 0 is always a candidate");
    let tie_tol = 1e-12 * best.2.abs().max(1.0);
    let ties = scored.iter().filter(|s| (s.2 - best.2).abs() <= tie_tol).count();
    Ok(DeltaCoefficients {
        delta0: best.0,
        delta1: best.1,
        eps_delta,
        kappa,
        objective: best.2,
        degenerate: ties > 1,
        rows: rows.len(),
    })
}

/// `δ₀ = 0, δ₁ = max(ε_δ, max L + slack)`: always feasible on the points
/// that produced `max_lie`.
pub fn feasibility_fallback(max_lie: f64, eps_delta: f64, slack: f64) -> DeltaCoefficients {
    let delta1 = eps_delta.max(max_lie + slack);
    DeltaCoefficients {
        delta0: 0.0,
        delta1,
        eps_delta,
        kappa: 0.0,
        objective: delta1,
        degenerate: false,
        rows: 0,
    }
}

/// Result of the dense residual check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// `min (δ₀ φ̃ + δ₁ − L)` over all checked points.
    pub min_residual: f64,
    pub worst: SamplePoint,
    /// The most violated points (residual < 0), worst first.
    pub violators: Vec<(f64, SamplePoint)>,
    /// `min (δ₀ φ̃((x,0,w)) + δ₁) − ε_δ` on the boundary lattice.
    pub boundary_margin: f64,
    /// Largest `L` seen; basis for the feasibility fallback.
    pub max_lie: f64,
    pub points: usize,
}

impl MarginReport {
    pub fn passed(&self) -> bool {
        self.min_residual >= 0.0 && self.boundary_margin >= 0.0
    }
}

/// Structured points checked on top of the random ones: a coarse lattice
/// of the domain crossed with every vertex of `Δ`.
fn lattice_points(
    trigger: &dyn Trigger,
    plant: &dyn Plant,
    sets: &SetBundle,
    domain: ConstraintDomain,
) -> Vec<SamplePoint> {
    let n = sets.z.dim();
    let vertices = plant.disturbance_box().vertices();
    let ws = sets.w.lattice(3);
    let mut out = Vec::new();
    match domain {
        ConstraintDomain::Product => {
            let xs = sets.phi.lattice(3);
            let es = sets.e.lattice(3);
            for x in &xs {
                for e in &es {
                    for &w in &ws {
                        for d in &vertices {
                            out.push(SamplePoint {
                                xi: x.iter().chain(e).copied().collect(),
                                w,
                                d: d.clone(),
                            });
                        }
                    }
                }
            }
        }
        ConstraintDomain::Reachable | ConstraintDomain::Projected { .. } => {
            let anchors: Vec<(Vec<f64>, f64)> = match domain {
                ConstraintDomain::Projected { radius } => {
                    let rho = (radius * radius - sets.w.lo * sets.w.lo).sqrt();
                    BoxSet::symmetric(&vec![1.0; n])
                        .expect("unit box")
                        .lattice(5)
                        .into_iter()
                        .map(|v| {
                            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                            if norm <= 1.0 {
                                let x0: Vec<f64> = v.iter().map(|c| c * rho).collect();
                                let w = (radius * radius - rho * rho * norm * norm).sqrt();
                                (x0, w.max(sets.w.lo))
                            } else {
                                (v.iter().map(|c| c * rho / norm).collect(), sets.w.lo)
                            }
                        })
                        .collect()
                }
                _ => sets
                    .z
                    .lattice(3)
                    .into_iter()
                    .flat_map(|x0| ws.iter().map(move |&w| (x0.clone(), w)))
                    .collect(),
            };
            let mut dirs: Vec<Vec<f64>> = Vec::new();
            for mask in 0..3usize.pow(n as u32) {
                let d: Vec<f64> = (0..n)
                    .map(|j| ((mask / 3usize.pow(j as u32)) % 3) as f64 - 1.0)
                    .collect();
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                dirs.push(d.into_iter().map(|v| v / norm).collect());
            }
            let scale = scale_of(&sets.z, sets.w);
            for (x0, w) in &anchors {
                for u in &dirs {
                    let extent = reachable_extent(trigger, x0, u, *w, scale);
                    for frac in [0.5, 1.0] {
                        for d in &vertices {
                            out.push(reachable_point(x0, u, frac * extent, *w, d.clone()));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Evaluates `δ₀ φ̃ + δ₁ − L` on `n_fine` random points of the domain plus
/// a lattice crossed with all vertices of `Δ`.
pub fn verify_delta(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    sets: &SetBundle,
    domain: ConstraintDomain,
    coeffs: &DeltaCoefficients,
    n_fine: usize,
    seed: u64,
) -> MarginReport {
    let mut points = lattice_points(trigger, plant, sets, domain);
    points.extend(sample_points(plant, trigger, sets, domain, n_fine, seed));
    verify_on(plant, trigger, sets, coeffs, &points)
}

/// [`verify_delta`] on a caller-supplied point set.
pub fn verify_on(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    sets: &SetBundle,
    coeffs: &DeltaCoefficients,
    points: &[SamplePoint],
) -> MarginReport {
    const KEEP: usize = 64;
    let scored: Vec<(f64, f64)> = points
        .par_iter()
        .map(|p| {
            let row = ConstraintRow::at(plant, trigger, p);
            (coeffs.delta0 * row.phi + coeffs.delta1 - row.lie, row.lie)
        })
        .collect();
    let (mut worst_i, mut min_residual, mut max_lie) = (0, f64::INFINITY, f64::NEG_INFINITY);
    for (i, &(r, l)) in scored.iter().enumerate() {
        if r < min_residual || r.is_nan() {
            min_residual = r;
            worst_i = i;
        }
        max_lie = max_lie.max(l);
    }
    let mut bad: Vec<usize> = (0..scored.len()).filter(|&i| !(scored[i].0 >= 0.0)).collect();
    bad.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    bad.truncate(KEEP);
    let violators = bad.into_iter().map(|i| (scored[i].0, points[i].clone())).collect();
    let boundary_margin = boundary_values(trigger, sets, 21)
        .iter()
        .map(|p| coeffs.delta0 * p + coeffs.delta1 - coeffs.eps_delta)
        .fold(f64::INFINITY, f64::min);
    MarginReport {
        min_residual,
        worst: points[worst_i].clone(),
        violators,
        boundary_margin,
        max_lie,
        points: points.len(),
    }
}

/// Settings for [`synthesize_delta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    pub eps_delta: f64,
    pub rows: usize,
    pub verify_points: usize,
    pub max_refits: usize,
    pub domain: ConstraintDomain,
    pub seed: u64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            eps_delta: DEFAULT_EPS_DELTA,
            rows: 20_000,
            verify_points: 100_000,
            max_refits: 20,
            domain: ConstraintDomain::Reachable,
            seed: 0,
        }
    }
}

/// Fitted and verified coefficients with the verification record.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    pub coefficients: DeltaCoefficients,
    pub report: MarginReport,
    /// LP re-solves after the first fit.
    pub refits: usize,
    /// `δ₁` had to be raised by this much after the refit cap.
    pub inflated_by: f64,
}

/// Sample, fit, verify, and add violated points as rows until the dense
/// check passes; after `max_refits` re-solves `δ₁` is raised by the
/// remaining deficit.
pub fn synthesize_delta(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    sets: &SetBundle,
    settings: &SynthesisSettings,
) -> Result<SynthesisOutcome, SynthError> {
    if settings.rows == 0 {
        return Err(SynthError::NoRows);
    }
    settings.domain.validate(sets)?;
    let mut rows = sample_constraints(plant, trigger, sets, settings.domain, settings.rows, settings.seed);
    let boundary = boundary_values(trigger, sets, 21);
    let mut check_points = lattice_points(trigger, plant, sets, settings.domain);
    check_points.extend(sample_points(
        plant,
        trigger,
        sets,
        settings.domain,
        settings.verify_points,
        settings.seed.wrapping_add(0x9e37_79b9),
    ));
    let mut refits = 0;
    loop {
        let coeffs = fit_delta(&rows, &boundary, settings.eps_delta)?;
        let report = verify_on(plant, trigger, sets, &coeffs, &check_points);
        if report.passed() {
            return Ok(SynthesisOutcome {
                coefficients: coeffs,
                report,
                refits,
                inflated_by: 0.0,
            });
        }
        if refits == settings.max_refits {
            let deficit = -report.min_residual.min(report.boundary_margin);
            let bump = deficit + 1e-9 * coeffs.delta1.max(1.0);
            let mut raised = coeffs;
            raised.delta1 += bump;
            raised.objective += bump;
            let report = verify_on(plant, trigger, sets, &raised, &check_points);
            if !report.passed() {
                return Err(SynthError::Verification {
                    margin: report.min_residual,
                    point: report.worst,
                });
            }
            return Ok(SynthesisOutcome {
                coefficients: raised,
                report,
                refits,
                inflated_by: bump,
            });
        }
        rows.extend(
            report
                .violators
                .iter()
                .map(|(_, p)| ConstraintRow::at(plant, trigger, p)),
        );
        refits += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BenchmarkPlant, ConstantPlant, QuadraticTrigger};

    /// All pairwise line intersections plus the `δ₀ = 0` axis, filtered for
    /// feasibility; brute-force reference for the LP.
    fn brute_force(rows: &[ConstraintRow], boundary: &[f64], eps: f64) -> (f64, f64, f64) {
        let kappa = rows.iter().map(|r| r.phi.abs()).sum::<f64>() / rows.len() as f64;
        let mut lines: Vec<(f64, f64)> = rows.iter().map(|r| (r.lie, -r.phi)).collect();
        lines.extend(boundary.iter().map(|&p| (eps, -p)));
        lines.push((eps, 0.0));
        let feasible = |x: f64, y: f64| x >= 0.0 && lines.iter().all(|&(a, b)| y >= a + b * x - 1e-9 * (1.0 + y.abs()));
        let mut cands = vec![];
        for &(a, b) in &lines {
            cands.push((0.0, a + b * 0.0));
        }
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a1, b1) = lines[i];
                let (a2, b2) = lines[j];
                if b1 != b2 {
                    let x = (a1 - a2) / (b2 - b1);
                    cands.push((x, a1 + b1 * x));
                }
            }
        }
        cands
            .into_iter()
            .filter(|&(x, y)| feasible(x, y))
            .map(|(x, y)| (x, y, y + kappa * x))
            .min_by(|p, q| p.2.total_cmp(&q.2))
            .unwrap()
    }

    #[test]
    fn single_row_fit() {
        let rows = [ConstraintRow { phi: -1.0, lie: 1.0 }];
        let c = fit_delta(&rows, &[], 1e-3).unwrap();
        assert_eq!(c.delta0, 0.0);
        assert!((c.delta1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inactive_rows_give_epsilon() {
        let rows = [
            ConstraintRow { phi: -1.0, lie: -0.5 },
            ConstraintRow { phi: 0.3, lie: -2.0 },
        ];
        let c = fit_delta(&rows, &[-0.2], 1e-3).unwrap();
        assert_eq!(c.delta0, 0.0);
        assert_eq!(c.delta1, 1e-3);
    }

    #[test]
    fn empty_rows_rejected() {
        assert_eq!(fit_delta(&[], &[], 1e-3), Err(SynthError::NoRows));
        assert!(fit_delta(&[ConstraintRow { phi: 0.0, lie: 0.0 }], &[], 0.0).is_err());
    }

    #[test]
    fn positive_phi_rows_pull_delta0_up() {
        // Large L where φ̃ > 0 is cheaper to cover with δ₀ when κ is small.
        let rows = [
            ConstraintRow { phi: 10.0, lie: 5.0 },
            ConstraintRow { phi: -0.01, lie: 0.1 },
            ConstraintRow { phi: -0.01, lie: 0.0 },
        ];
        let c = fit_delta(&rows, &[-0.01], 1e-3).unwrap();
        let (bx, by, bobj) = brute_force(&rows, &[-0.01], 1e-3);
        assert!((c.objective - bobj).abs() < 1e-12, "{c:?} vs {bx} {by}");
        assert!(c.delta0 > 0.0);
    }

    #[test]
    fn lp_matches_brute_force_on_random_instances() {
        let mut rng = seeded(21);
        for _ in 0..200 {
            let m = rng.random_range(1..30);
            let rows: Vec<ConstraintRow> = (0..m)
                .map(|_| ConstraintRow {
                    phi: rng.random_range(-2.0..2.0),
                    lie: rng.random_range(-1.0..3.0),
                })
                .collect();
            let boundary: Vec<f64> = (0..rng.random_range(0..4))
                .map(|_| rng.random_range(-1.0..0.0))
                .collect();
            let c = fit_delta(&rows, &boundary, 1e-3).unwrap();
            let (_, _, obj) = brute_force(&rows, &boundary, 1e-3);
            assert!(
                (c.objective - obj).abs() <= 1e-9 * (1.0 + obj.abs()),
                "{} vs {obj}",
                c.objective
            );
            // Feasibility of the returned point.
            for r in &rows {
                assert!(r.lie <= c.delta0 * r.phi + c.delta1 + 1e-9);
            }
            for &p in &boundary {
                assert!(c.delta0 * p + c.delta1 >= 1e-3 - 1e-12);
            }
        }
    }

    #[test]
    fn lebesgue_phi_is_dilated_box() {
        let t = QuadraticTrigger::lebesgue(2, 0.5).unwrap();
        let z = BoxSet::symmetric(&[1.0, 1.0]).unwrap();
        let w = Interval::homogenizing(0.1, 0.4).unwrap();
        let s = build_sets(&t, &z, w, 0.0).unwrap();
        for j in 0..2 {
            assert!((s.phi.hi[j] - 1.2).abs() < 1e-9, "{:?}", s.phi);
            assert!((s.phi.lo[j] + 1.2).abs() < 1e-9);
            assert!((s.e.hi[j] - 2.2).abs() < 1e-9);
        }
        let inflated = build_sets(&t, &z, w, 0.05).unwrap();
        assert!((inflated.phi.hi[0] - 1.26).abs() < 1e-9);
    }

    #[test]
    fn tiny_threshold_collapses_to_z() {
        let t = QuadraticTrigger::lebesgue(2, 1e-9).unwrap();
        let z = BoxSet::symmetric(&[0.5, 0.5]).unwrap();
        let s = build_sets(&t, &z, Interval::homogenizing(1e-3, 1.0).unwrap(), 0.0).unwrap();
        for j in 0..2 {
            assert!((s.phi.hi[j] - 0.5).abs() < 1e-8);
            assert!((s.e.hi[j] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn benchmark_phi_is_compact() {
        let t = QuadraticTrigger::benchmark();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let s = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        // Corner (0.1, ·) pushed out by |e| ≈ 0.4 at w̄ = 0.1.
        assert!(s.phi_probe.hi[0] > 0.5 && s.phi_probe.hi[0] < 0.51, "{:?}", s.phi_probe);
    }

    #[test]
    fn unbounded_phi_detected() {
        // σ > 1: |e|² − σ|x|² ≤ c holds along whole rays.
        let t = QuadraticTrigger::mixed(1, 4.0, 1.0).unwrap();
        let z = BoxSet::symmetric(&[1.0]).unwrap();
        assert!(matches!(
            build_sets(&t, &z, Interval::homogenizing(0.1, 1.0).unwrap(), 0.05),
            Err(SynthError::Unbounded { .. })
        ));
    }

    #[test]
    fn z_must_contain_origin() {
        let t = QuadraticTrigger::benchmark();
        let z = BoxSet::new(vec![0.0, -0.1], vec![0.2, 0.1]).unwrap();
        assert!(build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).is_err());
        assert!(Interval::homogenizing(0.0, 0.1).is_err());
    }

    #[test]
    fn zero_rows_for_zero_samples_and_zero_field() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        assert!(sample_constraints(&p, &t, &sets, ConstraintDomain::Reachable, 0, 1).is_empty());
        let zero = ConstantPlant::new(vec![0.0, 0.0], 1.0).unwrap();
        for domain in [ConstraintDomain::Reachable, ConstraintDomain::Product] {
            let rows = sample_constraints(&zero, &t, &sets, domain, 500, 1);
            assert!(rows.iter().all(|r| r.lie == 0.0));
        }
    }

    #[test]
    fn benchmark_rows_are_finite() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        for domain in [ConstraintDomain::Reachable, ConstraintDomain::Product] {
            let rows = sample_constraints(&p, &t, &sets, domain, 5000, 2);
            assert!(rows.iter().all(|r| r.phi.is_finite() && r.lie.is_finite()));
        }
        let reach = sample_points(&p, &t, &sets, ConstraintDomain::Reachable, 2000, 3);
        for pt in &reach {
            assert!(homogenized_trigger_unchecked(&t, &pt.xi, pt.w) <= 1e-12);
            let held = [pt.xi[0] + pt.xi[2], pt.xi[1] + pt.xi[3]];
            assert!(sets.z.contains(&held.map(|v| v.clamp(-0.1, 0.1))));
            assert!(held.iter().all(|v| v.abs() <= 0.1 + 1e-12));
            assert!(sets.phi.contains(&pt.xi[..2]));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        let a = sample_constraints(&p, &t, &sets, ConstraintDomain::Reachable, 3000, 5);
        let b = sample_constraints(&p, &t, &sets, ConstraintDomain::Reachable, 3000, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn dominating_delta1_verifies() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        let probe = verify_delta(
            &p,
            &t,
            &sets,
            ConstraintDomain::Reachable,
            &DeltaCoefficients {
                delta0: 0.0,
                delta1: 1.0,
                eps_delta: 1e-3,
                kappa: 0.0,
                objective: 1.0,
                degenerate: false,
                rows: 0,
            },
            20_000,
            4,
        );
        let c = DeltaCoefficients {
            delta1: probe.max_lie + 1.0,
            ..fit_delta(&[ConstraintRow { phi: -1.0, lie: 0.0 }], &[], 1e-3).unwrap()
        };
        let report = verify_delta(&p, &t, &sets, ConstraintDomain::Reachable, &c, 20_000, 4);
        assert!(report.min_residual >= 1.0);
        assert!(report.passed());
    }

    #[test]
    fn refit_loop_converges_on_benchmark() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        let settings = SynthesisSettings {
            rows: 10,
            verify_points: 100_000,
            max_refits: 20,
            seed: 3,
            ..Default::default()
        };
        let out = synthesize_delta(&p, &t, &sets, &settings).unwrap();
        assert!(out.report.passed());
        assert!(out.refits <= 5, "took {} refits", out.refits);
        assert_eq!(out.inflated_by, 0.0);
    }

    #[test]
    fn fallback_always_verifies() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        let domain = ConstraintDomain::Projected { radius: 0.099 };
        let probe = verify_delta(&p, &t, &sets, domain, &feasibility_fallback(0.0, 1e-3, 0.0), 5000, 8);
        let fb = feasibility_fallback(probe.max_lie, 1e-3, 1e-6);
        assert!(verify_delta(&p, &t, &sets, domain, &fb, 5000, 8).min_residual >= 1e-6 - 1e-15);
        assert_eq!(feasibility_fallback(-3.0, 1e-3, 0.1).delta1, 1e-3);
    }

    #[test]
    fn projected_radius_checked() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        for radius in [1e-7, 0.2] {
            let settings = SynthesisSettings {
                domain: ConstraintDomain::Projected { radius },
                rows: 10,
                ..Default::default()
            };
            assert!(matches!(
                synthesize_delta(&p, &t, &sets, &settings),
                Err(SynthError::Setting(_))
            ));
        }
    }

    #[test]
    fn projected_points_start_on_sphere() {
        let t = QuadraticTrigger::benchmark();
        let p = BenchmarkPlant::default();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        for pt in sample_points(&p, &t, &sets, ConstraintDomain::Projected { radius: 0.099 }, 3000, 9) {
            let held = [pt.xi[0] + pt.xi[2], pt.xi[1] + pt.xi[3]];
            let norm = (held[0] * held[0] + held[1] * held[1] + pt.w * pt.w).sqrt();
            assert!((norm - 0.099).abs() < 1e-12, "{norm}");
            assert!(pt.w >= 1e-6);
            assert!(homogenized_trigger_unchecked(&t, &pt.xi, pt.w) <= 1e-12);
        }
    }

    #[test]
    fn zero_field_synthesizes_epsilon() {
        let t = QuadraticTrigger::benchmark();
        let zero = ConstantPlant::new(vec![0.0, 0.0], 1.0).unwrap();
        let z = BoxSet::symmetric(&[0.1, 0.1]).unwrap();
        let sets = build_sets(&t, &z, Interval::homogenizing(1e-6, 0.1).unwrap(), 0.05).unwrap();
        let out = synthesize_delta(
            &zero,
            &t,
            &sets,
            &SynthesisSettings {
                rows: 200,
                verify_points: 1000,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.coefficients.delta0, 0.0);
        assert_eq!(out.coefficients.delta1, DEFAULT_EPS_DELTA);
    }
}
