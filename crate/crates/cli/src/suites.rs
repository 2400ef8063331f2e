//! Property suites run by `verify` and by the acceptance tests.

use std::sync::Arc;

use rayon::prelude::*;
use regstc::isochron::{IsochronEngine, RegionPartition};
use regstc::models::{Plant, Trigger};
use regstc::oracles::mu_root_bisect;
use regstc::rng::{stream, uniform, uniform_in_ball, unit_direction, SimRng};
use regstc::setsynth::verify_delta;
use regstc::simulate::{
    di_intersample_oracle, homogenized_intersample_time, integrate_homogenized, CrossingSearch, RealizationFamily,
};
use serde::Serialize;

use crate::artifact::SynthesisArtifact;
use crate::commands::{benchmark, initial_conditions, summarize, Scheme};
use crate::config::RunConfig;
use crate::CliError;

/// Sample counts for the suites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteBudget {
    pub scaling_points: usize,
    pub scaling_lambdas: Vec<f64>,
    pub scaling_step: f64,
    pub dominance_points: usize,
    pub dominance_realizations: usize,
    pub root_points: usize,
    pub margin_points: usize,
    pub emulation_states: usize,
    pub emulation_realizations: usize,
    pub emulation_switches: usize,
    pub seed: u64,
}

impl Default for SuiteBudget {
    fn default() -> Self {
        Self {
            scaling_points: 20,
            scaling_lambdas: vec![0.5, 2.0, 10.0],
            scaling_step: 1e-5,
            dominance_points: 200,
            dominance_realizations: 20,
            root_points: 1000,
            margin_points: 100_000,
            emulation_states: 50,
            emulation_realizations: 200,
            emulation_switches: 8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// The suite's key statistic; its meaning is given by `detail`.
    pub metric: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub event_tol: f64,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

/// Objects shared by the suites.
pub struct Context {
    pub plant: Arc<dyn Plant>,
    pub trigger: Arc<dyn Trigger>,
    pub partition: Arc<RegionPartition>,
}

impl Context {
    pub fn new(cfg: &RunConfig, artifact: &SynthesisArtifact) -> Result<Self, CliError> {
        artifact.check_hash(&cfg.model_hash())?;
        let trigger = cfg.trigger()?;
        Ok(Self {
            plant: cfg.plant()?,
            partition: Arc::new(artifact.partition(trigger.clone())?),
            trigger,
        })
    }

    pub fn engine(&self) -> &IsochronEngine {
        self.partition.engine()
    }

    fn dim(&self) -> usize {
        self.plant.state_dim()
    }
}

/// A point `(x, w)` with `w ∈ [0.5, 1.5]`, `|x| ≤ 2w`.
fn homogeneous_point(rng: &mut SimRng, dim: usize) -> (Vec<f64>, f64) {
    let w = uniform(rng, 0.5, 1.5);
    (uniform_in_ball(rng, dim, 2.0 * w), w)
}

/// A point of the cone `C`: the ratio `w / |(x,w)|` is log-uniform on
/// `[w̲/r, 1]` and the norm log-uniform on `[0.1, 2]`.
pub fn cone_point(rng: &mut SimRng, engine: &IsochronEngine, dim: usize) -> (Vec<f64>, f64) {
    let p = engine.params();
    let floor = (p.w_min / p.radius).ln();
    let ratio = uniform(rng, floor, 0.0).exp().max(p.w_min / p.radius * (1.0 + 1e-9));
    let norm = uniform(rng, 0.1f64.ln(), 2.0f64.ln()).exp();
    let spread = (1.0 - ratio * ratio).max(0.0).sqrt() * norm;
    let x = unit_direction(rng, dim).into_iter().map(|v| v * spread).collect();
    (x, ratio * norm)
}

/// Inter-sampling times along rays: `τ(λ(x,w)) = λ^{−α} τ((x,w))` with the
/// disturbance signal sped up by `λ^α`.
pub fn scaling_law(ctx: &Context, budget: &SuiteBudget) -> Result<SuiteResult, CliError> {
    let alpha = ctx.plant.homogeneity_degree();
    let bounds = ctx.plant.disturbance_box();
    let family = RealizationFamily {
        count: 16 * budget.scaling_points,
        switches: 8,
        switch_window: 0.5,
        seed: budget.seed,
    };
    let horizon = 5.0;
    let errors: Vec<Result<f64, String>> = (0..budget.scaling_points)
        .into_par_iter()
        .map(|i| {
            let search = CrossingSearch::new(budget.scaling_step, 1e-13, horizon).map_err(|e| e.to_string())?;
            // Points whose trigger never fires within the horizon are redrawn.
            let mut drawn = None;
            for attempt in 0..16 {
                let k = i + attempt * budget.scaling_points;
                let mut rng = stream(budget.seed, k as u64);
                let (x, w) = homogeneous_point(&mut rng, ctx.dim());
                let signal = family.realization(bounds, k);
                let base =
                    homogenized_intersample_time(ctx.plant.as_ref(), ctx.trigger.as_ref(), &x, w, &signal, &search)
                        .map_err(|e| e.to_string())?;
                if let Some(base) = base.time() {
                    drawn = Some((x, w, signal, base));
                    break;
                }
            }
            let (x, w, signal, base) = drawn.ok_or_else(|| format!("no crossing within {horizon} s after 16 draws"))?;
            let mut worst: f64 = 0.0;
            for &lambda in &budget.scaling_lambdas {
                let speed = lambda.powf(alpha);
                let xs: Vec<f64> = x.iter().map(|v| v * lambda).collect();
                let scaled = signal.time_scaled(speed).map_err(|e| e.to_string())?;
                let search = CrossingSearch::new(budget.scaling_step, 1e-13, horizon / speed * 1.01)
                    .map_err(|e| e.to_string())?;
                let t = homogenized_intersample_time(
                    ctx.plant.as_ref(),
                    ctx.trigger.as_ref(),
                    &xs,
                    lambda * w,
                    &scaled,
                    &search,
                )
                .map_err(|e| e.to_string())?
                .time_or_inf();
                worst = worst.max((t * speed - base).abs() / base);
            }
            Ok(worst)
        })
        .collect();
    let errors: Vec<f64> = errors
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(CliError::Verification)?;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    Ok(SuiteResult {
        name: "scaling-law",
        passed: worst <= 1e-3,
        metric: worst,
        detail: format!(
            "max relative error {worst:.3e} over {} points × λ ∈ {:?}",
            errors.len(),
            budget.scaling_lambdas
        ),
    })
}

/// `μ((x,w),t) ≥ φ̃(ξ(t), w)` on `[0, τ↓]` along sampled realizations.
pub fn mu_dominance(ctx: &Context, budget: &SuiteBudget, step: f64) -> Result<SuiteResult, CliError> {
    let engine = ctx.engine();
    let bounds = ctx.plant.disturbance_box();
    let tau_q = ctx.partition.grid().last();
    let family = RealizationFamily {
        count: budget.dominance_realizations,
        switches: 8,
        switch_window: tau_q,
        seed: budget.seed ^ 0xd0,
    };
    let gaps: Vec<Result<f64, String>> = (0..budget.dominance_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(budget.seed ^ 0xd0, i as u64);
            let (x, w) = cone_point(&mut rng, engine, ctx.dim());
            let tau = engine.tau_down(&x, w).map_err(|e| e.to_string())?;
            let xi0: Vec<f64> = x.iter().copied().chain(std::iter::repeat_n(0.0, x.len())).collect();
            let mut worst = f64::INFINITY;
            for k in 0..budget.dominance_realizations {
                let signal = family.realization(bounds, k);
                let traj = integrate_homogenized(
                    ctx.plant.as_ref(),
                    ctx.trigger.as_ref(),
                    &xi0,
                    w,
                    &signal,
                    step.min(tau / 4.0),
                    tau,
                )
                .map_err(|e| e.to_string())?;
                for (t, phi) in traj.times().iter().zip(traj.trigger_values()) {
                    let mu = engine.mu(&x, w, *t).map_err(|e| e.to_string())?;
                    worst = worst.min(mu - phi);
                }
            }
            Ok(worst)
        })
        .collect();
    let gaps: Vec<f64> = gaps
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(CliError::Verification)?;
    let worst = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SuiteResult {
        name: "mu-dominance",
        passed: worst >= -1e-6,
        metric: worst,
        detail: format!(
            "min (μ − φ̃) = {worst:.3e} over {} points × {} realizations",
            gaps.len(),
            budget.dominance_realizations
        ),
    })
}

/// Closed-form `τ↓` against bisection on `μ`.
pub fn root_agreement(ctx: &Context, budget: &SuiteBudget) -> Result<SuiteResult, CliError> {
    let engine = ctx.engine();
    let mut rng = stream(budget.seed ^ 0x700, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..budget.root_points {
        let (x, w) = cone_point(&mut rng, engine, ctx.dim());
        let tau = engine
            .tau_down(&x, w)
            .map_err(|e| CliError::Verification(e.to_string()))?;
        let root = mu_root_bisect(engine, &x, w, 2.0 * tau, 1e-13 * (1.0 + tau))
            .map_err(|e| CliError::Verification(e.to_string()))?;
        worst = worst.max((tau - root).abs() / (1.0 + tau));
    }
    Ok(SuiteResult {
        name: "root-agreement",
        passed: worst <= 1e-9,
        metric: worst,
        detail: format!(
            "max |τ↓ − bisection|/(1 + τ↓) = {worst:.3e} over {} points",
            budget.root_points
        ),
    })
}

/// Residual of the coefficient inequality on a fresh dense sample.
pub fn coefficient_margin(ctx: &Context, artifact: &SynthesisArtifact, budget: &SuiteBudget) -> SuiteResult {
    let r = verify_delta(
        ctx.plant.as_ref(),
        ctx.trigger.as_ref(),
        &artifact.sets,
        artifact.domain,
        &artifact.coefficients,
        budget.margin_points,
        budget.seed ^ 0x30a,
    );
    SuiteResult {
        name: "delta-margin",
        passed: r.passed(),
        metric: r.min_residual,
        detail: format!(
            "min residual {:.4e}, boundary margin {:.4e} on {} points (all Δ vertices on the lattice)",
            r.min_residual, r.boundary_margin, r.points
        ),
    }
}

/// `τ↓((x,1))` never exceeds the sampled worst-case inter-sampling time.
pub fn emulation_bound(
    ctx: &Context,
    budget: &SuiteBudget,
    ball_radius: f64,
    step: f64,
) -> Result<SuiteResult, CliError> {
    let tau_q = ctx.partition.grid().last();
    let mut rng = stream(budget.seed ^ 0xe10, 0);
    let mut states = Vec::new();
    let mut attempts = 0;
    while states.len() < budget.emulation_states && attempts < 1000 * budget.emulation_states.max(1) {
        attempts += 1;
        let x = uniform_in_ball(&mut rng, ctx.dim(), ball_radius);
        if ctx.partition.region_index(&x).is_ok() {
            states.push(x);
        }
    }
    let search = CrossingSearch::new(step, 1e-10, 10.0 * tau_q).map_err(|e| CliError::Verification(e.to_string()))?;
    let family = RealizationFamily {
        count: budget.emulation_realizations,
        switches: budget.emulation_switches,
        switch_window: 2.0 * tau_q,
        seed: budget.seed ^ 0xe11,
    };
    let gaps: Vec<Result<f64, String>> = states
        .par_iter()
        .map(|x| {
            let lower = ctx.engine().tau_down(x, 1.0).map_err(|e| e.to_string())?;
            let oracle = di_intersample_oracle(ctx.plant.as_ref(), ctx.trigger.as_ref(), x, &family, &search)
                .map_err(|e| e.to_string())?;
            Ok(oracle - lower)
        })
        .collect();
    let gaps: Vec<f64> = gaps
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(CliError::Verification)?;
    let violations = gaps.iter().filter(|g| !(**g >= 0.0)).count();
    let worst = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SuiteResult {
        name: "emulation-bound",
        passed: violations == 0 && states.len() == budget.emulation_states,
        metric: violations as f64,
        detail: format!(
            "{violations} violations over {} covered states, min (oracle − τ↓) = {worst:.3e}",
            states.len()
        ),
    })
}

/// Safety and Zeno-freedom over the benchmark runs of the region scheme.
pub fn safety(cfg: &RunConfig, artifact: &SynthesisArtifact) -> Result<Vec<SuiteResult>, CliError> {
    let records = benchmark(cfg, artifact, &[Scheme::RegionStc], &initial_conditions(cfg))?;
    let s = summarize(&records, Scheme::RegionStc);
    let tau1 = artifact.time_grid()?.first();
    Ok(vec![
        SuiteResult {
            name: "safety",
            passed: s.failed == 0 && s.max_phi <= 1e-6,
            metric: s.max_phi,
            detail: format!("max φ = {:.4e} over {} runs, {} failed", s.max_phi, s.runs, s.failed),
        },
        SuiteResult {
            name: "zeno-freedom",
            passed: s.failed == 0 && s.min_dwell >= tau1,
            metric: s.min_dwell,
            detail: format!("min dwell {:.6e} vs τ₁ = {tau1:.6e}", s.min_dwell),
        },
    ])
}

/// All suites.
pub fn verify(cfg: &RunConfig, artifact: &SynthesisArtifact, budget: &SuiteBudget) -> Result<VerifyReport, CliError> {
    let ctx = Context::new(cfg, artifact)?;
    let h = cfg.integrator.h;
    let mut suites = vec![
        scaling_law(&ctx, budget)?,
        mu_dominance(&ctx, budget, h)?,
        root_agreement(&ctx, budget)?,
    ];
    suites.extend(safety(cfg, artifact)?);
    suites.push(coefficient_margin(&ctx, artifact, budget));
    suites.push(emulation_bound(&ctx, budget, cfg.benchmark.ball_radius, h)?);
    Ok(VerifyReport {
        event_tol: cfg.integrator.event_tol,
        suites,
    })
}
