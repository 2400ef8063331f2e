//! synthesize / benchmark / simulate / plot-data.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use regstc::isochron::{pick_radius, CoverageReport, RegionPartition, TimeGrid};
use regstc::rng::{seeded, uniform_in_ball};
use regstc::schedulers::SchedulerPolicy;
use regstc::setsynth::{
    build_sets, synthesize_delta, verify_delta, ConstraintDomain, DeltaCoefficients, SynthError, SynthesisSettings,
};
use regstc::simulate::{closed_loop_run, RunOptions, SimError, SimResult};

use crate::artifact::{ConeSpec, GridSpec, SynthesisArtifact, Verification, ARTIFACT_VERSION};
use crate::config::{DomainKind, GridConfig, RunConfig};
use crate::CliError;

/// Sampling schemes compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scheme {
    RegionStc,
    BaselineStc,
    Etc,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::RegionStc, Scheme::BaselineStc, Scheme::Etc];

    pub fn name(self) -> &'static str {
        match self {
            Self::RegionStc => "region-stc",
            Self::BaselineStc => "baseline-stc",
            Self::Etc => "etc",
        }
    }

    pub fn policy(self, partition: &Arc<RegionPartition>) -> SchedulerPolicy {
        match self {
            Self::RegionStc => SchedulerPolicy::RegionStc(partition.clone()),
            Self::BaselineStc => SchedulerPolicy::BaselineStc,
            Self::Etc => SchedulerPolicy::Etc,
        }
    }
}

/// Result of `synthesize` before it is written out.
#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub artifact: SynthesisArtifact,
    pub coverage: CoverageReport,
}

fn synth_err(e: SynthError) -> CliError {
    match e {
        SynthError::Set(m) | SynthError::Setting(m) => CliError::Config(m),
        other => CliError::Synthesis(other.to_string()),
    }
}

/// `build_sets → δ → radius → grid`.
pub fn synthesize(cfg: &RunConfig) -> Result<SynthesisOutput, CliError> {
    let plant = cfg.plant()?;
    let trigger = cfg.trigger()?;
    let z = cfg.z()?;
    let w = cfg.w()?;
    let s = &cfg.synthesis;

    let sets = build_sets(trigger.as_ref(), &z, w, cfg.sets.inflation).map_err(synth_err)?;
    let radius = pick_radius(&z, w, s.radius_safety).map_err(|e| CliError::Synthesis(e.to_string()))?;
    let domain = match s.domain {
        DomainKind::Projected => ConstraintDomain::Projected { radius },
        DomainKind::Reachable => ConstraintDomain::Reachable,
        DomainKind::Product => ConstraintDomain::Product,
    };
    domain.validate(&sets).map_err(synth_err)?;
    let settings = SynthesisSettings {
        eps_delta: s.eps_delta,
        rows: s.rows,
        verify_points: s.verify_points,
        max_refits: s.max_refits,
        domain,
        seed: s.seed,
    };

    let (coefficients, verification, source) = match s.delta_override {
        None => {
            let out = synthesize_delta(plant.as_ref(), trigger.as_ref(), &sets, &settings).map_err(synth_err)?;
            let v = Verification {
                margin: out.report.min_residual,
                boundary_margin: out.report.boundary_margin,
                points: out.report.points,
                max_lie: out.report.max_lie,
                refits: out.refits,
                inflated_by: out.inflated_by,
            };
            (out.coefficients, v, "synthesized")
        }
        Some(o) => {
            let c = DeltaCoefficients {
                delta0: o.delta0,
                delta1: o.delta1,
                eps_delta: s.eps_delta,
                kappa: 0.0,
                objective: o.delta1,
                degenerate: false,
                rows: 0,
            };
            let r = verify_delta(
                plant.as_ref(),
                trigger.as_ref(),
                &sets,
                domain,
                &c,
                s.verify_points,
                s.seed.wrapping_add(0x9e37_79b9),
            );
            if !r.passed() {
                return Err(CliError::Verification(format!(
                    "override δ₀ = {}, δ₁ = {} violates the coefficient inequality: min residual {:.4e} at {:?}",
                    o.delta0, o.delta1, r.min_residual, r.worst
                )));
            }
            let v = Verification {
                margin: r.min_residual,
                boundary_margin: r.boundary_margin,
                points: r.points,
                max_lie: r.max_lie,
                refits: 0,
                inflated_by: 0.0,
            };
            (c, v, "override")
        }
    };

    let mut artifact = SynthesisArtifact {
        version: ARTIFACT_VERSION,
        model_hash: cfg.model_hash(),
        model: plant.name().to_string(),
        trigger: trigger.name().to_string(),
        alpha: plant.homogeneity_degree(),
        theta: trigger.homogeneity_degree(),
        delta_source: source.to_string(),
        domain,
        sets,
        coefficients,
        verification,
        cone: ConeSpec {
            w_min: w.lo,
            radius,
            b1_radius_sq: 0.0,
        },
        grid: GridSpec {
            first: 1.0,
            ratio: 2.0,
            q: 1,
        },
    };
    let engine = artifact
        .engine(trigger.clone())
        .map_err(|e| CliError::Synthesis(e.to_string()))?;
    engine
        .check_segment_inside(&z)
        .map_err(|e| CliError::Synthesis(e.to_string()))?;
    artifact.cone.b1_radius_sq = engine.b1_radius_sq();
    let grid = match cfg.grid {
        GridConfig::Geometric { first, ratio, q } => TimeGrid::geometric(first, ratio, q),
        GridConfig::Auto { ratio, coverage_radius } => {
            TimeGrid::auto(&engine, cfg.dim(), coverage_radius, ratio, s.seed)
        }
    }
    .map_err(|e| CliError::Synthesis(e.to_string()))?;
    artifact.grid = GridSpec {
        first: grid.first(),
        ratio: grid.ratio(),
        q: grid.len(),
    };
    let partition = RegionPartition::new(engine, grid);
    let coverage = partition.coverage_report(cfg.dim(), cfg.benchmark.ball_radius.max(1e-9), 20_000, s.seed);
    Ok(SynthesisOutput { artifact, coverage })
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub x0: Vec<f64>,
    pub scheme: Scheme,
    pub result: Result<SimResult, String>,
    pub wall_time: f64,
}

impl RunRecord {
    pub fn samplings(&self) -> Option<usize> {
        self.result.as_ref().ok().map(|r| r.samplings())
    }
}

/// Initial conditions uniform in the benchmark ball.
pub fn initial_conditions(cfg: &RunConfig) -> Vec<Vec<f64>> {
    let mut rng = seeded(cfg.benchmark.seed);
    (0..cfg.benchmark.count)
        .map(|_| uniform_in_ball(&mut rng, cfg.dim(), cfg.benchmark.ball_radius))
        .collect()
}

pub fn run_options(cfg: &RunConfig, record: bool) -> RunOptions {
    RunOptions {
        step: cfg.integrator.h,
        event_tol: cfg.integrator.event_tol,
        record,
    }
}

fn describe(e: SimError) -> String {
    e.to_string()
}

/// Runs `schemes` from every initial condition. Results are ordered by
/// `(run id, scheme)` regardless of scheduling.
pub fn benchmark(
    cfg: &RunConfig,
    artifact: &SynthesisArtifact,
    schemes: &[Scheme],
    x0s: &[Vec<f64>],
) -> Result<Vec<RunRecord>, CliError> {
    artifact.check_hash(&cfg.model_hash())?;
    let plant = cfg.plant()?;
    let trigger = cfg.trigger()?;
    let signal = cfg.signal_for(plant.as_ref())?;
    let partition = Arc::new(artifact.partition(trigger.clone())?);
    let options = run_options(cfg, false);
    let jobs: Vec<(usize, Scheme)> = (0..x0s.len())
        .flat_map(|i| schemes.iter().map(move |s| (i, *s)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(i, scheme)| {
            let start = Instant::now();
            let result = closed_loop_run(
                plant.as_ref(),
                trigger.as_ref(),
                &scheme.policy(&partition),
                &x0s[i],
                &signal,
                cfg.benchmark.horizon,
                &options,
            )
            .map_err(describe);
            RunRecord {
                run_id: i,
                x0: x0s[i].clone(),
                scheme,
                result,
                wall_time: start.elapsed().as_secs_f64(),
            }
        })
        .collect())
}

/// Per-scheme aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub runs: usize,
    pub failed: usize,
    pub mean_samplings: f64,
    pub min_dwell: f64,
    pub max_phi: f64,
}

pub fn summarize(records: &[RunRecord], scheme: Scheme) -> SchemeSummary {
    let mine: Vec<&RunRecord> = records.iter().filter(|r| r.scheme == scheme).collect();
    let ok: Vec<&SimResult> = mine.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let mean = ok.iter().map(|r| r.samplings() as f64).sum::<f64>() / ok.len().max(1) as f64;
    SchemeSummary {
        scheme,
        runs: mine.len(),
        failed: mine.len() - ok.len(),
        mean_samplings: if ok.is_empty() { f64::NAN } else { mean },
        min_dwell: ok.iter().filter_map(|r| r.min_dwell()).fold(f64::INFINITY, f64::min),
        max_phi: ok.iter().map(|r| r.max_phi).fold(f64::NEG_INFINITY, f64::max),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `benchmark.csv` (deterministic) and `timings.csv` (wall times).
pub fn write_benchmark(dir: &Path, records: &[RunRecord]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let dim = records.first().map(|r| r.x0.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(dir.join("benchmark.csv"))?;
    let mut header = vec!["run_id".to_string()];
    header.extend((1..=dim).map(|j| format!("x0_{j}")));
    header.extend(["scheme", "samplings", "min_dwell", "max_phi", "status"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.run_id.to_string()];
        row.extend(r.x0.iter().map(|v| v.to_string()));
        row.push(r.scheme.name().into());
        match &r.result {
            Ok(s) => {
                row.push(s.samplings().to_string());
                row.push(opt(s.min_dwell()));
                row.push(s.max_phi.to_string());
                row.push("ok".into());
            }
            Err(e) => {
                row.extend([String::new(), String::new(), String::new()]);
                row.push(format!("error: {e}"));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut t = csv::Writer::from_path(dir.join("timings.csv"))?;
    t.write_record(["run_id", "scheme", "wall_time_s"])?;
    for r in records {
        t.write_record([r.run_id.to_string(), r.scheme.name().into(), r.wall_time.to_string()])?;
    }
    t.flush()?;
    Ok(())
}

/// Single recorded run.
pub fn simulate(
    cfg: &RunConfig,
    artifact: &SynthesisArtifact,
    scheme: Scheme,
    x0: &[f64],
) -> Result<SimResult, CliError> {
    artifact.check_hash(&cfg.model_hash())?;
    let plant = cfg.plant()?;
    let trigger = cfg.trigger()?;
    if x0.len() != plant.state_dim() {
        return Err(CliError::Config(format!(
            "x0 has dimension {}, plant has {}",
            x0.len(),
            plant.state_dim()
        )));
    }
    let signal = cfg.signal_for(plant.as_ref())?;
    let partition = Arc::new(artifact.partition(trigger.clone())?);
    closed_loop_run(
        plant.as_ref(),
        trigger.as_ref(),
        &scheme.policy(&partition),
        x0,
        &signal,
        cfg.benchmark.horizon,
        &run_options(cfg, true),
    )
    .map_err(|e| match e {
        SimError::Coverage { .. } => CliError::Coverage(e.to_string()),
        other => CliError::Synthesis(other.to_string()),
    })
}

/// Writes the recorded trajectory and the sampling sequence of a run.
pub fn write_run(dir: &Path, stem: &str, result: &SimResult) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let traj = result
        .trajectory
        .as_ref()
        .ok_or_else(|| CliError::Io("run was not recorded".into()))?;
    let n = traj.dim() / 2;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}_trajectory.csv")))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("zeta{j}")));
    header.extend((1..=n).map(|j| format!("eps{j}")));
    header.push("phi".into());
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![traj.times()[i].to_string()];
        row.extend(traj.state(i).iter().map(|v| v.to_string()));
        row.push(traj.trigger_values()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    write_dwells(&dir.join(format!("{stem}_samples.csv")), &[(result.scheme, result)])
}

fn write_dwells(path: &Path, runs: &[(&str, &SimResult)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scheme", "t", "dwell"])?;
    for (name, r) in runs {
        for (t, d) in r.sampling_times.iter().zip(&r.dwells) {
            w.write_record([name.to_string(), t.to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `(t, ζ)` of the region-based run and `(t, dwell)` of every scheme.
pub fn plot_data(cfg: &RunConfig, artifact: &SynthesisArtifact, x0: &[f64], dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let runs: Vec<SimResult> = Scheme::ALL
        .iter()
        .map(|s| simulate(cfg, artifact, *s, x0))
        .collect::<Result<_, _>>()?;
    let traj = runs[0].trajectory.as_ref().expect("recorded");
    let n = traj.dim() / 2;
    let mut w = csv::Writer::from_path(dir.join("plot_trajectory.csv"))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("zeta{j}")));
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![traj.times()[i].to_string()];
        row.extend(traj.state(i)[..n].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    let named: Vec<(&str, &SimResult)> = runs.iter().map(|r| (r.scheme, r)).collect();
    write_dwells(&dir.join("plot_dwell.csv"), &named)
}
