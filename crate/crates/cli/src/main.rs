use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regstc_cli::commands::{self, Scheme};
use regstc_cli::suites::{self, SuiteBudget};
use regstc_cli::{CliError, RunConfig, SynthesisArtifact};

#[derive(Parser)]
#[command(
    name = "regstc",
    version,
    about = "Region-based self-triggered sampling: synthesis, simulation, benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the command's random draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Integration step (s).
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build sets, fit δ₀/δ₁, pick the cone radius and grid, write the artifact.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Artifact path; defaults to `<out>/artifact.toml`.
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
    /// Runs every scheme from seeded initial conditions.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        artifact: PathBuf,
    },
    /// One recorded run.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, value_enum, default_value = "region-stc")]
        scheme: Scheme,
        /// Initial condition, comma separated; defaults to `benchmark.single_x0`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
    },
    /// Property suites; exits 4 if any fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        artifact: PathBuf,
    },
    /// Trajectory and dwell series for plotting.
    PlotData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(h) = common.h {
        cfg.integrator.h = h;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    Ok(cfg)
}

fn single_x0(cfg: &RunConfig, x0: Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
    x0.or_else(|| cfg.benchmark.single_x0.clone())
        .ok_or_else(|| CliError::Config("no initial condition: pass --x0 or set benchmark.single_x0".into()))
}

fn header(cfg: &RunConfig) {
    println!(
        "# h = {:e} s, event tolerance = {:e} s, horizon = {} s",
        cfg.integrator.h, cfg.integrator.event_tol, cfg.benchmark.horizon
    );
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synthesize { common, artifact } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.synthesis.seed = seed;
            }
            let out = commands::synthesize(&cfg)?;
            let path = artifact.unwrap_or_else(|| Path::new(&cfg.output.dir).join("artifact.toml"));
            out.artifact.save(&path)?;
            let a = &out.artifact;
            let c = &out.coverage;
            println!("δ₀ = {}", a.coefficients.delta0);
            println!("δ₁ = {}", a.coefficients.delta1);
            println!(
                "margin = {:.4e} on {} points ({} refits, δ₁ inflated by {:.3e})",
                a.verification.margin, a.verification.points, a.verification.refits, a.verification.inflated_by
            );
            println!("r = {}", a.cone.radius);
            println!("m* = {} (τ₁ = {:e}, ratio {})", a.grid.q, a.grid.first, a.grid.ratio);
            println!(
                "coverage of the radius-{} ball: B₂ {:.4}, B₁ ∩ B₂ {:.4} ({} samples, B₁ radius² {:.4e})",
                c.probe_radius, c.b2_fraction, c.covered_fraction, c.samples, c.b1_radius_sq
            );
            println!("artifact: {}", path.display());
        }
        Command::Benchmark { common, artifact } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.benchmark.seed = seed;
            }
            let a = SynthesisArtifact::load(&artifact)?;
            let records = commands::benchmark(&cfg, &a, &Scheme::ALL, &commands::initial_conditions(&cfg))?;
            commands::write_benchmark(Path::new(&cfg.output.dir), &records)?;
            header(&cfg);
            println!(
                "{:<14} {:>6} {:>7} {:>15} {:>12} {:>12}",
                "scheme", "runs", "failed", "mean samplings", "min dwell", "max φ"
            );
            for scheme in Scheme::ALL {
                let s = commands::summarize(&records, scheme);
                println!(
                    "{:<14} {:>6} {:>7} {:>15.2} {:>12.4e} {:>12.4e}",
                    scheme.name(),
                    s.runs,
                    s.failed,
                    s.mean_samplings,
                    s.min_dwell,
                    s.max_phi
                );
            }
            for r in records.iter().filter(|r| r.result.is_err()) {
                eprintln!(
                    "run {} ({}): {}",
                    r.run_id,
                    r.scheme.name(),
                    r.result.as_ref().unwrap_err()
                );
            }
        }
        Command::Simulate {
            common,
            artifact,
            scheme,
            x0,
        } => {
            let cfg = load_config(&common)?;
            let a = SynthesisArtifact::load(&artifact)?;
            let x0 = single_x0(&cfg, x0)?;
            let result = commands::simulate(&cfg, &a, scheme, &x0)?;
            commands::write_run(Path::new(&cfg.output.dir), scheme.name(), &result)?;
            header(&cfg);
            println!(
                "{} from {:?}: {} samplings, min dwell {:.4e} s, max φ {:.4e}",
                scheme.name(),
                x0,
                result.samplings(),
                result.min_dwell().unwrap_or(f64::NAN),
                result.max_phi
            );
        }
        Command::Verify { common, artifact } => {
            let cfg = load_config(&common)?;
            let a = SynthesisArtifact::load(&artifact)?;
            let mut budget = SuiteBudget::default();
            if let Some(seed) = common.seed {
                budget.seed = seed;
            }
            let report = suites::verify(&cfg, &a, &budget)?;
            let dir = Path::new(&cfg.output.dir);
            std::fs::create_dir_all(dir)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
            std::fs::write(dir.join("verify.json"), json)?;
            header(&cfg);
            for s in &report.suites {
                println!("{} {:<16} {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail);
            }
            if !report.passed() {
                let failed: Vec<&str> = report.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect();
                return Err(CliError::Verification(format!("failed suites: {}", failed.join(", "))));
            }
        }
        Command::PlotData { common, artifact, x0 } => {
            let cfg = load_config(&common)?;
            let a = SynthesisArtifact::load(&artifact)?;
            let x0 = single_x0(&cfg, x0)?;
            commands::plot_data(&cfg, &a, &x0, Path::new(&cfg.output.dir))?;
            println!("wrote plot_trajectory.csv and plot_dwell.csv to {}", cfg.output.dir);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
