//! Command-line driver for the rhombus-billiard simulator.
//!
//! Every subcommand writes its data files plus a `manifest.json` holding
//! the fully resolved configuration, the artifact version and the wall
//! time; rerunning with `--config manifest.json` reproduces the data
//! files byte for byte.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 partial results (some sweep points or probes failed).

mod config;

use clap::{Args, Parser, Subcommand};
use config::{parse_count, parse_list, parse_triple, ConfigError, Range, Resolved};
use ehrenfest_core::experiments::{
    self, basin_probe, current_estimate, run_trajectory_with, sweep_field, sweep_geometry,
    Termination,
};
use ehrenfest_core::io;
use ehrenfest_core::orbits::{self, recipes};
use ehrenfest_core::ParticleState;
use serde::Serialize;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "ehrenfest",
    version,
    about = "Event-driven simulation of a field-driven, thermostatted rhombus billiard"
)]
struct Cli {
    /// JSON configuration file (or a manifest from a previous run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (falls back to $EHRENFEST_OUT, then ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker-thread cap for sweeps and probes.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default, Clone)]
struct CommonArgs {
    /// Field strength.
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Number of collisions (accepts scientific notation, e.g. 1e6).
    #[arg(long)]
    n: Option<String>,
    /// PRNG seed for random initial conditions.
    #[arg(long)]
    seed: Option<u64>,
    /// Retained tail length.
    #[arg(long)]
    tail: Option<usize>,
    /// Hexagon side length.
    #[arg(long = "L", allow_negative_numbers = true)]
    hex_side: Option<f64>,
    /// Rhombus semiaxis along x.
    #[arg(long, allow_negative_numbers = true)]
    sx: Option<f64>,
    /// Rhombus semiaxis along y.
    #[arg(long, allow_negative_numbers = true)]
    sy: Option<f64>,
    /// Explicit initial phase point "X,Y,THETA" (otherwise random).
    #[arg(long)]
    ic: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the per-collision trajectory stream.
    Simulate(CommonArgs),
    /// Long-run Lyapunov exponent estimation.
    Lyapunov(CommonArgs),
    /// Sweep the field strength over a grid.
    SweepField {
        #[command(flatten)]
        common: CommonArgs,
        /// Field grid "LO:HI:STEP".
        #[arg(long = "eps-range")]
        eps_range: Option<String>,
    },
    /// Sweep the rhombus semiaxis s_x at fixed field.
    SweepGeometry {
        #[command(flatten)]
        common: CommonArgs,
        /// Semiaxis grid "LO:HI:STEP".
        #[arg(long = "sx-range")]
        sx_range: Option<String>,
    },
    /// Analyze a named periodic orbit.
    Orbit {
        #[command(flatten)]
        common: CommonArgs,
        /// Orbit family: table2-row1, table2-row2, nineteen-point, or
        /// table2 (row selected by --eps).
        #[arg(long)]
        family: Option<String>,
    },
    /// Probe the basin of an attracting orbit around a center point.
    Basin {
        #[command(flatten)]
        common: CommonArgs,
        /// Center phase point "X,Y,THETA".
        #[arg(long)]
        center: Option<String>,
        /// Perturbation magnitudes, comma separated.
        #[arg(long)]
        magnitudes: Option<String>,
        /// Collision cap per probe.
        #[arg(long)]
        cap: Option<String>,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact_version: &'a str,
    command: &'a str,
    config: &'a Resolved,
    wall_time_s: f64,
}

enum RunError {
    Config(ConfigError),
    Numerical(String),
    Partial(String),
    Io(std::io::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(RunError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
        Err(RunError::Partial(msg)) => {
            eprintln!("partial results: {msg}");
            ExitCode::from(4)
        }
        Err(RunError::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::from(3)
        }
    }
}

fn apply_common(resolved: &mut Resolved, a: &CommonArgs) -> Result<(), ConfigError> {
    if let Some(v) = a.eps {
        resolved.eps = v;
    }
    if let Some(n) = &a.n {
        resolved.n_collisions = parse_count(n, "n")?;
    }
    if let Some(v) = a.seed {
        resolved.seed = v;
    }
    if let Some(v) = a.tail {
        resolved.tail_size = v;
        resolved.tail_explicit = true;
    }
    if let Some(v) = a.hex_side {
        resolved.geometry.hex_side = v;
    }
    if let Some(v) = a.sx {
        resolved.geometry.s_x = v;
    }
    if let Some(v) = a.sy {
        resolved.geometry.s_y = v;
    }
    if let Some(ic) = &a.ic {
        resolved.ic = Some(parse_triple(ic, "ic")?);
    }
    Ok(())
}

fn resolve(cli: &Cli, common: &CommonArgs) -> Result<Resolved, ConfigError> {
    let mut resolved = Resolved::default();
    if let Some(path) = &cli.config {
        let file = config::load_file(path)?;
        resolved.apply_file(&file);
    }
    apply_common(&mut resolved, common)?;
    if let Some(t) = cli.threads {
        resolved.threads = Some(t);
    }
    Ok(resolved)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("EHRENFEST_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn init_threads(resolved: &Resolved) -> Result<(), RunError> {
    if let Some(t) = resolved.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| RunError::Numerical(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write_manifest(
    dir: &Path,
    command: &str,
    resolved: &Resolved,
    started: Instant,
) -> Result<(), RunError> {
    let manifest = Manifest {
        artifact_version: ehrenfest_core::VERSION,
        command,
        config: resolved,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RunError::Numerical(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), RunError> {
    let dir = out_dir(&cli);
    std::fs::create_dir_all(&dir)?;
    let started = Instant::now();

    match &cli.command {
        Command::Simulate(common) => {
            let resolved = resolve(&cli, common)?;
            resolved.validate()?;
            init_threads(&resolved)?;
            let cfg = resolved.run_config();
            let mut file =
                std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?);
            writeln!(file, "{}", io::TRAJECTORY_HEADER)?;
            let mut sink_err = None;
            let stats = run_trajectory_with(&cfg, |n, t, state, info, dt| {
                if sink_err.is_none() {
                    if let Err(e) = writeln!(file, "{}", io::trajectory_row(n, t, state, info, dt))
                    {
                        sink_err = Some(e);
                    }
                }
            })
            .map_err(|e| RunError::Numerical(e.to_string()))?;
            if let Some(e) = sink_err {
                return Err(RunError::Io(e));
            }
            file.flush()?;
            drop(file);
            write_manifest(&dir, "simulate", &resolved, started)?;
            match stats.termination {
                Termination::Completed => Ok(()),
                Termination::CornerHit => Err(RunError::Numerical(
                    "trajectory ended on a corner hit".into(),
                )),
                Termination::Stalled => Err(RunError::Numerical("trajectory stalled".into())),
            }
        }
        Command::Lyapunov(common) => {
            let resolved = resolve(&cli, common)?;
            resolved.validate()?;
            if resolved.eps <= 0.0 {
                return Err(RunError::Config(ConfigError {
                    field: "eps".into(),
                    reason: "exponent estimation requires a positive field".into(),
                }));
            }
            init_threads(&resolved)?;
            let cfg = resolved.run_config();
            let stats = experiments::run_trajectory(&cfg)
                .map_err(|e| RunError::Numerical(e.to_string()))?;
            let mut file =
                std::io::BufWriter::new(std::fs::File::create(dir.join("exponents.csv"))?);
            io::write_exponent_csv(&mut file, &stats.exponent_series)?;
            file.flush()?;
            drop(file);
            let summary = serde_json::json!({
                "n_done": stats.n_done,
                "total_time": stats.total_time,
                "lambda1": stats.final_exponents.map(|e| e.0),
                "lambda2": stats.final_exponents.map(|e| e.1),
                "classification": stats.classification.to_string(),
                "collapse_index": stats.collapse_index,
                "displacement": stats.displacement,
                "current": current_estimate(&stats, resolved.eps),
            });
            std::fs::write(
                dir.join("summary.json"),
                serde_json::to_string_pretty(&summary).unwrap() + "\n",
            )?;
            write_manifest(&dir, "lyapunov", &resolved, started)?;
            match stats.termination {
                Termination::Completed => Ok(()),
                other => Err(RunError::Numerical(format!(
                    "trajectory terminated early: {other:?}"
                ))),
            }
        }
        Command::SweepField { common, eps_range } => {
            let mut resolved = resolve(&cli, common)?;
            if let Some(r) = eps_range {
                resolved.eps_range = Some(Range::parse(r, "eps_range")?);
            }
            let range = resolved.eps_range.ok_or_else(|| {
                RunError::Config(ConfigError {
                    field: "eps_range".into(),
                    reason: "sweep-field requires --eps-range LO:HI:STEP".into(),
                })
            })?;
            resolved.validate()?;
            init_threads(&resolved)?;
            let records = sweep_field(range.lo, range.hi, range.step, &resolved.run_config());
            write_sweep_outputs(&dir, &records)?;
            write_manifest(&dir, "sweep-field", &resolved, started)?;
            finish_sweep(&records)
        }
        Command::SweepGeometry { common, sx_range } => {
            let mut resolved = resolve(&cli, common)?;
            if let Some(r) = sx_range {
                resolved.sx_range = Some(Range::parse(r, "sx_range")?);
            }
            let range = resolved.sx_range.ok_or_else(|| {
                RunError::Config(ConfigError {
                    field: "sx_range".into(),
                    reason: "sweep-geometry requires --sx-range LO:HI:STEP".into(),
                })
            })?;
            resolved.validate()?;
            init_threads(&resolved)?;
            let records = sweep_geometry(range.lo, range.hi, range.step, &resolved.run_config());
            write_sweep_outputs(&dir, &records)?;
            write_manifest(&dir, "sweep-geometry", &resolved, started)?;
            finish_sweep(&records)
        }
        Command::Orbit { common, family } => {
            let mut resolved = resolve(&cli, common)?;
            if let Some(f) = family {
                resolved.family = Some(f.clone());
            }
            resolved.validate()?;
            init_threads(&resolved)?;
            let family = resolved.family.clone().ok_or_else(|| {
                RunError::Config(ConfigError {
                    field: "family".into(),
                    reason: "orbit requires --family".into(),
                })
            })?;
            let (g, eps, seed_point, period) = orbit_recipe(&family, resolved.eps)?;
            let orbit = orbits::periodic_orbit_from_phase_point(&g, eps, &seed_point, period)
                .map_err(|e| RunError::Numerical(e.to_string()))?;
            let residual =
                orbits::verify_orbit(&orbit, &g).map_err(|e| RunError::Numerical(e.to_string()))?;
            let stability = orbits::orbit_stability(&orbit, &g)
                .map_err(|e| RunError::Numerical(e.to_string()))?;
            let (j, current_residual) = orbits::orbit_current(&orbit, &stability);
            let doc = serde_json::json!({
                "family": family,
                "geometry": g,
                "orbit": orbit,
                "closure_residual": residual,
                "stability": stability,
                "current": j,
                "current_identity_residual": current_residual,
            });
            std::fs::write(
                dir.join("orbit.json"),
                serde_json::to_string_pretty(&doc).unwrap() + "\n",
            )?;
            write_manifest(&dir, "orbit", &resolved, started)?;
            Ok(())
        }
        Command::Basin {
            common,
            center,
            magnitudes,
            cap,
        } => {
            let mut resolved = resolve(&cli, common)?;
            if let Some(c) = center {
                resolved.center = Some(parse_triple(c, "center")?);
            }
            if let Some(m) = magnitudes {
                resolved.magnitudes = Some(parse_list(m, "magnitudes")?);
            }
            if let Some(c) = cap {
                resolved.cap = Some(parse_count(c, "cap")?);
            }
            resolved.validate()?;
            init_threads(&resolved)?;
            // Default center: the published attracting-orbit point.
            let center = resolved.center.unwrap_or_else(|| {
                let (_, _, p) = recipes::nineteen_point();
                [p.x, p.y, p.theta]
            });
            let magnitudes = resolved
                .magnitudes
                .clone()
                .unwrap_or_else(|| vec![0.0, 1e-9, 1e-7, 1e-5, 1e-3]);
            let cap = resolved.cap.unwrap_or(resolved.n_collisions);
            let directions: Vec<[f64; 3]> = vec![
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 1.0],
            ];
            let results = basin_probe(
                resolved.geometry,
                resolved.eps,
                ParticleState::new(center[0], center[1], center[2]),
                &magnitudes,
                &directions,
                cap,
            );
            let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join("basin.csv"))?);
            io::write_basin_csv(&mut file, &results)?;
            file.flush()?;
            drop(file);
            write_manifest(&dir, "basin", &resolved, started)?;
            if results.iter().any(|r| !r.converged) {
                Err(RunError::Partial(format!(
                    "{} of {} probes did not converge within the cap",
                    results.iter().filter(|r| !r.converged).count(),
                    results.len()
                )))
            } else {
                Ok(())
            }
        }
    }
}

fn orbit_recipe(
    family: &str,
    eps_flag: f64,
) -> Result<(ehrenfest_core::BilliardGeometry, f64, ParticleState, usize), RunError> {
    let named = |r: (ehrenfest_core::BilliardGeometry, f64, ParticleState), period: usize| {
        Ok((r.0, r.1, r.2, period))
    };
    match family {
        "table2-row1" => named(recipes::table2_row1(), 4),
        "table2-row2" => named(recipes::table2_row2(), 4),
        "nineteen-point" => named(recipes::nineteen_point(), 19),
        "table2" => {
            if (eps_flag - 0.374).abs() < 1e-12 {
                named(recipes::table2_row1(), 4)
            } else if (eps_flag - 0.5).abs() < 1e-12 {
                named(recipes::table2_row2(), 4)
            } else {
                Err(RunError::Config(ConfigError {
                    field: "family".into(),
                    reason: format!(
                        "family \"table2\" is published at eps 0.374 and 0.5, got {eps_flag}"
                    ),
                }))
            }
        }
        other => Err(RunError::Config(ConfigError {
            field: "family".into(),
            reason: format!(
                "unknown family {other:?}; known: table2-row1, table2-row2, nineteen-point, table2"
            ),
        })),
    }
}

fn write_sweep_outputs(dir: &Path, records: &[experiments::SweepRecord]) -> Result<(), RunError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join("sweep.csv"))?);
    io::write_sweep_csv(&mut file, records)?;
    file.flush()?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join("multifurcation.csv"))?);
    io::write_multifurcation_csv(&mut file, records)?;
    file.flush()?;
    Ok(())
}

fn finish_sweep(records: &[experiments::SweepRecord]) -> Result<(), RunError> {
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        Err(RunError::Partial(format!(
            "{failures} of {} sweep points recorded errors",
            records.len()
        )))
    } else {
        Ok(())
    }
}
