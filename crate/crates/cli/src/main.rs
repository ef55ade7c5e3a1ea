use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use teleop_core::control::TraceSpec;
use teleop_core::harness::live::{run_robot, run_xr, Side};
use teleop_core::harness::output::{report_text, write_all};
use teleop_core::harness::{run, scenarios, ConfigError, Mode, SimConfig, SimError, Transport};
use teleop_core::pointcloud::scene::{render, SceneConfig, SceneSpec};

#[derive(Parser)]
#[command(name = "teleop", version, about = "XR teleoperation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation (or one live side) and write its artifacts.
    Run {
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        /// Built-in configuration instead of a file.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(scenarios::NAMES))]
        scenario: Option<String>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Which process to run when the config uses the datagram transport.
        #[arg(long)]
        side: Option<Side>,
        /// Wall-clock seconds for a live side; defaults to the horizon.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Paired telexr/baseline runs over a seed range, one CSV row per seed.
    Compare {
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(scenarios::NAMES))]
        scenario: Option<String>,
        /// `a..b`, `a..=b` or a single seed.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic hand trace as CSV.
    GenTrace {
        kind: TraceKind,
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.02)]
        period: f64,
        #[arg(long, default_value_t = 0.05)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.25)]
        frequency: f64,
        #[arg(long, default_value_t = 0.1)]
        length: f64,
        #[arg(long, default_value_t = 0.15)]
        reach: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic organized cloud (writes `<out>` and `<out>.depth`).
    GenScene {
        kind: SceneKind,
        #[arg(long, default_value_t = 80)]
        width: usize,
        #[arg(long, default_value_t = 60)]
        height: usize,
        /// Plane depth, meters.
        #[arg(long, default_value_t = 1.5)]
        depth: f64,
        /// Cube edge, meters.
        #[arg(long, default_value_t = 0.3)]
        size: f64,
        #[arg(long, default_value_t = 1.0)]
        near: f64,
        #[arg(long, default_value_t = 2.0)]
        far: f64,
        /// Step column; defaults to the middle.
        #[arg(long)]
        column: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceKind {
    Sinusoid,
    StraightLine,
    PickAndPlace,
    Stationary,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    Plane,
    CubeOnPlane,
    Step,
}

enum Failure {
    Config(ConfigError),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            config,
            scenario,
            mode,
            seed,
            out,
            side,
            duration,
        } => cmd_run(config.as_deref(), scenario.as_deref(), mode, seed, &out, side, duration),
        Cmd::Compare {
            config,
            scenario,
            seeds,
            out,
        } => cmd_compare(config.as_deref(), scenario.as_deref(), &seeds, out.as_deref()),
        Cmd::GenTrace {
            kind,
            duration,
            period,
            amplitude,
            frequency,
            length,
            reach,
            seed,
            out,
        } => {
            let spec = match kind {
                TraceKind::Sinusoid => TraceSpec::Sinusoid {
                    duration,
                    period,
                    amplitude,
                    frequency,
                    seed,
                },
                TraceKind::StraightLine => TraceSpec::StraightLine {
                    duration,
                    period,
                    length,
                    seed,
                },
                TraceKind::PickAndPlace => TraceSpec::PickAndPlace {
                    duration,
                    period,
                    reach,
                    seed,
                },
                TraceKind::Stationary => TraceSpec::Stationary { duration, period },
            };
            cmd_gen_trace(&spec, out.as_deref())
        }
        Cmd::GenScene {
            kind,
            width,
            height,
            depth,
            size,
            near,
            far,
            column,
            seed,
            noise,
            dropout,
            out,
        } => {
            let scene = match kind {
                SceneKind::Plane => SceneSpec::Plane { depth },
                SceneKind::CubeOnPlane => SceneSpec::CubeOnPlane {
                    plane_depth: depth,
                    size,
                },
                SceneKind::Step => SceneSpec::Step {
                    near,
                    far,
                    column: column.unwrap_or(width / 2),
                },
            };
            let cfg = SceneConfig {
                width,
                height,
                scene,
                seed,
                noise,
                dropout,
            };
            cmd_gen_scene(&cfg, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(config: Option<&Path>, scenario: Option<&str>) -> Result<SimConfig, Failure> {
    match (config, scenario) {
        (Some(path), _) => Ok(SimConfig::load(path)?),
        (None, Some(name)) => Ok(scenarios::by_name(name, Mode::Telexr, 0).expect("clap checked the name")),
        (None, None) => Ok(SimConfig::default()),
    }
}

fn cmd_run(
    config: Option<&Path>,
    scenario: Option<&str>,
    mode: Option<Mode>,
    seed: Option<u64>,
    out: &Path,
    side: Option<Side>,
    duration: Option<f64>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config, scenario)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if cfg.transport == Transport::Datagram {
        let Some(side) = side else {
            return Err(Failure::Other("datagram transport needs --side xr|robot".into()));
        };
        let r = cfg.resolve()?;
        let secs = duration.unwrap_or(cfg.horizon);
        if !(secs > 0.0 && secs.is_finite()) {
            return Err(Failure::Other(format!("--duration must be > 0, got {secs}")));
        }
        let run_for = Duration::from_secs_f64(secs);
        let (name, json) = match side {
            Side::Xr => {
                let rep = run_xr(&r, run_for).map_err(|e| Failure::Other(e.to_string()))?;
                ("live_xr.json", serde_json::to_string_pretty(&rep))
            }
            Side::Robot => {
                let rep = run_robot(&r, run_for).map_err(|e| Failure::Other(e.to_string()))?;
                ("live_robot.json", serde_json::to_string_pretty(&rep))
            }
        };
        let json = json.map_err(|e| Failure::Other(e.to_string()))? + "\n";
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(name), &json)?;
        print!("{json}");
        return Ok(());
    }
    if side.is_some() {
        return Err(Failure::Other("--side only applies to the datagram transport".into()));
    }
    let result = run(&cfg)?;
    write_all(&result, out)?;
    print!("{}", report_text(&result.report));
    println!("artifacts in {}", out.display());
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed {x:?}: {e}"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        vec![num(s)?]
    };
    if seeds.is_empty() {
        return Err(format!("seed range {s:?} is empty"));
    }
    Ok(seeds)
}

fn cmd_compare(config: Option<&Path>, scenario: Option<&str>, seeds: &str, out: Option<&Path>) -> Result<(), Failure> {
    let seeds = parse_seeds(seeds).map_err(Failure::Other)?;
    let base = load_config(config, scenario)?;
    let mut csv = String::from(
        "seed,telexr_error_mm,baseline_error_mm,telexr_m2m_ms,baseline_m2m_ms,telexr_completion_s,baseline_completion_s\n",
    );
    let fmt = |v: Option<f64>, scale: f64| v.map_or_else(String::new, |x| format!("{:.4}", x * scale));
    let (mut wins, mut sum_t, mut sum_b) = (0, 0.0, 0.0);
    for &seed in &seeds {
        let mut reports = Vec::with_capacity(2);
        for mode in [Mode::Telexr, Mode::Baseline] {
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.seed = seed;
            reports.push(run(&cfg)?.report);
        }
        let (t, b) = (&reports[0], &reports[1]);
        let (et, eb) = (t.teleop_error.mean_position, b.teleop_error.mean_position);
        if let (Some(x), Some(y)) = (et, eb) {
            sum_t += x;
            sum_b += y;
            if x < y {
                wins += 1;
            }
        }
        csv += &format!(
            "{seed},{},{},{},{},{},{}\n",
            fmt(et, 1e3),
            fmt(eb, 1e3),
            fmt(t.m2m.reconstructed.mean, 1e3),
            fmt(b.m2m.actual.mean, 1e3),
            fmt(t.completion.time, 1.0),
            fmt(b.completion.time, 1.0),
        );
    }
    match out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    let n = seeds.len() as f64;
    eprintln!(
        "telexr lower error in {wins}/{} seeds; mean {:.3} mm vs {:.3} mm",
        seeds.len(),
        sum_t / n * 1e3,
        sum_b / n * 1e3
    );
    Ok(())
}

fn cmd_gen_trace(spec: &TraceSpec, out: Option<&Path>) -> Result<(), Failure> {
    let trace = spec.generate().map_err(|e| Failure::Other(e.to_string()))?;
    let res = match out {
        Some(path) => trace.write_csv(File::create(path)?),
        None => trace.write_csv(io::stdout().lock()),
    };
    res.map_err(|e| Failure::Other(e.to_string()))?;
    if let Some(path) = out {
        eprintln!("{} samples to {}", trace.len(), path.display());
    }
    Ok(())
}

fn cmd_gen_scene(cfg: &SceneConfig, out: &Path) -> Result<(), Failure> {
    let scene = render(cfg).map_err(|e| Failure::Other(e.to_string()))?;
    scene.cloud.save(out).map_err(|e| Failure::Other(e.to_string()))?;
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "{} points ({}x{}) to {}",
        scene.cloud.point_count(),
        cfg.width,
        cfg.height,
        out.display()
    )?;
    Ok(())
}
