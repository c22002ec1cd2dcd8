mod commands;
mod field;
mod plot;

use clap::{Args, Parser, Subcommand, ValueEnum};
use khalasi_core::env::EnvPreset;
use khalasi_core::policy::PolicySpec;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "khalasi",
    version,
    about = "Energy-aware surface-vehicle navigation benchmark"
)]
struct Cli {
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads for `eval` (default: all cores).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn", value_name = "LEVEL")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect, sample, refine or export flow fields.
    #[command(subcommand)]
    Field(FieldCommand),
    /// Sweep GPR window sizes along dummy trajectories.
    GprBench(GprBenchArgs),
    /// Plan an energy-optimal path on the time-dependent grid graph.
    Plan(PlanArgs),
    /// Run one episode.
    Simulate(SimulateArgs),
    /// Run a batch experiment from a spec file.
    Eval(EvalArgs),
    /// Render heatmaps or trajectories to SVG.
    #[command(subcommand)]
    Plot(PlotCommand),
    /// Measure or fit the drift crossing time of a vortex-street environment.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Episode config file (TOML, or JSON by extension).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a config key after the file and flags (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum FieldCommand {
    /// Print grid or preset metadata as JSON.
    Info {
        /// Preset name, `grid:<path>` or a UVGRID file path.
        source: String,
    },
    /// Sample velocities at given points.
    Sample {
        /// Preset name, `grid:<path>` or a UVGRID file path.
        source: String,
        /// `x,y` or `x,y,t` (repeatable).
        #[arg(long = "at", value_name = "X,Y[,T]", value_parser = parse_xyt, allow_hyphen_values = true)]
        at: Vec<(f64, f64, f64)>,
        /// CSV file with columns x,y,t.
        #[arg(long, value_name = "FILE")]
        points: Option<PathBuf>,
    },
    /// Refine a UVGRID file by an integer factor in space and time.
    Refine {
        /// UVGRID file.
        input: PathBuf,
        /// Subdivisions per cell in x, y and t.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        factor: u32,
    },
    /// Sample a preset onto a regular lattice and write it as UVGRID.
    Export {
        /// Preset name.
        source: String,
        /// Lattice nodes along x, y and t.
        #[arg(long, default_value_t = 301)]
        nx: usize,
        #[arg(long, default_value_t = 101)]
        ny: usize,
        #[arg(long, default_value_t = 101)]
        nt: usize,
        /// Steps between frames.
        #[arg(long, default_value_t = 20.0)]
        dt: f64,
        /// Episode phase of the first frame.
        #[arg(long, default_value_t = 0)]
        phase: u64,
    },
}

#[derive(Args, Debug)]
struct GprBenchArgs {
    /// still, gyre2, gyre4, cyl-static, cyl-osc, cyl-double or grid:<path>.
    #[arg(long)]
    env: Option<EnvPreset>,
    /// `a..b` (inclusive, stepped by --window-step) or a comma list.
    #[arg(long, default_value = "5..75")]
    windows: String,
    /// Stride of an `a..b` range.
    #[arg(long, default_value_t = 10)]
    window_step: usize,
    /// Straight passes at evenly spaced heights.
    #[arg(long, default_value_t = 3)]
    passes: usize,
    /// Steps per pass.
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Steps between reconstructions.
    #[arg(long, default_value_t = 10)]
    eval_every: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algo {
    Astar,
    Dijkstra,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// `astar` uses the Euclidean heuristic, `dijkstra` none.
    #[arg(long, value_enum, default_value = "astar")]
    algo: Algo,
    /// still, gyre2, gyre4, cyl-static, cyl-osc, cyl-double or grid:<path>.
    #[arg(long)]
    env: Option<EnvPreset>,
    /// Snapped to the nearest grid node.
    #[arg(long, value_name = "X,Y", value_parser = parse_xy, allow_hyphen_values = true)]
    start: (f64, f64),
    #[arg(long, value_name = "X,Y", value_parser = parse_xy, allow_hyphen_values = true)]
    goal: (f64, f64),
    /// Flow phase at departure (default: config phase or 0).
    #[arg(long)]
    phase: Option<u64>,
    /// Grid spacing in environment units.
    #[arg(long, default_value_t = khalasi_core::planner::DEFAULT_RESOLUTION)]
    resolution: f64,
    /// Defaults to json when --out ends in .json, csv otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// still, gyre2, gyre4, cyl-static, cyl-osc, cyl-double or grid:<path>.
    #[arg(long)]
    env: Option<EnvPreset>,
    /// builtin:drift, builtin:greedy, builtin:astar or exec:<command>.
    #[arg(long, default_value = "builtin:greedy")]
    policy: PolicySpec,
    /// Episode seed (spawn, phase).
    #[arg(long)]
    seed: Option<u64>,
    /// vertical, l_shaped, grid10 or pair_min_dist.
    #[arg(long)]
    spawn: Option<String>,
    /// Fixed start instead of a spawn draw.
    #[arg(long, value_name = "X,Y", value_parser = parse_xy, allow_hyphen_values = true)]
    start: Option<(f64, f64)>,
    /// Fixed goal instead of a spawn draw.
    #[arg(long, value_name = "X,Y", value_parser = parse_xy, allow_hyphen_values = true)]
    goal: Option<(f64, f64)>,
    #[arg(long)]
    step_limit: Option<u64>,
    /// Fixed flow phase instead of a seed draw.
    #[arg(long)]
    phase: Option<u64>,
    /// Seconds an external policy may take per reply.
    #[arg(long, default_value_t = 10.0)]
    policy_timeout: f64,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Experiment spec (JSON, or TOML by extension).
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Override a spec key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    SuccessRate,
    MeanEnergy,
}

#[derive(Subcommand, Debug)]
enum PlotCommand {
    /// Heatmap of a `heatmap.csv` from `eval`.
    Heatmap {
        /// `heatmap.csv` written by `eval`.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "success-rate")]
        metric: Metric,
        /// Only rows for this environment.
        #[arg(long)]
        env: Option<String>,
        /// Only rows for this policy.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Trajectories from one or more trajectory CSVs.
    Trajectory {
        /// Trajectory CSVs written by `simulate` or `eval`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Draw this environment's domain, cylinders and a flow snapshot.
        #[arg(long)]
        env: Option<String>,
        /// Episode time of the flow snapshot.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Mark this goal.
        #[arg(long, value_name = "X,Y", value_parser = parse_xy, allow_hyphen_values = true)]
        goal: Option<(f64, f64)>,
    },
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// still, gyre2, gyre4, cyl-static, cyl-osc, cyl-double or grid:<path>.
    #[arg(long)]
    env: Option<EnvPreset>,
    /// Zero-thrust releases at evenly spaced start heights.
    #[arg(long, default_value_t = 10)]
    releases: usize,
    /// Rescale the free stream until the crossing hits --target.
    #[arg(long)]
    fit: bool,
    /// Target mean crossing time in steps.
    #[arg(long, default_value_t = khalasi_core::vehicle::DRIFT_TARGET_STEPS as f64)]
    target: f64,
    /// Fit rounds before giving up.
    #[arg(long, default_value_t = 8)]
    max_iter: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn parse_floats(s: &str, n: &[usize]) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if !n.contains(&v.len()) {
        return Err(format!(
            "expected {} comma-separated numbers",
            n.iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(" or ")
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    Ok(v)
}

fn parse_xy(s: &str) -> Result<(f64, f64), String> {
    let v = parse_floats(s, &[2])?;
    Ok((v[0], v[1]))
}

fn parse_xyt(s: &str) -> Result<(f64, f64, f64), String> {
    let v = parse_floats(s, &[2, 3])?;
    Ok((v[0], v[1], v.get(2).copied().unwrap_or(0.0)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let line = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {line}");
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
