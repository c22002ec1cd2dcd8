use crate::{
    Algo, CalibrateArgs, Cli, Command, ConfigArgs, EvalArgs, Format, GprBenchArgs, PlanArgs,
    SimulateArgs,
};
use anyhow::{bail, Context, Result};
use khalasi_core::config;
use khalasi_core::env::{fit_free_stream, measure_max_speed, EnvPreset, Environment, FlowSpec};
use khalasi_core::episode::{run_episode, EpisodeConfig};
use khalasi_core::eval::{compare_energy, run_experiment, EvalError, ExperimentSpec};
use khalasi_core::gpr::SweepProtocol;
use khalasi_core::planner::{astar_dynamic, dijkstra_oracle, edge_energy, PlanGrid};
use khalasi_core::policy::Outcome;
use khalasi_core::vehicle::mean_drift_crossing;
use khalasi_core::Vec2;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Field(c) => crate::field::run(c, cli.out.as_deref()),
        Command::GprBench(a) => gpr_bench(a, cli.out.as_deref()),
        Command::Plan(a) => plan(a, cli.out.as_deref()),
        Command::Simulate(a) => simulate(a, cli.out.as_deref()),
        Command::Eval(a) => eval(a, cli.out.as_deref(), cli.workers),
        Command::Plot(c) => crate::plot::run(c, cli.out.as_deref()),
        Command::Calibrate(a) => calibrate(a, cli.out.as_deref()),
    }
}

/// A config value as a quoted string override.
fn quoted(key: &str, value: &str) -> String {
    format!("{key}={}", serde_json::Value::from(value))
}

/// File, then flag-derived overrides, then `--set`.
fn episode_config(cfg: &ConfigArgs, mut flags: Vec<String>) -> Result<EpisodeConfig> {
    flags.extend(cfg.set.iter().cloned());
    let c: EpisodeConfig = config::load(cfg.config.as_deref(), &flags).map_err(|e| {
        if e.to_string().contains("missing field `env`") {
            anyhow::anyhow!("no environment given (use --env or set `env` in the config)")
        } else {
            e.into()
        }
    })?;
    c.validate()?;
    Ok(c)
}

fn env_flag(env: &Option<EnvPreset>) -> Vec<String> {
    env.iter().map(|e| quoted("env", &e.to_string())).collect()
}

fn environment(cfg: &EpisodeConfig) -> Result<Environment> {
    Ok(Environment::with_flow(&cfg.env, cfg.flow.clone())?)
}

/// Writes to `out` or stdout.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn parse_windows(spec: &str, step: usize) -> Result<Vec<usize>> {
    let windows: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a
            .trim()
            .parse()
            .with_context(|| format!("bad window range `{spec}`"))?;
        let b: usize = b
            .trim()
            .parse()
            .with_context(|| format!("bad window range `{spec}`"))?;
        if step == 0 || a > b {
            bail!("window range `{spec}` is empty");
        }
        (a..=b).step_by(step).collect()
    } else {
        spec.split(',')
            .map(|w| {
                w.trim()
                    .parse()
                    .with_context(|| format!("bad window size `{w}`"))
            })
            .collect::<Result<_>>()?
    };
    if windows.is_empty() || windows.contains(&0) {
        bail!("window sizes must be at least 1");
    }
    Ok(windows)
}

fn gpr_bench(a: &GprBenchArgs, out: Option<&Path>) -> Result<()> {
    let cfg = episode_config(&a.cfg, env_flag(&a.env))?;
    let env = environment(&cfg)?;
    let windows = parse_windows(&a.windows, a.window_step)?;
    let hp = cfg.gpr.unwrap_or_else(|| env.gpr_hyperparams());
    let proto = SweepProtocol {
        passes: a.passes,
        steps: a.steps,
        eval_every: a.eval_every,
        ..SweepProtocol::default()
    };
    let field = env.field(cfg.phase.unwrap_or(0));
    let rows = proto.sweep(&*field, &hp, &cfg.grid, &windows)?;
    let text = csv_string(
        &["window_size", "mae_mean", "mae_std"],
        rows.iter().map(|r| {
            vec![
                r.window_size.to_string(),
                r.mae_mean.to_string(),
                r.mae_std.to_string(),
            ]
        }),
    )?;
    emit(out, &text)
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    algo: &'a str,
    env: String,
    resolution: f64,
    phase: u64,
    total_energy: f64,
    steps: usize,
    expanded: usize,
    waypoints: Vec<Waypoint>,
}

#[derive(Serialize)]
struct Waypoint {
    step: usize,
    i: usize,
    j: usize,
    x: f64,
    y: f64,
    t: f64,
    energy_cum: f64,
}

fn plan(a: &PlanArgs, out: Option<&Path>) -> Result<()> {
    let cfg = episode_config(&a.cfg, env_flag(&a.env))?;
    let env = environment(&cfg)?;
    let vehicle = cfg.vehicle.unwrap_or_else(|| env.vehicle_params());
    let phase = a.phase.or(cfg.phase).unwrap_or(0);
    let field = env.field(phase);
    let grid = PlanGrid::new(env.bounds(), a.resolution, &vehicle, 0.0)?;
    let start = Vec2::new(a.start.0, a.start.1);
    let goal = Vec2::new(a.goal.0, a.goal.1);
    let s = grid
        .node_at(start)
        .with_context(|| format!("start {start} is outside the planning grid"))?;
    let g = grid
        .node_at(goal)
        .with_context(|| format!("goal {goal} is outside the planning grid"))?;
    let (name, res) = match a.algo {
        Algo::Astar => ("astar", astar_dynamic(&grid, s, g, &*field, &vehicle)?),
        Algo::Dijkstra => ("dijkstra", dijkstra_oracle(&grid, s, g, &*field, &vehicle)?),
    };
    let mut energy = 0.0;
    let mut waypoints = Vec::with_capacity(res.waypoints.len());
    for (k, n) in res.waypoints.iter().enumerate() {
        if k > 0 {
            let prev = grid.position(res.waypoints[k - 1]);
            energy += edge_energy(
                prev,
                grid.position(*n),
                grid.time_at(k - 1),
                &*field,
                &vehicle,
            );
        }
        let p = grid.position(*n);
        waypoints.push(Waypoint {
            step: k,
            i: n.i,
            j: n.j,
            x: p.x,
            y: p.y,
            t: grid.time_at(k),
            energy_cum: energy,
        });
    }
    log::info!(
        "{name}: {} steps, energy {:.4}, {} nodes expanded",
        res.steps,
        res.total_energy,
        res.expanded
    );
    let format = a.format.unwrap_or_else(|| {
        if out.is_some_and(|p| p.extension().is_some_and(|e| e == "json")) {
            Format::Json
        } else {
            Format::Csv
        }
    });
    let text = if format == Format::Json {
        json_line(&PlanOutput {
            algo: name,
            env: cfg.env.to_string(),
            resolution: a.resolution,
            phase,
            total_energy: res.total_energy,
            steps: res.steps,
            expanded: res.expanded,
            waypoints,
        })?
    } else {
        csv_string(
            &["step", "i", "j", "x", "y", "t", "energy_cum"],
            waypoints.iter().map(|w| {
                vec![
                    w.step.to_string(),
                    w.i.to_string(),
                    w.j.to_string(),
                    w.x.to_string(),
                    w.y.to_string(),
                    w.t.to_string(),
                    w.energy_cum.to_string(),
                ]
            }),
        )?
    };
    emit(out, &text)
}

fn simulate(a: &SimulateArgs, out: Option<&Path>) -> Result<()> {
    let mut flags = env_flag(&a.env);
    if let Some(s) = a.seed {
        flags.push(format!("seed={s}"));
    }
    if let Some(s) = &a.spawn {
        flags.push(quoted("spawn", s));
    }
    for (key, p) in [("start", a.start), ("goal", a.goal)] {
        if let Some((x, y)) = p {
            flags.push(format!("{key}.x={x:?}"));
            flags.push(format!("{key}.y={y:?}"));
        }
    }
    if let Some(n) = a.step_limit {
        flags.push(format!("step_limit={n}"));
    }
    if let Some(p) = a.phase {
        flags.push(format!("phase={p}"));
    }
    let cfg = episode_config(&a.cfg, flags)?;
    let env = environment(&cfg)?;
    if !(a.policy_timeout > 0.0 && a.policy_timeout.is_finite()) {
        bail!("--policy-timeout must be positive");
    }
    let mut policy = a
        .policy
        .instantiate(Duration::from_secs_f64(a.policy_timeout))?;
    let record = run_episode(&cfg, &env, &mut *policy)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    record.save_csv(dir.join("trajectory.csv"))?;
    record.save_summary(dir.join("summary.json"))?;
    std::fs::write(dir.join("config.json"), json_line(&cfg)?)
        .with_context(|| format!("writing {}", dir.join("config.json").display()))?;
    let s = &record.summary;
    log::info!(
        "{}: {} after {} steps, energy {:.3}",
        s.policy,
        s.outcome.name(),
        s.steps,
        s.total_energy
    );
    emit(None, &format!("{}\n", serde_json::to_string(s)?))?;
    if s.outcome == Outcome::Aborted {
        bail!(
            "episode aborted: {} (artifacts in {})",
            s.abort_reason.as_deref().unwrap_or("unknown reason"),
            dir.display()
        );
    }
    Ok(())
}

fn eval(a: &EvalArgs, out: Option<&Path>, workers: Option<u32>) -> Result<()> {
    let mut spec: ExperimentSpec = config::load(Some(&a.spec), &a.set)?;
    if let Some(o) = out {
        spec.output_dir = o.to_path_buf();
    }
    if let Some(w) = workers {
        spec.workers = Some(w as usize);
    }
    let result = match run_experiment(&spec) {
        Ok(r) => r,
        Err(e @ EvalError::TooManyAborted { .. }) => {
            return Err(anyhow::Error::new(e).context(format!(
                "artifacts written to {}",
                spec.output_dir.display()
            )))
        }
        Err(e) => return Err(e.into()),
    };
    let mut lines = String::new();
    for c in &result.summary.cells {
        let s = &c.stats;
        let rate = s
            .success_rate
            .map_or("n/a".to_string(), |r| format!("{:.3}", r));
        let energy = match (s.energy_mean, s.energy_std) {
            (Some(m), Some(sd)) => format!("{m:.2} ± {sd:.2}"),
            _ => "n/a".into(),
        };
        lines.push_str(&format!(
            "{} {} {}: success {}/{} ({rate}), aborted {}, energy {energy}\n",
            c.env,
            c.layout.name(),
            c.policy,
            s.successes,
            s.episodes - s.aborted,
            s.aborted,
        ));
    }
    // paired energy of every policy against the first one
    if spec.policies.len() > 1 {
        for env in &spec.envs {
            let env = env.to_string();
            for layout in &spec.layouts {
                let pick = |pi: usize| -> Vec<_> {
                    result
                        .episodes
                        .iter()
                        .filter(|e| {
                            e.policy_index == pi && e.layout == *layout && e.summary.env == env
                        })
                        .map(|e| e.summary.clone())
                        .collect()
                };
                let base = pick(0);
                for pi in 1..spec.policies.len() {
                    let line = match compare_energy(&pick(pi), &base) {
                        Ok(c) => format!(
                            "{:.1}% less energy than {} over {} paired successes ({:.2} vs {:.2})",
                            100.0 * c.efficiency,
                            spec.policies[0],
                            c.pairs,
                            c.mean_a,
                            c.mean_b
                        ),
                        Err(e) => e.to_string(),
                    };
                    lines.push_str(&format!(
                        "{env} {} {}: {line}\n",
                        layout.name(),
                        spec.policies[pi]
                    ));
                }
            }
        }
    }
    emit(None, &lines)
}

#[derive(Serialize)]
struct CalibrationReport {
    env: String,
    free_stream: Option<f64>,
    releases: usize,
    mean_crossing_steps: f64,
    target: f64,
    tolerance: f64,
    within_tolerance: bool,
    iterations: Option<usize>,
    max_flow_speed: f64,
    vehicle_terminal_speed: f64,
}

fn calibrate(a: &CalibrateArgs, out: Option<&Path>) -> Result<()> {
    let env_name = a
        .env
        .clone()
        .or_else(|| a.cfg.config.is_none().then_some(EnvPreset::CylStatic));
    let cfg = episode_config(&a.cfg, env_flag(&env_name))?;
    let env = environment(&cfg)?;
    let vehicle = cfg.vehicle.unwrap_or_else(|| env.vehicle_params());
    if a.releases == 0 {
        bail!("--releases must be at least 1");
    }
    let street = match env.flow_spec() {
        Some(FlowSpec::VortexStreet(p)) => Some(p),
        _ => None,
    };
    let (free_stream, mean, iterations) = if a.fit {
        let base = street.context("--fit needs a vortex-street environment")?;
        let fit = fit_free_stream(&base, &vehicle, a.target, a.releases, a.max_iter)?;
        (Some(fit.free_stream), fit.mean_steps, Some(fit.iterations))
    } else {
        let mean = mean_drift_crossing(&vehicle, &*env.field(0), a.releases)?;
        (street.map(|p| p.free_stream.x), mean, None)
    };
    let tolerance = 0.1 * a.target;
    let report = CalibrationReport {
        env: cfg.env.to_string(),
        free_stream,
        releases: a.releases,
        mean_crossing_steps: mean,
        target: a.target,
        tolerance,
        within_tolerance: (mean - a.target).abs() <= tolerance,
        iterations,
        max_flow_speed: measure_max_speed(&env)?,
        vehicle_terminal_speed: vehicle.terminal_speed(),
    };
    emit(out, &json_line(&report)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_specs() {
        assert_eq!(
            parse_windows("5..75", 10).unwrap(),
            vec![5, 15, 25, 35, 45, 55, 65, 75]
        );
        assert_eq!(parse_windows("10, 55", 10).unwrap(), vec![10, 55]);
        assert!(parse_windows("9..5", 1).is_err());
        assert!(parse_windows("0,5", 1).is_err());
        assert!(parse_windows("a..5", 1).is_err());
    }

    #[test]
    fn quoting_survives_paths() {
        assert_eq!(
            quoted("env", "grid:/tmp/a b.uvg"),
            "env=\"grid:/tmp/a b.uvg\""
        );
    }
}
