//! Batch experiments over environments × spawn layouts × policies.

use crate::env::{EnvError, EnvPreset, Environment};
use crate::episode::{run_episode, EpisodeConfig, EpisodeError, EpisodeSummary, SpawnSpec};
use crate::geom::Rect;
use crate::policy::{Outcome, PolicySpec};
use crate::reward::RewardConfig;
use crate::spawn::{SpawnKind, SpawnLayout};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

/// Repeats per lattice point for `grid10` layouts.
pub const GRID10_REPEATS: usize = 5;
/// Experiments fail when more than this fraction of episodes aborted.
pub const MAX_ABORTED_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{aborted} of {total} episodes aborted (limit {limit:.0}%)", limit = MAX_ABORTED_FRACTION * 100.0)]
    TooManyAborted { aborted: usize, total: usize },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("no episode succeeded in both sets")]
    NoCommonSuccesses,
}

fn default_episodes() -> usize {
    20
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_step_limit() -> u64 {
    crate::episode::DEFAULT_STEP_LIMIT
}
fn default_true() -> bool {
    true
}
fn default_timeout() -> f64 {
    crate::policy::DEFAULT_TIMEOUT.as_secs_f64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub envs: Vec<EnvPreset>,
    pub layouts: Vec<SpawnKind>,
    pub policies: Vec<PolicySpec>,
    /// Episodes per (env, layout, policy) cell; `grid10` ignores it and runs
    /// [`GRID10_REPEATS`] per lattice point.
    #[serde(default = "default_episodes")]
    pub episodes_per_cell: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_step_limit")]
    pub step_limit: u64,
    #[serde(default)]
    pub reward: RewardConfig,
    /// Write one trajectory CSV per episode.
    #[serde(default = "default_true")]
    pub trajectories: bool,
    /// Seconds an external policy may take per reply.
    #[serde(default = "default_timeout")]
    pub policy_timeout_secs: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Invalid(m.into()));
        if self.envs.is_empty() || self.layouts.is_empty() || self.policies.is_empty() {
            return bad("envs, layouts and policies must all be non-empty");
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return Err(EvalError::Invalid(format!("policy {p} is listed twice")));
            }
        }
        if self.episodes_per_cell == 0 {
            return bad("episodes_per_cell must be at least 1");
        }
        if self.step_limit == 0 {
            return bad("step_limit must be at least 1");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if !(self.policy_timeout_secs > 0.0 && self.policy_timeout_secs.is_finite()) {
            return bad("policy_timeout_secs must be positive");
        }
        self.reward.validate().map_err(EvalError::Invalid)
    }
}

/// Stable per-episode seed. The policy is deliberately not an input, so
/// every policy in a cell faces the same spawns and flow phases.
pub fn derive_seed(
    seed_base: u64,
    env: &str,
    layout: &str,
    point: Option<usize>,
    repeat: usize,
) -> u64 {
    let point = point.map_or_else(|| "-".to_string(), |p| p.to_string());
    let key = format!("{seed_base}/{env}/{layout}/{point}/{repeat}");
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone)]
struct Task {
    env: usize,
    layout: SpawnKind,
    policy: usize,
    point: Option<usize>,
    repeat: usize,
    seed: u64,
}

/// One finished episode with the cell it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub layout: SpawnKind,
    pub policy_index: usize,
    pub point: Option<usize>,
    pub repeat: usize,
    pub summary: EpisodeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub episodes: usize,
    pub successes: usize,
    pub timeouts: usize,
    pub out_of_bounds: usize,
    pub aborted: usize,
    /// Successes over non-aborted episodes; `None` if every episode aborted.
    pub success_rate: Option<f64>,
    /// Over successful episodes only.
    pub energy_mean: Option<f64>,
    pub energy_std: Option<f64>,
}

impl AggregateStats {
    pub fn from_summaries<'a>(items: impl IntoIterator<Item = &'a EpisodeSummary>) -> Self {
        let mut s = Self {
            episodes: 0,
            successes: 0,
            timeouts: 0,
            out_of_bounds: 0,
            aborted: 0,
            success_rate: None,
            energy_mean: None,
            energy_std: None,
        };
        let mut energies = Vec::new();
        for e in items {
            s.episodes += 1;
            match e.outcome {
                Outcome::Success => {
                    s.successes += 1;
                    energies.push(e.total_energy);
                }
                Outcome::Timeout => s.timeouts += 1,
                Outcome::OutOfBounds => s.out_of_bounds += 1,
                Outcome::Aborted => s.aborted += 1,
            }
        }
        let counted = s.episodes - s.aborted;
        if counted > 0 {
            s.success_rate = Some(s.successes as f64 / counted as f64);
        }
        if let Some((m, sd)) = mean_std(&energies) {
            s.energy_mean = Some(m);
            s.energy_std = Some(sd);
        }
        s
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub env: String,
    pub layout: SpawnKind,
    pub policy: String,
    #[serde(flatten)]
    pub stats: AggregateStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub spec: ExperimentSpec,
    pub total_episodes: usize,
    pub aborted: usize,
    pub cells: Vec<CellAggregate>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: ExperimentSummary,
    pub episodes: Vec<EpisodeEntry>,
}

/// Runs every episode of `spec` and writes `summary.json`, `episodes.csv`,
/// `cells.csv`, `heatmap.csv` (grid10 only) and, if enabled, trajectories.
///
/// Artifacts are written even when too many episodes aborted; the error is
/// returned afterwards.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, EvalError> {
    spec.validate()?;
    let envs = spec
        .envs
        .iter()
        .map(Environment::from_preset)
        .collect::<Result<Vec<_>, _>>()?;
    let tasks = plan_tasks(spec);
    let out = &spec.output_dir;
    let traj_dir = out.join("trajectories");
    create_dir(out)?;
    if spec.trajectories {
        create_dir(&traj_dir)?;
    }
    let timeout = Duration::from_secs_f64(spec.policy_timeout_secs);

    let run_one = |task: &Task| -> Result<EpisodeEntry, EvalError> {
        let env = &envs[task.env];
        let mut cfg = EpisodeConfig::new(spec.envs[task.env].clone());
        cfg.spawn = SpawnSpec::Named(task.layout);
        cfg.seed = task.seed;
        cfg.step_limit = spec.step_limit;
        cfg.reward = spec.reward;
        if let Some(p) = task.point {
            let (s, g) = SpawnLayout::named(task.layout, env.bounds())
                .spawn_at(p)
                .map_err(EpisodeError::from)?;
            cfg.start = Some(s);
            cfg.goal = Some(g);
        }
        let policy_spec = &spec.policies[task.policy];
        let record = match policy_spec.instantiate(timeout) {
            Ok(mut policy) => run_episode(&cfg, env, &mut *policy)?,
            Err(e) => {
                // a policy that cannot even start counts as an aborted episode
                let placement = cfg.resolve(env)?;
                let mut r = crate::episode::run_placed(&cfg, env, placement, &mut Unstartable);
                r.summary.policy = policy_spec.to_string();
                r.summary.abort_reason = Some(e.to_string());
                r
            }
        };
        if spec.trajectories {
            let path = traj_dir.join(trajectory_name(spec, task));
            record.save_csv(&path)?;
        }
        let mut summary = record.summary;
        summary.policy = policy_spec.to_string();
        Ok(EpisodeEntry {
            layout: task.layout,
            policy_index: task.policy,
            point: task.point,
            repeat: task.repeat,
            summary,
        })
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = spec.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let episodes = pool.install(|| tasks.par_iter().map(run_one).collect::<Result<Vec<_>, _>>())?;

    let summary = summarize(spec, &episodes);
    let bounds: HashMap<String, Rect> = spec
        .envs
        .iter()
        .zip(&envs)
        .map(|(p, e)| (p.to_string(), e.bounds()))
        .collect();
    write_artifacts(spec, &summary, &episodes, &bounds)?;
    let total = episodes.len();
    if summary.aborted as f64 > MAX_ABORTED_FRACTION * total as f64 {
        return Err(EvalError::TooManyAborted {
            aborted: summary.aborted,
            total,
        });
    }
    Ok(ExperimentResult { summary, episodes })
}

struct Unstartable;

impl crate::policy::Policy for Unstartable {
    fn name(&self) -> String {
        "unstartable".into()
    }
    fn reset(
        &mut self,
        _ctx: &crate::policy::EpisodeContext,
    ) -> Result<(), crate::policy::PolicyError> {
        Err(crate::policy::PolicyError::Failed(
            "policy could not be started".into(),
        ))
    }
    fn act(
        &mut self,
        _obs: &crate::obs::Observation,
    ) -> Result<crate::vehicle::Action, crate::policy::PolicyError> {
        Err(crate::policy::PolicyError::Failed(
            "policy could not be started".into(),
        ))
    }
}

fn plan_tasks(spec: &ExperimentSpec) -> Vec<Task> {
    let mut tasks = Vec::new();
    for (ei, env) in spec.envs.iter().enumerate() {
        let env_name = env.to_string();
        for &layout in &spec.layouts {
            let cells: Vec<(Option<usize>, usize)> = if layout == SpawnKind::Grid10 {
                let n = SpawnLayout::grid10().points.len();
                (0..n)
                    .flat_map(|p| (0..GRID10_REPEATS).map(move |r| (Some(p), r)))
                    .collect()
            } else {
                (0..spec.episodes_per_cell).map(|r| (None, r)).collect()
            };
            for pi in 0..spec.policies.len() {
                for &(point, repeat) in &cells {
                    tasks.push(Task {
                        env: ei,
                        layout,
                        policy: pi,
                        point,
                        repeat,
                        seed: derive_seed(spec.seed_base, &env_name, layout.name(), point, repeat),
                    });
                }
            }
        }
    }
    tasks
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn trajectory_name(spec: &ExperimentSpec, t: &Task) -> String {
    let env = match &spec.envs[t.env] {
        EnvPreset::Grid(_) => format!("grid{}", t.env),
        other => other.to_string(),
    };
    let point = t
        .point
        .map_or_else(|| "na".to_string(), |p| format!("{p:03}"));
    format!(
        "{}__{}__p{}__{}__r{:03}.csv",
        slug(&env),
        t.layout.name(),
        t.policy,
        point,
        t.repeat
    )
}

fn summarize(spec: &ExperimentSpec, episodes: &[EpisodeEntry]) -> ExperimentSummary {
    let mut cells = Vec::new();
    for env in &spec.envs {
        let env_name = env.to_string();
        for &layout in &spec.layouts {
            for (pi, policy) in spec.policies.iter().enumerate() {
                let stats = AggregateStats::from_summaries(
                    episodes
                        .iter()
                        .filter(|e| {
                            e.summary.env == env_name && e.layout == layout && e.policy_index == pi
                        })
                        .map(|e| &e.summary),
                );
                cells.push(CellAggregate {
                    env: env_name.clone(),
                    layout,
                    policy: policy.to_string(),
                    stats,
                });
            }
        }
    }
    ExperimentSummary {
        spec: spec.clone(),
        total_episodes: episodes.len(),
        aborted: episodes
            .iter()
            .filter(|e| e.summary.outcome == Outcome::Aborted)
            .count(),
        cells,
    }
}

fn create_dir(p: &Path) -> Result<(), EvalError> {
    fs::create_dir_all(p).map_err(|source| EvalError::Io {
        path: p.to_path_buf(),
        source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_artifacts(
    spec: &ExperimentSpec,
    summary: &ExperimentSummary,
    episodes: &[EpisodeEntry],
    bounds: &HashMap<String, Rect>,
) -> Result<(), EvalError> {
    let out = &spec.output_dir;
    let io = |path: PathBuf| move |source| EvalError::Io { path, source };

    let path = out.join("summary.json");
    let mut json = serde_json::to_string_pretty(summary).expect("summary serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io(path.clone()))?;

    let mut w = csv::Writer::from_path(out.join("episodes.csv"))?;
    w.write_record([
        "env",
        "layout",
        "policy",
        "point",
        "repeat",
        "seed",
        "phase",
        "start_x",
        "start_y",
        "goal_x",
        "goal_y",
        "outcome",
        "steps",
        "total_energy",
        "total_energy_sq",
        "total_reward",
        "final_distance",
        "abort_reason",
    ])?;
    for e in episodes {
        let s = &e.summary;
        w.write_record([
            s.env.clone(),
            e.layout.name().to_string(),
            s.policy.clone(),
            e.point.map(|p| p.to_string()).unwrap_or_default(),
            e.repeat.to_string(),
            s.seed.to_string(),
            s.phase.to_string(),
            s.start.x.to_string(),
            s.start.y.to_string(),
            s.goal.x.to_string(),
            s.goal.y.to_string(),
            s.outcome.name().to_string(),
            s.steps.to_string(),
            s.total_energy.to_string(),
            s.total_energy_sq.to_string(),
            s.total_reward.to_string(),
            s.final_distance.to_string(),
            s.abort_reason.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(io(out.join("episodes.csv")))?;

    // per-cell rows: one per (env, layout, policy), and one per lattice point
    // for grid10 layouts
    let mut w = csv::Writer::from_path(out.join("cells.csv"))?;
    w.write_record([
        "env",
        "layout",
        "policy",
        "point",
        "x",
        "y",
        "episodes",
        "successes",
        "timeouts",
        "out_of_bounds",
        "aborted",
        "success_rate",
        "energy_mean",
        "energy_std",
    ])?;
    let mut heat = Vec::new();
    for cell in &summary.cells {
        let pi = spec
            .policies
            .iter()
            .position(|p| p.to_string() == cell.policy)
            .expect("cell policy comes from the experiment");
        let in_cell = |e: &&EpisodeEntry| {
            e.summary.env == cell.env && e.layout == cell.layout && e.policy_index == pi
        };
        let mut rows: Vec<(Option<usize>, Option<(f64, f64)>, AggregateStats)> =
            vec![(None, None, cell.stats.clone())];
        if cell.layout == SpawnKind::Grid10 {
            let lattice = SpawnLayout::named(SpawnKind::Grid10, bounds[&cell.env]);
            for (p, pos) in lattice.points.iter().enumerate() {
                let stats = AggregateStats::from_summaries(
                    episodes
                        .iter()
                        .filter(in_cell)
                        .filter(|e| e.point == Some(p))
                        .map(|e| &e.summary),
                );
                heat.push((cell.env.clone(), cell.policy.clone(), *pos, stats.clone()));
                rows.push((Some(p), Some((pos.x, pos.y)), stats));
            }
        }
        for (point, pos, s) in rows {
            w.write_record([
                cell.env.clone(),
                cell.layout.name().to_string(),
                cell.policy.clone(),
                point.map(|p| p.to_string()).unwrap_or_default(),
                pos.map(|p| p.0.to_string()).unwrap_or_default(),
                pos.map(|p| p.1.to_string()).unwrap_or_default(),
                s.episodes.to_string(),
                s.successes.to_string(),
                s.timeouts.to_string(),
                s.out_of_bounds.to_string(),
                s.aborted.to_string(),
                opt(s.success_rate),
                opt(s.energy_mean),
                opt(s.energy_std),
            ])?;
        }
    }
    w.flush().map_err(io(out.join("cells.csv")))?;

    if !heat.is_empty() {
        let mut w = csv::Writer::from_path(out.join("heatmap.csv"))?;
        w.write_record(["x", "y", "success_rate", "mean_energy", "env", "policy"])?;
        for (env, policy, pos, s) in heat {
            w.write_record([
                pos.x.to_string(),
                pos.y.to_string(),
                opt(s.success_rate),
                opt(s.energy_mean),
                env,
                policy,
            ])?;
        }
        w.flush().map_err(io(out.join("heatmap.csv")))?;
    }
    Ok(())
}

/// Paired energy comparison of `a` against baseline `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyComparison {
    pub pairs: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Mean of `b − a` over the pairs.
    pub mean_delta: f64,
    /// `(mean_b − mean_a) / mean_b`.
    pub efficiency: f64,
}

/// Relative saving of `a` over `b`.
pub fn mean_efficiency(mean_a: f64, mean_b: f64) -> f64 {
    (mean_b - mean_a) / mean_b
}

/// Pairs episodes by `(env, seed)` and compares energy where both succeeded.
pub fn compare_energy(
    a: &[EpisodeSummary],
    b: &[EpisodeSummary],
) -> Result<EnergyComparison, CompareError> {
    let mut ea = Vec::new();
    let mut eb = Vec::new();
    for x in a.iter().filter(|x| x.outcome == Outcome::Success) {
        let partner = b
            .iter()
            .find(|y| y.seed == x.seed && y.env == x.env && y.outcome == Outcome::Success);
        if let Some(y) = partner {
            ea.push(x.total_energy);
            eb.push(y.total_energy);
        }
    }
    if ea.is_empty() {
        return Err(CompareError::NoCommonSuccesses);
    }
    let n = ea.len() as f64;
    let mean_a = ea.iter().sum::<f64>() / n;
    let mean_b = eb.iter().sum::<f64>() / n;
    let mean_delta = ea.iter().zip(&eb).map(|(x, y)| y - x).sum::<f64>() / n;
    Ok(EnergyComparison {
        pairs: ea.len(),
        mean_a,
        mean_b,
        mean_delta,
        efficiency: mean_efficiency(mean_a, mean_b),
    })
}
