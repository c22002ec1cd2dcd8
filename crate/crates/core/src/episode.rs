//! One navigation attempt from spawn to success, timeout or failure.

use crate::env::EnvPreset;
use crate::env::{Environment, FlowSpec};
use crate::flow::FlowError;
use crate::geom::Vec2;
use crate::gpr::{FlowSampleWindow, GpPosterior, GprHyperparams, GridSpec, DEFAULT_WINDOW};
use crate::obs::{build_observation, observation_from_grid};
use crate::policy::{EpisodeContext, Outcome, Policy};
use crate::reward::{reward_step, RewardBreakdown, RewardConfig};
use crate::spawn::{SpawnError, SpawnKind, SpawnLayout};
use crate::vehicle::{step_with_flow, Action, VehicleParams, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_STEP_LIMIT: u64 = 1500;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Spawn(#[from] SpawnError),
    #[error("invalid episode config: {0}")]
    Invalid(String),
    #[error("writing episode output: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing episode output: {0}")]
    Io(#[from] std::io::Error),
    #[error("replaying step {step}: {source}")]
    Replay { step: u64, source: FlowError },
}

/// A layout by name (`"vertical"`) or spelled out in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpawnSpec {
    Named(SpawnKind),
    Custom(SpawnLayout),
}

impl SpawnSpec {
    pub fn layout(&self, env: &Environment) -> SpawnLayout {
        match self {
            SpawnSpec::Named(k) => SpawnLayout::named(*k, env.bounds()),
            SpawnSpec::Custom(l) => l.clone(),
        }
    }

    pub fn kind(&self) -> SpawnKind {
        match self {
            SpawnSpec::Named(k) => *k,
            SpawnSpec::Custom(l) => l.kind,
        }
    }
}

fn default_step_limit() -> u64 {
    DEFAULT_STEP_LIMIT
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_spawn() -> SpawnSpec {
    SpawnSpec::Named(SpawnKind::Vertical)
}

/// Everything that determines an episode apart from the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub env: EnvPreset,
    /// Replaces the preset's flow parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSpec>,
    #[serde(default = "default_spawn")]
    pub spawn: SpawnSpec,
    #[serde(default = "default_step_limit")]
    pub step_limit: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reward: RewardConfig,
    /// Defaults to the environment's calibrated vehicle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<VehicleParams>,
    /// Defaults to the environment's speed-scaled prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpr: Option<GprHyperparams>,
    /// GPR sliding-window length.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub grid: GridSpec,
    /// Fixed start; drawn from the spawn layout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Vec2>,
    /// Fixed flow phase; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u64>,
    /// Initial heading in radians.
    #[serde(default)]
    pub heading: f64,
}

impl EpisodeConfig {
    pub fn new(env: EnvPreset) -> Self {
        Self {
            env,
            flow: None,
            spawn: default_spawn(),
            step_limit: DEFAULT_STEP_LIMIT,
            seed: 0,
            reward: RewardConfig::default(),
            vehicle: None,
            gpr: None,
            window: DEFAULT_WINDOW,
            grid: GridSpec::default(),
            start: None,
            goal: None,
            phase: None,
            heading: 0.0,
        }
    }

    pub fn environment(&self) -> Result<Environment, crate::env::EnvError> {
        Environment::with_flow(&self.env, self.flow.clone())
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        let bad = |m: String| Err(EpisodeError::Invalid(m));
        if self.step_limit == 0 {
            return bad("step_limit must be at least 1".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.grid.side < 3 || !(self.grid.spacing > 0.0 && self.grid.spacing.is_finite()) {
            return bad("grid needs side >= 3 and positive spacing".into());
        }
        if !self.heading.is_finite() {
            return bad("heading must be finite".into());
        }
        self.reward.validate().map_err(EpisodeError::Invalid)?;
        if let Some(v) = &self.vehicle {
            v.validate().map_err(EpisodeError::Invalid)?;
        }
        if let Some(h) = &self.gpr {
            h.validate()
                .map_err(|e| EpisodeError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Start, goal and phase for this seed.
    pub fn resolve(&self, env: &Environment) -> Result<Placement, EpisodeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let layout = self.spawn.layout(env);
        layout.validate(env.bounds())?;
        let (start, goal) = match (self.start, self.goal) {
            (Some(s), Some(g)) => (s, g),
            (s, g) => {
                let (ds, dg) = layout.spawn(&mut rng)?;
                (s.unwrap_or(ds), g.unwrap_or(dg))
            }
        };
        for (what, p) in [("start", start), ("goal", goal)] {
            if !env.bounds().contains(p) {
                return Err(EpisodeError::Invalid(format!(
                    "{what} {p} is outside the environment"
                )));
            }
        }
        let phase = match self.phase {
            Some(p) => p,
            None => rng.gen_range(0..env.phase_span(self.step_limit)),
        };
        Ok(Placement { start, goal, phase })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub start: Vec2,
    pub goal: Vec2,
    pub phase: u64,
}

/// One trajectory row. Row 0 is the spawn state; row `k` is the state after
/// `k` steps and the command that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: u64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub yaw_rate: f64,
    pub a_l: f64,
    pub a_r: f64,
    pub energy_cum: f64,
    pub energy_sq_cum: f64,
    /// Current at the position the step started from.
    pub flow_x: f64,
    pub flow_y: f64,
    pub dist: f64,
    pub r_target: f64,
    pub r_dist: f64,
    pub r_thrust: f64,
    pub r_surf: f64,
    pub r_jitter: f64,
    pub reward: f64,
}

impl StepRow {
    fn new(
        t: u64,
        s: &VehicleState,
        a: Action,
        flow: Vec2,
        goal: Vec2,
        r: RewardBreakdown,
    ) -> Self {
        Self {
            t,
            x: s.pos.x,
            y: s.pos.y,
            theta: s.heading,
            u_x: s.vel.x,
            u_y: s.vel.y,
            yaw_rate: s.yaw_rate,
            a_l: a.left,
            a_r: a.right,
            energy_cum: s.energy_used,
            energy_sq_cum: s.energy_sq,
            flow_x: flow.x,
            flow_y: flow.y,
            dist: s.pos.distance(goal),
            r_target: r.r_target,
            r_dist: r.r_dist,
            r_thrust: r.r_thrust,
            r_surf: r.r_surf,
            r_jitter: r.r_jitter,
            reward: r.total,
        }
    }

    pub fn state(&self) -> VehicleState {
        VehicleState {
            pos: Vec2::new(self.x, self.y),
            vel: Vec2::new(self.u_x, self.u_y),
            heading: self.theta,
            yaw_rate: self.yaw_rate,
            energy_used: self.energy_cum,
            energy_sq: self.energy_sq_cum,
        }
    }

    pub fn action(&self) -> Action {
        Action::new(self.a_l, self.a_r)
    }
}

/// Everything about an episode except its trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub env: String,
    pub policy: String,
    pub spawn: SpawnKind,
    pub phase: u64,
    pub start: Vec2,
    pub goal: Vec2,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub steps: u64,
    /// Σ (|a_l| + |a_r|).
    pub total_energy: f64,
    /// Σ (a_l² + a_r²).
    pub total_energy_sq: f64,
    pub total_reward: f64,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub summary: EpisodeSummary,
    pub vehicle: VehicleParams,
    pub heading: f64,
    pub rows: Vec<StepRow>,
}

impl EpisodeRecord {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EpisodeError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), EpisodeError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn save_summary(&self, path: impl AsRef<Path>) -> Result<(), EpisodeError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, &self.summary).map_err(std::io::Error::from)?;
        Ok(())
    }

    /// States reached by re-applying the logged commands from the spawn state.
    pub fn replay(&self, env: &Environment) -> Result<Vec<VehicleState>, EpisodeError> {
        let field = env.field(self.summary.phase);
        let Some(first) = self.rows.first() else {
            return Ok(Vec::new());
        };
        let mut s = first.state();
        let mut out = vec![s];
        for row in &self.rows[1..] {
            let t = row.t - 1;
            let v = field
                .velocity(s.pos, t as f64)
                .map_err(|source| EpisodeError::Replay { step: t, source })?;
            s = step_with_flow(&s, row.action(), v, &self.vehicle);
            out.push(s);
        }
        Ok(out)
    }

    /// Largest coordinate difference between the log and a replay.
    pub fn replay_deviation(&self, env: &Environment) -> Result<f64, EpisodeError> {
        let replayed = self.replay(env)?;
        Ok(self
            .rows
            .iter()
            .zip(&replayed)
            .map(|(r, s)| (r.x - s.pos.x).abs().max((r.y - s.pos.y).abs()))
            .fold(0.0, f64::max))
    }
}

/// Runs one episode to completion. Configuration problems are errors; a
/// failing policy or flow yields an [`Outcome::Aborted`] record.
pub fn run_episode(
    cfg: &EpisodeConfig,
    env: &Environment,
    policy: &mut dyn Policy,
) -> Result<EpisodeRecord, EpisodeError> {
    cfg.validate()?;
    let placement = cfg.resolve(env)?;
    Ok(run_placed(cfg, env, placement, policy))
}

/// [`run_episode`] with start, goal and phase already decided.
pub fn run_placed(
    cfg: &EpisodeConfig,
    env: &Environment,
    placement: Placement,
    policy: &mut dyn Policy,
) -> EpisodeRecord {
    let Placement { start, goal, phase } = placement;
    let field = env.field(phase);
    let bounds = env.bounds();
    let params = cfg.vehicle.unwrap_or_else(|| env.vehicle_params());
    let hp = cfg.gpr.unwrap_or_else(|| env.gpr_hyperparams());
    let eps = cfg.reward.target_radius;

    let mut state = VehicleState::at_rest(start, cfg.heading);
    let mut rows = vec![StepRow::new(
        0,
        &state,
        Action::ZERO,
        Vec2::ZERO,
        goal,
        RewardBreakdown::default(),
    )];
    let mut total_reward = 0.0;
    let mut abort_reason = None;

    let ctx = EpisodeContext {
        seed: cfg.seed,
        env: env.preset().to_string(),
        start,
        goal,
        heading: state.heading,
        step_limit: cfg.step_limit,
        target_radius: eps,
        bounds,
        grid: cfg.grid,
        vehicle: params,
        flow: Some(field.clone()),
    };

    let outcome = 'run: {
        if let Err(e) = policy.reset(&ctx) {
            abort_reason = Some(format!("policy reset: {e}"));
            break 'run Outcome::Aborted;
        }
        if start.distance(goal) < eps {
            break 'run Outcome::Success;
        }
        let mut window = match FlowSampleWindow::new(cfg.window) {
            Ok(w) => w,
            Err(e) => {
                abort_reason = Some(e.to_string());
                break 'run Outcome::Aborted;
            }
        };
        let mut prev_action = Action::ZERO;
        for step in 0..cfg.step_limit {
            let t = step as f64;
            let flow = match field.velocity(state.pos, t) {
                Ok(v) => v,
                Err(e) => {
                    abort_reason = Some(format!("flow at step {step}: {e}"));
                    break 'run Outcome::Aborted;
                }
            };
            if let Err(e) = window.push(state.pos, t, flow) {
                abort_reason = Some(format!("sample window: {e}"));
                break 'run Outcome::Aborted;
            }
            let obs = GpPosterior::fit(&window, &hp)
                .map_err(|e| e.to_string())
                .and_then(|post| {
                    if policy.wants_maps() {
                        observation_from_grid(
                            post.grid(state.pos, t, &cfg.grid),
                            &state,
                            goal,
                            flow,
                            step,
                        )
                    } else {
                        let g = post.center_gradients(state.pos, t, &cfg.grid);
                        build_observation(None, &state, goal, flow, g, step)
                    }
                    .map_err(|e| e.to_string())
                });
            let obs = match obs {
                Ok(o) => o,
                Err(e) => {
                    abort_reason = Some(format!("observation at step {step}: {e}"));
                    break 'run Outcome::Aborted;
                }
            };
            let action = match policy.act(&obs) {
                Ok(a) => a.clamped(),
                Err(e) => {
                    abort_reason = Some(format!("policy at step {step}: {e}"));
                    break 'run Outcome::Aborted;
                }
            };
            let next = step_with_flow(&state, action, flow, &params);
            let r = reward_step(
                &cfg.reward,
                state.pos,
                next.pos,
                goal,
                action,
                prev_action,
                (next.vel + flow).norm(),
                flow.norm(),
            );
            total_reward += r.total;
            state = next;
            prev_action = action;
            rows.push(StepRow::new(step + 1, &state, action, flow, goal, r));
            if !bounds.contains(state.pos) {
                break 'run Outcome::OutOfBounds;
            }
            if state.pos.distance(goal) < eps {
                break 'run Outcome::Success;
            }
        }
        Outcome::Timeout
    };

    let steps = rows.len() as u64 - 1;
    if outcome != Outcome::Aborted {
        if let Err(e) = policy.end(outcome, steps, state.energy_used) {
            log::debug!("policy end notification failed: {e}");
        }
    }
    EpisodeRecord {
        summary: EpisodeSummary {
            seed: cfg.seed,
            env: env.preset().to_string(),
            policy: policy.name(),
            spawn: cfg.spawn.kind(),
            phase,
            start,
            goal,
            outcome,
            abort_reason,
            steps,
            total_energy: state.energy_used,
            total_energy_sq: state.energy_sq,
            total_reward,
            final_distance: state.pos.distance(goal),
        },
        vehicle: params,
        heading: cfg.heading,
        rows,
    }
}
