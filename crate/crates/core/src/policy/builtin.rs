use super::{EpisodeContext, Policy, PolicyError};
use crate::geom::{wrap_angle, Vec2};
use crate::obs::Observation;
use crate::planner::{astar_dynamic, PlanGrid, DEFAULT_RESOLUTION};
use crate::vehicle::{Action, VehicleParams};

/// Never thrusts.
#[derive(Debug, Clone, Copy, Default)]
pub struct DriftPolicy;

impl Policy for DriftPolicy {
    fn name(&self) -> String {
        "builtin:drift".into()
    }
    fn reset(&mut self, _ctx: &EpisodeContext) -> Result<(), PolicyError> {
        Ok(())
    }
    fn act(&mut self, _obs: &Observation) -> Result<Action, PolicyError> {
        Ok(Action::ZERO)
    }
}

/// Flow-blind proportional controller pointed straight at the goal.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy {
    pub k_v: f64,
    pub k_theta: f64,
    /// Distance below which the common thrust ramps down linearly.
    pub d_slow: f64,
}

impl Default for GreedyPolicy {
    fn default() -> Self {
        Self {
            k_v: 1.0,
            k_theta: 2.0,
            d_slow: 10.0,
        }
    }
}

impl GreedyPolicy {
    pub fn command(&self, delta: Vec2, heading: f64) -> Action {
        let dist = delta.norm();
        if dist == 0.0 {
            return Action::ZERO;
        }
        let common = self.k_v * (dist / self.d_slow).clamp(0.0, 1.0);
        let diff = self.k_theta * wrap_angle(delta.angle() - heading);
        Action::new(common - diff, common + diff).clamped()
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> String {
        "builtin:greedy".into()
    }
    fn reset(&mut self, _ctx: &EpisodeContext) -> Result<(), PolicyError> {
        Ok(())
    }
    fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        Ok(self.command(obs.delta(), obs.heading()))
    }
}

/// Plans once with A* on the ground-truth current, then follows the path
/// with pure pursuit, asking for just the through-water velocity the plan's
/// cost model assumed.
#[derive(Debug, Clone)]
pub struct AstarTrackingPolicy {
    pub resolution: f64,
    /// Waypoints ahead of the closest one to steer at.
    pub lookahead: usize,
    pub k_theta: f64,
    pub d_slow: f64,
    path: Vec<Vec2>,
    cursor: usize,
    goal: Vec2,
    vehicle: Option<VehicleParams>,
}

impl Default for AstarTrackingPolicy {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            lookahead: 6,
            k_theta: 2.0,
            d_slow: 10.0,
            path: Vec::new(),
            cursor: 0,
            goal: Vec2::ZERO,
            vehicle: None,
        }
    }
}

impl AstarTrackingPolicy {
    pub fn path(&self) -> &[Vec2] {
        &self.path
    }

    fn target(&mut self, pos: Vec2) -> Vec2 {
        // only search forward so the cursor never slides back along loops
        let end = (self.cursor + 4 * self.lookahead + 1).min(self.path.len());
        let mut best = self.cursor;
        let mut best_d = f64::INFINITY;
        for k in self.cursor..end {
            let d = self.path[k].distance(pos);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        self.cursor = best;
        self.path[(best + self.lookahead).min(self.path.len() - 1)]
    }
}

impl Policy for AstarTrackingPolicy {
    fn name(&self) -> String {
        "builtin:astar".into()
    }

    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError> {
        let flow = ctx.flow.as_ref().ok_or_else(|| {
            PolicyError::Failed("A* tracking needs the ground-truth current".into())
        })?;
        let grid = PlanGrid::new(ctx.bounds, self.resolution, &ctx.vehicle, 0.0)
            .map_err(|e| PolicyError::Failed(e.to_string()))?;
        let off = |p| PolicyError::Failed(format!("{p} is outside the planning lattice"));
        let s = grid.node_at(ctx.start).ok_or_else(|| off(ctx.start))?;
        let g = grid.node_at(ctx.goal).ok_or_else(|| off(ctx.goal))?;
        self.path = if s == g {
            vec![ctx.goal]
        } else {
            let plan = astar_dynamic(&grid, s, g, &**flow, &ctx.vehicle)
                .map_err(|e| PolicyError::Failed(e.to_string()))?;
            let mut pts = plan.positions(&grid);
            *pts.last_mut().expect("plan has a goal") = ctx.goal;
            pts
        };
        self.cursor = 0;
        self.goal = ctx.goal;
        self.vehicle = Some(ctx.vehicle);
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        let p = self
            .vehicle
            .ok_or_else(|| PolicyError::Failed("act before reset".into()))?;
        let delta = obs.delta();
        let dist = delta.norm();
        if dist == 0.0 {
            return Ok(Action::ZERO);
        }
        let pos = self.goal - delta;
        let target = self.target(pos);
        let to = target - pos;
        let dir = if to.norm() > 0.0 {
            to / to.norm()
        } else {
            delta / dist
        };
        let speed = p.terminal_speed() * (dist / self.d_slow).clamp(0.0, 1.0);
        let u_des = dir * speed - obs.flow();
        let err = wrap_angle(u_des.angle() - obs.heading());
        let common = (u_des.norm() * p.linear_drag / (2.0 * p.max_thrust)).clamp(0.0, 1.0)
            * err.cos().max(0.0);
        let diff = self.k_theta * err;
        Ok(Action::new(common - diff, common + diff).clamped())
    }
}
