//! Five-term step reward.

use crate::geom::Vec2;
use crate::vehicle::Action;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weights of `[target, dist, thrust, surf, jitter]`.
    pub weights: [f64; 5],
    /// Sparse bonus on reaching the goal.
    pub c_target: f64,
    pub c_dist: f64,
    pub c_thrust: f64,
    pub c_jitter: f64,
    /// Goal radius `ε`.
    pub target_radius: f64,
    /// Command L1 norm above which surfing earns nothing.
    pub u_max: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: [1.0; 5],
            c_target: 100.0,
            c_dist: 1.0,
            c_thrust: 0.5,
            c_jitter: 0.25,
            target_radius: 5.0,
            u_max: 0.5,
            r_min: 0.0,
            r_max: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("reward weights must be finite and non-negative".into());
        }
        let consts = [self.c_target, self.c_dist, self.c_thrust, self.c_jitter];
        if consts.iter().any(|c| !c.is_finite()) {
            return Err("reward constants must be finite".into());
        }
        if !(self.target_radius.is_finite() && self.target_radius > 0.0) {
            return Err("target_radius must be positive".into());
        }
        if !(self.r_min >= 0.0 && self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err("need r_max > r_min >= 0".into());
        }
        if !(self.u_max > 0.0 && self.u_max <= 2.0) {
            return Err("u_max must lie in (0, 2]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_target: f64,
    pub r_dist: f64,
    pub r_thrust: f64,
    pub r_surf: f64,
    pub r_jitter: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn terms(&self) -> [f64; 5] {
        [
            self.r_target,
            self.r_dist,
            self.r_thrust,
            self.r_surf,
            self.r_jitter,
        ]
    }

    pub fn weighted_total(terms: [f64; 5], weights: [f64; 5]) -> f64 {
        terms.iter().zip(weights).map(|(r, w)| w * r).sum()
    }
}

/// Surf bonus: a linear ramp from `r_max` at zero command down to `r_min` at
/// `u_max`, paid only while the vehicle outruns the local current.
pub fn surf_reward(cfg: &RewardConfig, a: Action, ground_speed: f64, flow_speed: f64) -> f64 {
    let l1 = a.l1();
    if l1 <= cfg.u_max && ground_speed > flow_speed {
        cfg.r_max - l1 * (cfg.r_max - cfg.r_min) / cfg.u_max
    } else {
        0.0
    }
}

/// Reward for moving from `prev_p` to `cur_p` under command `a`.
///
/// `ground_speed` is `‖u + v_flow‖` and `flow_speed` is `‖v_flow‖`.
#[allow(clippy::too_many_arguments)]
pub fn reward_step(
    cfg: &RewardConfig,
    prev_p: Vec2,
    cur_p: Vec2,
    goal: Vec2,
    a: Action,
    a_prev: Action,
    ground_speed: f64,
    flow_speed: f64,
) -> RewardBreakdown {
    let d_cur = cur_p.distance(goal);
    let d_prev = prev_p.distance(goal);
    let r_target = if d_cur < cfg.target_radius {
        cfg.c_target
    } else {
        0.0
    };
    // ties count as not getting closer
    let r_dist = if d_prev > d_cur {
        cfg.c_dist
    } else {
        -cfg.c_dist
    };
    let r_thrust = -cfg.c_thrust * a.l1();
    let r_surf = surf_reward(cfg, a, ground_speed, flow_speed);
    let r_jitter = -cfg.c_jitter * a.l1_distance(a_prev);
    let terms = [r_target, r_dist, r_thrust, r_surf, r_jitter];
    RewardBreakdown {
        r_target,
        r_dist,
        r_thrust,
        r_surf,
        r_jitter,
        total: RewardBreakdown::weighted_total(terms, cfg.weights),
    }
}
