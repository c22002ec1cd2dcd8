//! Point-mass surface vehicle with two asymmetric thrusters.
//!
//! Thrust acts along the heading; the thrust difference turns the hull.
//! Integration is semi-implicit Euler with first-order linear and rotational
//! drag:
//!
//! ```text
//! θ̇ += (τ − c_r θ̇) / I · dt        τ = (T_r − T_l) · d/2
//! θ  += θ̇ · dt
//! u  += (F ĥ(θ) − c_d u) / m · dt  F = T_l + T_r
//! p  += (u + v_flow(p, t)) · dt
//! ```

use crate::flow::{FlowError, FlowField};
use crate::geom::{wrap_angle, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Forward thrust limit `T` per thruster; reverse is limited to `T/2`.
    pub max_thrust: f64,
    pub mass: f64,
    pub inertia: f64,
    /// Lever arm `d/2` of each thruster about the center.
    pub half_separation: f64,
    /// `c_d`, force per unit velocity.
    pub linear_drag: f64,
    /// `c_r`, torque per unit angular rate.
    pub rotational_drag: f64,
    pub dt: f64,
}

impl VehicleParams {
    /// Ratio of self-propelled terminal speed to the peak flow speed.
    pub const SPEED_MARGIN: f64 = 1.5;

    /// Default hull with `T` chosen so the terminal speed `2T/c_d` is
    /// [`Self::SPEED_MARGIN`] times `max_flow_speed`.
    pub fn for_max_flow_speed(max_flow_speed: f64) -> Self {
        let linear_drag = 0.2;
        Self {
            max_thrust: Self::SPEED_MARGIN * max_flow_speed * linear_drag / 2.0,
            mass: 1.0,
            inertia: 1.0,
            half_separation: 0.5,
            linear_drag,
            rotational_drag: 0.5,
            dt: 1.0,
        }
    }

    pub fn terminal_speed(&self) -> f64 {
        2.0 * self.max_thrust / self.linear_drag
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("max_thrust", self.max_thrust),
            ("mass", self.mass),
            ("inertia", self.inertia),
            ("half_separation", self.half_separation),
            ("linear_drag", self.linear_drag),
            ("rotational_drag", self.rotational_drag),
            ("dt", self.dt),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("vehicle {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Commanded thrust fractions for the left and right thrusters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub left: f64,
    pub right: f64,
}

impl Action {
    pub const ZERO: Action = Action {
        left: 0.0,
        right: 0.0,
    };

    pub const fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    /// Components clamped to `[-1, 1]`; NaN becomes 0.
    pub fn clamped(self) -> Self {
        let c = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        Self::new(c(self.left), c(self.right))
    }

    pub fn l1(self) -> f64 {
        self.left.abs() + self.right.abs()
    }

    pub fn sq(self) -> f64 {
        self.left * self.left + self.right * self.right
    }

    pub fn l1_distance(self, other: Action) -> f64 {
        (self.left - other.left).abs() + (self.right - other.right).abs()
    }

    pub fn is_finite(self) -> bool {
        self.left.is_finite() && self.right.is_finite()
    }

    /// Reflection partner: thrusters swapped.
    pub fn mirrored(self) -> Self {
        Self::new(self.right, self.left)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pos: Vec2,
    /// Propulsion-induced velocity `u`.
    pub vel: Vec2,
    /// Heading θ in `(-π, π]`.
    pub heading: f64,
    pub yaw_rate: f64,
    /// Σ (|a_l| + |a_r|).
    pub energy_used: f64,
    /// Σ (a_l² + a_r²).
    pub energy_sq: f64,
}

impl VehicleState {
    pub fn at_rest(pos: Vec2, heading: f64) -> Self {
        Self {
            pos,
            heading: wrap_angle(heading),
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.is_finite()
            && self.vel.is_finite()
            && self.heading.is_finite()
            && self.yaw_rate.is_finite()
            && self.energy_used.is_finite()
    }
}

/// Piecewise-linear, zero-preserving map of `[-1, 1]` onto `[-T/2, T]`.
pub fn map_action_to_thrust(a: Action, params: &VehicleParams) -> (f64, f64) {
    let a = a.clamped();
    let map = |x: f64| {
        if x >= 0.0 {
            x * params.max_thrust
        } else {
            x * params.max_thrust / 2.0
        }
    };
    (map(a.left), map(a.right))
}

/// One integration step given the flow velocity at the current position.
pub fn step_with_flow(
    state: &VehicleState,
    a: Action,
    flow: Vec2,
    params: &VehicleParams,
) -> VehicleState {
    let a = a.clamped();
    let (tl, tr) = map_action_to_thrust(a, params);
    let dt = params.dt;
    let torque = (tr - tl) * params.half_separation;
    let force = tl + tr;

    let yaw_rate =
        state.yaw_rate + (torque - params.rotational_drag * state.yaw_rate) / params.inertia * dt;
    let heading = wrap_angle(state.heading + yaw_rate * dt);
    let h = Vec2::from_angle(heading);
    let vel = state.vel + (h * force - state.vel * params.linear_drag) / params.mass * dt;
    let pos = state.pos + (vel + flow) * dt;

    VehicleState {
        pos,
        vel,
        heading,
        yaw_rate,
        energy_used: state.energy_used + a.l1(),
        energy_sq: state.energy_sq + a.sq(),
    }
}

pub fn step_vehicle<F: FlowField + ?Sized>(
    state: &VehicleState,
    a: Action,
    flow: &F,
    t: f64,
    params: &VehicleParams,
) -> Result<VehicleState, FlowError> {
    let v = flow.velocity(state.pos, t)?;
    Ok(step_with_flow(state, a, v, params))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("drifter released at {start} did not cross within {limit} steps")]
    NoCrossing { start: Vec2, limit: u64 },
    #[error("drifter left the domain at step {step}: {source}")]
    LeftDomain { step: u64, source: FlowError },
}

pub const DRIFT_TARGET_STEPS: u64 = 1200;
pub const DRIFT_STEP_BUDGET: u64 = 10 * DRIFT_TARGET_STEPS;

/// Steps for an unpowered vehicle released at `start` (at time `t0`) to reach
/// `x >= x_goal`.
pub fn drift_steps<F: FlowField + ?Sized>(
    params: &VehicleParams,
    flow: &F,
    start: Vec2,
    x_goal: f64,
    t0: f64,
) -> Result<u64, CalibrationError> {
    let mut s = VehicleState::at_rest(start, 0.0);
    for step in 0..DRIFT_STEP_BUDGET {
        if s.pos.x >= x_goal {
            return Ok(step);
        }
        s = step_vehicle(&s, Action::ZERO, flow, t0 + step as f64, params)
            .map_err(|source| CalibrationError::LeftDomain { step, source })?;
    }
    if s.pos.x >= x_goal {
        return Ok(DRIFT_STEP_BUDGET);
    }
    Err(CalibrationError::NoCrossing {
        start,
        limit: DRIFT_STEP_BUDGET,
    })
}

/// Drift crossing from `x = x_min + 5` to `x = x_max − 5`, released at
/// `(x_min + 5, H/2)`.
pub fn calibrate_drift<F: FlowField + ?Sized>(
    params: &VehicleParams,
    flow: &F,
) -> Result<u64, CalibrationError> {
    let b = flow.bounds();
    drift_steps(
        params,
        flow,
        Vec2::new(b.x_min + 5.0, b.center().y),
        b.x_max - 5.0,
        0.0,
    )
}

/// Mean crossing time over `releases` start heights spread evenly over the
/// domain height (cell centers).
pub fn mean_drift_crossing<F: FlowField + ?Sized>(
    params: &VehicleParams,
    flow: &F,
    releases: usize,
) -> Result<f64, CalibrationError> {
    let b = flow.bounds();
    let mut total = 0u64;
    for k in 0..releases {
        let y = b.y_min + b.height() * (k as f64 + 0.5) / releases as f64;
        total += drift_steps(
            params,
            flow,
            Vec2::new(b.x_min + 5.0, y),
            b.x_max - 5.0,
            0.0,
        )?;
    }
    Ok(total as f64 / releases as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::UniformFlow;
    use crate::geom::Rect;
    use std::f64::consts::PI;

    fn params() -> VehicleParams {
        VehicleParams::for_max_flow_speed(0.5)
    }

    fn still() -> UniformFlow {
        UniformFlow::still(Rect::new(0.0, 300.0, 0.0, 100.0))
    }

    #[test]
    fn thrust_mapping() {
        let p = params();
        let t = p.max_thrust;
        assert_eq!(map_action_to_thrust(Action::new(1.0, 1.0), &p), (t, t));
        assert_eq!(map_action_to_thrust(Action::ZERO, &p), (0.0, 0.0));
        assert_eq!(
            map_action_to_thrust(Action::new(-1.0, -1.0), &p),
            (-t / 2.0, -t / 2.0)
        );
        assert_eq!(
            map_action_to_thrust(Action::new(3.0, -7.0), &p),
            (t, -t / 2.0)
        );
    }

    #[test]
    fn pure_drift() {
        let p = params();
        let f = UniformFlow::new(Vec2::new(0.25, -0.1), Rect::new(0.0, 300.0, 0.0, 100.0));
        let s0 = VehicleState::at_rest(Vec2::new(10.0, 50.0), 0.3);
        let s1 = step_vehicle(&s0, Action::ZERO, &f, 0.0, &p).unwrap();
        assert_eq!(s1.pos, Vec2::new(10.25, 49.9));
        assert_eq!(s1.energy_used, 0.0);
        assert_eq!(s1.heading, 0.3);
    }

    #[test]
    fn symmetric_full_thrust() {
        let p = params();
        let s0 = VehicleState::at_rest(Vec2::new(10.0, 50.0), 0.0);
        let s1 = step_vehicle(&s0, Action::new(1.0, 1.0), &still(), 0.0, &p).unwrap();
        assert_eq!(s1.heading, 0.0);
        assert_eq!(s1.yaw_rate, 0.0);
        assert!((s1.vel.x - 2.0 * p.max_thrust / p.mass).abs() < 1e-15);
        assert_eq!(s1.vel.y, 0.0);
        assert_eq!(s1.energy_used, 2.0);
    }

    #[test]
    fn differential_turn_from_rest() {
        // hand evaluation of the update equations
        let p = params();
        let t = p.max_thrust;
        let s1 = step_vehicle(
            &VehicleState::at_rest(Vec2::new(50.0, 50.0), 0.0),
            Action::new(-0.5, 0.5),
            &still(),
            0.0,
            &p,
        )
        .unwrap();
        let torque = (0.5 * t - (-0.25 * t)) * 0.5;
        let yaw_rate = torque / p.inertia;
        assert!(yaw_rate > 0.0);
        assert!((s1.yaw_rate - yaw_rate).abs() < 1e-15);
        assert!((s1.heading - yaw_rate).abs() < 1e-15);
        let f = t / 4.0;
        assert!((s1.vel.x - f * yaw_rate.cos()).abs() < 1e-15);
        assert!((s1.vel.y - f * yaw_rate.sin()).abs() < 1e-15);
        assert_eq!(s1.energy_used, 1.0);
    }

    #[test]
    fn terminal_speed_monotone() {
        let p = params();
        let vt = p.terminal_speed();
        let mut s = VehicleState::at_rest(Vec2::new(0.0, 50.0), 0.0);
        let open = UniformFlow::still(Rect::new(0.0, 1e6, 0.0, 100.0));
        let mut last = 0.0;
        for _ in 0..200 {
            s = step_vehicle(&s, Action::new(1.0, 1.0), &open, 0.0, &p).unwrap();
            let speed = s.vel.norm();
            assert!(speed >= last);
            assert!(speed <= vt * (1.0 + 1e-12));
            last = speed;
        }
        assert!((last - vt).abs() / vt < 0.01);
    }

    #[test]
    fn heading_stays_wrapped() {
        let p = params();
        let mut s = VehicleState::at_rest(Vec2::new(150.0, 50.0), PI);
        for k in 0..500 {
            let a = if k % 97 < 60 {
                Action::new(-1.0, 1.0)
            } else {
                Action::new(1.0, -1.0)
            };
            s = step_with_flow(&s, a, Vec2::ZERO, &p);
            assert!(s.heading > -PI && s.heading <= PI);
        }
    }

    #[test]
    fn uniform_drift_crossing() {
        let p = params();
        let f = UniformFlow::new(Vec2::new(0.25, 0.0), Rect::new(0.0, 300.0, 0.0, 100.0));
        assert_eq!(calibrate_drift(&p, &f).unwrap(), 1160);
        assert!(matches!(
            calibrate_drift(&p, &still()),
            Err(CalibrationError::NoCrossing { .. })
        ));
    }
}
