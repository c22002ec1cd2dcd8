//! What the policy sees each step.

use crate::geom::Vec2;
use crate::gpr::ReconGrid;
use crate::vehicle::VehicleState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of the low-dimensional state vector.
pub const STATE_LEN: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObsError {
    #[error("observation input '{0}' is not finite")]
    NonFinite(&'static str),
    #[error("reconstruction centered at {grid} but vehicle is at {vehicle}")]
    CenterMismatch { grid: Vec2, vehicle: Vec2 },
}

/// Reconstructed flow maps plus the state vector
/// `[Δx, Δy, u_x, u_y, v_x, v_y, g_x, g_y, θ]`.
///
/// `maps` is `None` when the policy declared it does not read them; the
/// gradients in `state` are filled either way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u64,
    pub state: [f64; STATE_LEN],
    pub maps: Option<ReconGrid>,
}

impl Observation {
    pub fn delta(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn propulsion_velocity(&self) -> Vec2 {
        Vec2::new(self.state[2], self.state[3])
    }

    pub fn flow(&self) -> Vec2 {
        Vec2::new(self.state[4], self.state[5])
    }

    pub fn gradients(&self) -> (f64, f64) {
        (self.state[6], self.state[7])
    }

    pub fn heading(&self) -> f64 {
        self.state[8]
    }
}

/// Assembles the observation. `grads` are `(∂V'x/∂x, ∂V'y/∂y)` at the
/// vehicle; when `maps` is given they must have been taken from it, see
/// [`observation_from_grid`].
pub fn build_observation(
    maps: Option<ReconGrid>,
    state: &VehicleState,
    goal: Vec2,
    flow_meas: Vec2,
    grads: (f64, f64),
    step: u64,
) -> Result<Observation, ObsError> {
    if !state.is_finite() {
        return Err(ObsError::NonFinite("vehicle state"));
    }
    if !goal.is_finite() {
        return Err(ObsError::NonFinite("goal"));
    }
    if !flow_meas.is_finite() {
        return Err(ObsError::NonFinite("flow measurement"));
    }
    if !(grads.0.is_finite() && grads.1.is_finite()) {
        return Err(ObsError::NonFinite("flow gradients"));
    }
    if let Some(m) = &maps {
        if m.center != state.pos {
            return Err(ObsError::CenterMismatch {
                grid: m.center,
                vehicle: state.pos,
            });
        }
        let all = m
            .mean_x
            .iter()
            .chain(&m.mean_y)
            .chain(&m.std_x)
            .chain(&m.std_y);
        if !all.into_iter().all(|v| v.is_finite()) {
            return Err(ObsError::NonFinite("reconstructed maps"));
        }
    }
    let d = goal - state.pos;
    Ok(Observation {
        step,
        state: [
            d.x,
            d.y,
            state.vel.x,
            state.vel.y,
            flow_meas.x,
            flow_meas.y,
            grads.0,
            grads.1,
            state.heading,
        ],
        maps,
    })
}

/// [`build_observation`] with the gradients read off the grid's center.
pub fn observation_from_grid(
    recon: ReconGrid,
    state: &VehicleState,
    goal: Vec2,
    flow_meas: Vec2,
    step: u64,
) -> Result<Observation, ObsError> {
    let grads = recon.center_gradients();
    build_observation(Some(recon), state, goal, flow_meas, grads, step)
}
