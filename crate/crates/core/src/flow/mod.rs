//! Time-varying 2D velocity fields.
//!
//! Every field implements [`FlowField`]: a pure, deterministic query of the
//! background current at a position and time. Analytic gyres, the shed-vortex
//! cylinder wakes and file-backed gridded series all sit behind it, so the
//! vehicle, the planners and the episode loop never care where the numbers
//! come from.

pub mod gridded;
pub mod gyre;
pub mod vortex;

use crate::geom::{Rect, Vec2};
use thiserror::Error;

pub use gridded::{GridError, GridFieldSeries};
pub use gyre::{gyre_velocity, stream_function, GyreField, GyreParams};
pub use vortex::{
    advance_vortices, vortex_street_velocity, Cylinder, PointVortex, VortexState,
    VortexStreetField, VortexStreetParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("position {pos} at t={t} is outside the flow domain")]
    OutOfDomain { pos: Vec2, t: f64 },
    #[error("time {t} is outside the field's time range [{t_min}, {t_max}]")]
    OutOfTime { t: f64, t_min: f64, t_max: f64 },
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
}

/// A queryable background current `v_flow(x, y, t)`.
pub trait FlowField: Send + Sync {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError>;

    fn bounds(&self) -> Rect;

    /// Upper bound (analytic or precomputed) on the flow speed.
    fn max_speed(&self) -> f64;
}

impl<F: FlowField + ?Sized> FlowField for &F {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        (**self).velocity(pos, t)
    }
    fn bounds(&self) -> Rect {
        (**self).bounds()
    }
    fn max_speed(&self) -> f64 {
        (**self).max_speed()
    }
}

impl<F: FlowField + ?Sized> FlowField for std::sync::Arc<F> {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        (**self).velocity(pos, t)
    }
    fn bounds(&self) -> Rect {
        (**self).bounds()
    }
    fn max_speed(&self) -> f64 {
        (**self).max_speed()
    }
}

impl<F: FlowField + ?Sized> FlowField for Box<F> {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        (**self).velocity(pos, t)
    }
    fn bounds(&self) -> Rect {
        (**self).bounds()
    }
    fn max_speed(&self) -> f64 {
        (**self).max_speed()
    }
}

/// Spatially and temporally constant current over a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformFlow {
    pub velocity: Vec2,
    pub bounds: Rect,
}

impl UniformFlow {
    pub fn new(velocity: Vec2, bounds: Rect) -> Self {
        Self { velocity, bounds }
    }

    pub fn still(bounds: Rect) -> Self {
        Self::new(Vec2::ZERO, bounds)
    }
}

impl FlowField for UniformFlow {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        if !self.bounds.contains(pos) {
            return Err(FlowError::OutOfDomain { pos, t });
        }
        Ok(self.velocity)
    }
    fn bounds(&self) -> Rect {
        self.bounds
    }
    fn max_speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Evaluates the wrapped field at a fixed instant regardless of the query time.
#[derive(Debug, Clone)]
pub struct FrozenFlow<F> {
    pub inner: F,
    pub t: f64,
}

impl<F: FlowField> FrozenFlow<F> {
    pub fn new(inner: F, t: f64) -> Self {
        Self { inner, t }
    }
}

impl<F: FlowField> FlowField for FrozenFlow<F> {
    fn velocity(&self, pos: Vec2, _t: f64) -> Result<Vec2, FlowError> {
        self.inner.velocity(pos, self.t)
    }
    fn bounds(&self) -> Rect {
        self.inner.bounds()
    }
    fn max_speed(&self) -> f64 {
        self.inner.max_speed()
    }
}

/// Shifts the time axis: queries at `t` read the inner field at `t + offset`.
#[derive(Debug, Clone)]
pub struct TimeShifted<F> {
    pub inner: F,
    pub offset: f64,
}

impl<F: FlowField> TimeShifted<F> {
    pub fn new(inner: F, offset: f64) -> Self {
        Self { inner, offset }
    }
}

impl<F: FlowField> FlowField for TimeShifted<F> {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        self.inner.velocity(pos, t + self.offset)
    }
    fn bounds(&self) -> Rect {
        self.inner.bounds()
    }
    fn max_speed(&self) -> f64 {
        self.inner.max_speed()
    }
}

/// Largest speed found on an `nx × ny` node lattice spanning the bounds,
/// evaluated at each of `times`. Unlike [`FlowField::max_speed`] this is a
/// measurement, not a bound.
pub fn sampled_max_speed<F: FlowField + ?Sized>(
    field: &F,
    nx: usize,
    ny: usize,
    times: &[f64],
) -> Result<f64, FlowError> {
    let b = field.bounds();
    let mut best = 0.0_f64;
    for &t in times {
        for j in 0..ny {
            let y = b.y_min + b.height() * j as f64 / (ny.max(2) - 1) as f64;
            for i in 0..nx {
                let x = b.x_min + b.width() * i as f64 / (nx.max(2) - 1) as f64;
                let v = field.velocity(Vec2::new(x, y), t)?;
                best = best.max(v.norm());
            }
        }
    }
    Ok(best)
}
