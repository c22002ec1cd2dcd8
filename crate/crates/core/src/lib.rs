//! Simulation core for energy-aware navigation of a thrust-limited surface
//! vehicle in time-varying vortical currents.

pub mod config;
pub mod env;
pub mod episode;
pub mod eval;
pub mod flow;
pub mod geom;
pub mod gpr;
pub mod obs;
pub mod planner;
pub mod policy;
pub mod reward;
pub mod spawn;
pub mod vehicle;

pub use geom::{Rect, Vec2};
