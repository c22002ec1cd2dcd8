//! Generalized gyre flows derived from a time-periodic stream function.
//!
//! `ψ(x, y, t) = A sin(Nx π f(x, t)) sin(Ny π y)` with the x-coordinate
//! warped by `f(x, t) = ε sin(ωt) x² + (1 − ε sin(ωt) L) x`, where `L` is the
//! domain width. For the double gyre (`L = 2`) this is the classic
//! `ε sin(ωt) x² + x − 2ε sin(ωt) x`; carrying `L` keeps `f(L, t) = L` so the
//! side walls stay closed for the quad gyre on the unit square as well.

use super::{FlowError, FlowField};
use crate::geom::{Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyreParams {
    /// Velocity amplitude `A`.
    pub amplitude: f64,
    pub nx: u32,
    pub ny: u32,
    /// Angular frequency of the perturbation (rad per gyre time unit).
    pub omega: f64,
    /// Perturbation amplitude, in `[0, 0.5)`.
    pub eps: f64,
    pub domain: Rect,
}

impl GyreParams {
    /// `Nx = 2, Ny = 1` on `[0, 2] × [0, 1]`, `ω = 2π`, `ε = 0.25`.
    pub fn double(amplitude: f64) -> Self {
        Self {
            amplitude,
            nx: 2,
            ny: 1,
            omega: 2.0 * PI,
            eps: 0.25,
            domain: Rect::new(0.0, 2.0, 0.0, 1.0),
        }
    }

    /// `Nx = Ny = 2` on `[0, 1] × [0, 1]`.
    pub fn quad(amplitude: f64) -> Self {
        Self {
            nx: 2,
            ny: 2,
            domain: Rect::new(0.0, 1.0, 0.0, 1.0),
            ..Self::double(amplitude)
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidParams(m.to_string()));
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad("gyre amplitude must be positive");
        }
        if self.nx < 1 || self.ny < 1 {
            return bad("gyre counts must be at least 1");
        }
        if !(0.0..0.5).contains(&self.eps) {
            return bad("gyre eps must lie in [0, 0.5)");
        }
        if !self.omega.is_finite() {
            return bad("gyre omega must be finite");
        }
        if !self.domain.is_valid() {
            return bad("gyre domain is degenerate");
        }
        Ok(())
    }

    /// Analytic speed bound: `|v_x| ≤ A Ny π`, `|v_y| ≤ A Nx π (1 + ε L)`.
    pub fn speed_bound(&self) -> f64 {
        let l = self.domain.width();
        let vx = self.amplitude * self.ny as f64 * PI;
        let vy = self.amplitude * self.nx as f64 * PI * (1.0 + self.eps * l);
        vx.hypot(vy)
    }

    /// Returns `(f, ∂f/∂x)` at local coordinate `x` (measured from the left wall).
    fn warp(&self, x: f64, t: f64) -> (f64, f64) {
        let l = self.domain.width();
        let a = self.eps * (self.omega * t).sin();
        let f = a * x * x + (1.0 - a * l) * x;
        let df = 2.0 * a * x + 1.0 - a * l;
        (f, df)
    }

    fn check(&self, pos: Vec2, t: f64) -> Result<(), FlowError> {
        if !self.domain.contains(pos) || !(t >= 0.0) {
            return Err(FlowError::OutOfDomain { pos, t });
        }
        Ok(())
    }
}

pub fn stream_function(params: &GyreParams, pos: Vec2, t: f64) -> Result<f64, FlowError> {
    params.check(pos, t)?;
    Ok(stream_unchecked(params, pos, t))
}

fn stream_unchecked(params: &GyreParams, pos: Vec2, t: f64) -> f64 {
    let x = pos.x - params.domain.x_min;
    let y = pos.y - params.domain.y_min;
    let (f, _) = params.warp(x, t);
    params.amplitude * (params.nx as f64 * PI * f).sin() * (params.ny as f64 * PI * y).sin()
}

/// `v = (−∂ψ/∂y, ∂ψ/∂x)` in closed form.
pub fn gyre_velocity(params: &GyreParams, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
    params.check(pos, t)?;
    let x = pos.x - params.domain.x_min;
    let y = pos.y - params.domain.y_min;
    let (f, df) = params.warp(x, t);
    let nx = params.nx as f64 * PI;
    let ny = params.ny as f64 * PI;
    let a = params.amplitude;
    Ok(Vec2::new(
        -a * ny * (nx * f).sin() * (ny * y).cos(),
        a * nx * (nx * f).cos() * (ny * y).sin() * df,
    ))
}

/// A gyre placed in environment coordinates.
///
/// Environment positions are divided by `length_scale` and step times by
/// `time_scale` before evaluating the stream function; the velocity is
/// returned unscaled, so `amplitude` is directly the environment speed scale.
/// Scaling both coordinates by the same factor keeps the field divergence-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyreField {
    pub params: GyreParams,
    /// Environment units per gyre length unit.
    pub length_scale: f64,
    /// Simulation steps per gyre time unit.
    pub time_scale: f64,
}

/// Environment units per gyre unit for the built-in presets (domain height 100).
pub const GYRE_LENGTH_SCALE: f64 = 100.0;
/// Steps per gyre time unit; with `ω = 2π` one perturbation cycle lasts 500 steps.
pub const GYRE_TIME_SCALE: f64 = 500.0;

impl GyreField {
    pub fn new(params: GyreParams, length_scale: f64, time_scale: f64) -> Result<Self, FlowError> {
        params.validate()?;
        if !(length_scale > 0.0 && time_scale > 0.0) {
            return Err(FlowError::InvalidParams(
                "gyre length and time scales must be positive".into(),
            ));
        }
        Ok(Self {
            params,
            length_scale,
            time_scale,
        })
    }

    pub fn double(amplitude: f64) -> Self {
        Self::new(
            GyreParams::double(amplitude),
            GYRE_LENGTH_SCALE,
            GYRE_TIME_SCALE,
        )
        .expect("double gyre preset is valid")
    }

    pub fn quad(amplitude: f64) -> Self {
        Self::new(
            GyreParams::quad(amplitude),
            GYRE_LENGTH_SCALE,
            GYRE_TIME_SCALE,
        )
        .expect("quad gyre preset is valid")
    }

    /// Largest speed on a 101×101 lattice at 50 instants spread over one
    /// perturbation period, per unit amplitude.
    pub fn unit_sampled_max_speed(&self) -> f64 {
        let mut unit = self.clone();
        unit.params.amplitude = 1.0;
        let period = if self.params.omega != 0.0 {
            2.0 * PI / self.params.omega.abs() * self.time_scale
        } else {
            1.0
        };
        let times: Vec<f64> = (0..50).map(|k| period * k as f64 / 50.0).collect();
        super::sampled_max_speed(&unit, 101, 101, &times).expect("lattice lies inside the domain")
    }

    /// Amplitude whose sampled peak speed equals `target_speed`.
    pub fn amplitude_for_speed(&self, target_speed: f64) -> f64 {
        target_speed / self.unit_sampled_max_speed()
    }
}

impl FlowField for GyreField {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        let local = pos / self.length_scale;
        gyre_velocity(&self.params, local, t / self.time_scale)
            .map_err(|_| FlowError::OutOfDomain { pos, t })
    }

    fn bounds(&self) -> Rect {
        let d = self.params.domain;
        let s = self.length_scale;
        Rect::new(d.x_min * s, d.x_max * s, d.y_min * s, d.y_max * s)
    }

    fn max_speed(&self) -> f64 {
        self.params.speed_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference velocity of ψ; independent of the closed form.
    fn fd_velocity(p: &GyreParams, pos: Vec2, t: f64, h: f64) -> Vec2 {
        let psi = |x: f64, y: f64| stream_unchecked(p, Vec2::new(x, y), t);
        let dpsi_dy = (psi(pos.x, pos.y + h) - psi(pos.x, pos.y - h)) / (2.0 * h);
        let dpsi_dx = (psi(pos.x + h, pos.y) - psi(pos.x - h, pos.y)) / (2.0 * h);
        Vec2::new(-dpsi_dy, dpsi_dx)
    }

    #[test]
    fn double_gyre_hand_value() {
        let p = GyreParams::double(0.1);
        let v = gyre_velocity(&p, Vec2::new(0.5, 0.5), 0.0).unwrap();
        assert!(v.x.abs() < 1e-15);
        assert!((v.y - (-0.2 * PI)).abs() < 1e-15);
        let fd = fd_velocity(&p, Vec2::new(0.5, 0.5), 0.0, 1e-5);
        assert!((fd - v).norm() < 1e-6);
    }

    #[test]
    fn bottom_wall_has_no_normal_flow() {
        for p in [GyreParams::double(0.3), GyreParams::quad(0.3)] {
            for k in 0..20 {
                let x = p.domain.width() * k as f64 / 19.0;
                let v = gyre_velocity(&p, Vec2::new(x, 0.0), 0.13 * k as f64).unwrap();
                assert_eq!(v.y, 0.0);
            }
        }
    }

    #[test]
    fn side_walls_closed() {
        let p = GyreParams::double(0.1);
        for k in 0..25 {
            let t = 0.071 * k as f64;
            let y = k as f64 / 24.0;
            assert!(gyre_velocity(&p, Vec2::new(0.0, y), t).unwrap().x.abs() < 1e-12);
            assert!(gyre_velocity(&p, Vec2::new(2.0, y), t).unwrap().x.abs() < 1e-12);
        }
        let q = GyreParams::quad(0.1);
        for k in 0..25 {
            let t = 0.093 * k as f64;
            let y = k as f64 / 24.0;
            assert!(gyre_velocity(&q, Vec2::new(1.0, y), t).unwrap().x.abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let p = GyreParams::double(0.1);
        assert!(gyre_velocity(&p, Vec2::new(2.1, 0.5), 0.0).is_err());
        assert!(gyre_velocity(&p, Vec2::new(1.0, 0.5), -1.0).is_err());
        assert!(stream_function(&p, Vec2::new(1.0, -0.1), 0.0).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = GyreParams::double(0.1);
        p.eps = 0.5;
        assert!(p.validate().is_err());
        let mut p = GyreParams::double(0.1);
        p.nx = 0;
        assert!(p.validate().is_err());
        assert!(GyreParams::double(-1.0).validate().is_err());
    }

    #[test]
    fn scaled_field_matches_raw() {
        let g = GyreField::double(0.2);
        let v = g.velocity(Vec2::new(50.0, 50.0), 0.0).unwrap();
        let raw = gyre_velocity(&g.params, Vec2::new(0.5, 0.5), 0.0).unwrap();
        assert_eq!(v, raw);
        assert_eq!(g.bounds(), Rect::new(0.0, 200.0, 0.0, 100.0));
        // period of 500 steps
        let a = g.velocity(Vec2::new(33.0, 71.0), 120.0).unwrap();
        let b = g.velocity(Vec2::new(33.0, 71.0), 620.0).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn speed_bound_dominates_samples() {
        for g in [GyreField::double(0.37), GyreField::quad(0.37)] {
            let sampled = g.unit_sampled_max_speed() * 0.37;
            assert!(sampled <= g.max_speed() + 1e-12);
            let a = g.amplitude_for_speed(0.5);
            let mut h = g.clone();
            h.params.amplitude = a;
            assert!((h.unit_sampled_max_speed() * a - 0.5).abs() < 1e-12);
        }
    }
}
