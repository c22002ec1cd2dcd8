//! Reduced-order cylinder wakes: a free stream, potential-flow blockage around
//! each cylinder, and a street of shed Lamb–Oseen vortices.
//!
//! Each cylinder sheds one vortex every `shed_period` steps, alternating the
//! sign of its circulation. Vortices advect with the local velocity induced
//! by everything except themselves (forward Euler, one step per time unit)
//! and are dropped once they leave the domain plus `drop_margin`, or when the
//! live count exceeds `max_live_vortices` (oldest first).

use super::{FlowError, FlowField};
use crate::geom::{Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cylinder {
    /// Rest position of the center.
    pub center: Vec2,
    /// Vertical oscillation amplitude; 0 for a static cylinder.
    #[serde(default)]
    pub amplitude: f64,
    /// Oscillation period in steps; ignored when `amplitude == 0`.
    #[serde(default)]
    pub period: f64,
}

impl Cylinder {
    pub fn fixed(center: Vec2) -> Self {
        Self {
            center,
            amplitude: 0.0,
            period: 0.0,
        }
    }

    pub fn center_at(&self, t: f64) -> Vec2 {
        if self.amplitude == 0.0 || self.period <= 0.0 {
            return self.center;
        }
        let dy = self.amplitude * (2.0 * PI * t / self.period).sin();
        Vec2::new(self.center.x, self.center.y + dy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexStreetParams {
    pub cylinders: Vec<Cylinder>,
    pub cylinder_radius: f64,
    /// Units per step.
    pub free_stream: Vec2,
    /// Steps between consecutive sheds of one cylinder.
    pub shed_period: u64,
    /// Circulation magnitude of a shed vortex.
    pub vortex_strength: f64,
    pub core_radius: f64,
    pub max_live_vortices: usize,
    /// Lateral offset of the shed point from the cylinder axis: positive
    /// vortices start below it, negative ones above.
    #[serde(default)]
    pub row_offset: f64,
    /// Vortices are kept until they are this far outside the domain.
    #[serde(default)]
    pub drop_margin: f64,
    /// Mirror every vortex and doublet across the top and bottom walls so the
    /// wall-normal velocity mostly cancels there.
    #[serde(default)]
    pub wall_images: bool,
    pub domain: Rect,
}

pub const DOMAIN_WIDTH: f64 = 300.0;
pub const DOMAIN_HEIGHT: f64 = 100.0;

impl VortexStreetParams {
    /// Shared wake parameters for the 300×100 presets; cylinders are added by
    /// the preset constructors.
    fn base(free_stream: f64) -> Self {
        Self {
            cylinders: Vec::new(),
            cylinder_radius: 5.0,
            free_stream: Vec2::new(free_stream, 0.0),
            shed_period: 100,
            vortex_strength: 10.0,
            core_radius: 4.0,
            max_live_vortices: 64,
            row_offset: 5.0,
            drop_margin: 20.0,
            wall_images: true,
            domain: Rect::new(0.0, DOMAIN_WIDTH, 0.0, DOMAIN_HEIGHT),
        }
    }

    /// One fixed cylinder at `(W/5, H/2)`.
    pub fn single_static(free_stream: f64) -> Self {
        let mut p = Self::base(free_stream);
        p.cylinders = vec![Cylinder::fixed(Vec2::new(
            DOMAIN_WIDTH / 5.0,
            DOMAIN_HEIGHT / 2.0,
        ))];
        p
    }

    /// Cylinder at `(W/5, H/2)` oscillating vertically with amplitude `H/6`
    /// and a 500-step period.
    pub fn single_oscillating(free_stream: f64) -> Self {
        let mut p = Self::base(free_stream);
        p.cylinders = vec![Cylinder {
            center: Vec2::new(DOMAIN_WIDTH / 5.0, DOMAIN_HEIGHT / 2.0),
            amplitude: DOMAIN_HEIGHT / 6.0,
            period: 500.0,
        }];
        p
    }

    /// Fixed cylinders at `(W/5, H/3)` and `(W/5, 2H/3)`.
    pub fn double_static(free_stream: f64) -> Self {
        let mut p = Self::base(free_stream);
        p.cylinders = vec![
            Cylinder::fixed(Vec2::new(DOMAIN_WIDTH / 5.0, DOMAIN_HEIGHT / 3.0)),
            Cylinder::fixed(Vec2::new(DOMAIN_WIDTH / 5.0, 2.0 * DOMAIN_HEIGHT / 3.0)),
        ];
        p
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidParams(m.to_string()));
        if !(self.core_radius > 0.0) {
            return bad("core_radius must be positive");
        }
        if self.shed_period < 1 {
            return bad("shed_period must be at least 1");
        }
        if !(self.cylinder_radius >= 0.0) {
            return bad("cylinder_radius must be non-negative");
        }
        if !self.free_stream.is_finite() || !self.vortex_strength.is_finite() {
            return bad("free stream and vortex strength must be finite");
        }
        if !self.domain.is_valid() {
            return bad("domain is degenerate");
        }
        if self.max_live_vortices == 0 && !self.cylinders.is_empty() {
            return bad("max_live_vortices must be positive");
        }
        Ok(())
    }

    /// Where a cylinder's vortex of the given sign is released at time `t`.
    pub fn shed_point(&self, cylinder: usize, t: f64, positive: bool) -> Vec2 {
        let c = self.cylinders[cylinder].center_at(t);
        let lateral = if positive {
            -self.row_offset
        } else {
            self.row_offset
        };
        Vec2::new(c.x + self.cylinder_radius, c.y + lateral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointVortex {
    pub pos: Vec2,
    pub circulation: f64,
    /// Step at which it was shed.
    pub born: u64,
    pub cylinder: usize,
}

/// Live vortices plus the shed bookkeeping needed to continue the street.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VortexState {
    pub vortices: Vec<PointVortex>,
    /// Last step processed; `None` before the first call.
    pub time: Option<u64>,
    /// Number of vortices each cylinder has shed so far.
    pub shed_counts: Vec<u64>,
}

impl VortexState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Lamb–Oseen velocity induced at `p` by a vortex at `center`.
pub fn lamb_oseen(p: Vec2, center: Vec2, circulation: f64, core_radius: f64) -> Vec2 {
    let d = p - center;
    let r2 = d.norm_sq();
    if r2 == 0.0 {
        return Vec2::ZERO;
    }
    let factor = circulation / (2.0 * PI * r2) * (1.0 - (-r2 / (core_radius * core_radius)).exp());
    d.perp() * factor
}

/// Doublet perturbation of a uniform stream `u` around a cylinder of radius
/// `radius` at `center`. Inside the cylinder the term is attenuated by
/// `(r/R)^4` so it stays finite and vanishes at the center.
pub fn doublet(p: Vec2, center: Vec2, radius: f64, u: Vec2) -> Vec2 {
    if radius == 0.0 {
        return Vec2::ZERO;
    }
    let z = p - center;
    let r2 = z.norm_sq();
    // conj(z)^2
    let a = z.x * z.x - z.y * z.y;
    let b = -2.0 * z.x * z.y;
    // U * conj(z)^2 as complex product
    let re = u.x * a - u.y * b;
    let im = u.x * b + u.y * a;
    let r2_cyl = radius * radius;
    let scale = if r2 >= r2_cyl {
        -r2_cyl / (r2 * r2)
    } else {
        -1.0 / r2_cyl
    };
    // complex velocity u - iv = scale * (re + i im)
    Vec2::new(scale * re, -scale * im)
}

/// Reflections of `p` across the bottom and top walls.
fn wall_mirrors(domain: Rect, p: Vec2) -> [Vec2; 2] {
    [
        Vec2::new(p.x, 2.0 * domain.y_min - p.y),
        Vec2::new(p.x, 2.0 * domain.y_max - p.y),
    ]
}

fn background(params: &VortexStreetParams, pos: Vec2, t: f64) -> Vec2 {
    let mut v = params.free_stream;
    let u = params.free_stream;
    for cyl in &params.cylinders {
        let c = cyl.center_at(t);
        v += doublet(pos, c, params.cylinder_radius, u);
        if params.wall_images {
            for m in wall_mirrors(params.domain, c) {
                v += doublet(pos, m, params.cylinder_radius, u);
            }
        }
    }
    v
}

/// Velocity induced at `pos` by one vortex and, if enabled, its wall images.
fn vortex_induced(params: &VortexStreetParams, pos: Vec2, vx_pos: Vec2, circulation: f64) -> Vec2 {
    let mut v = lamb_oseen(pos, vx_pos, circulation, params.core_radius);
    if params.wall_images {
        for m in wall_mirrors(params.domain, vx_pos) {
            v += lamb_oseen(pos, m, -circulation, params.core_radius);
        }
    }
    v
}

/// Total velocity at `pos` given vortices already advanced to `t`.
pub fn vortex_street_velocity(
    params: &VortexStreetParams,
    vortices: &[PointVortex],
    pos: Vec2,
    t: f64,
) -> Vec2 {
    let mut v = background(params, pos, t);
    for vx in vortices {
        v += vortex_induced(params, pos, vx.pos, vx.circulation);
    }
    v
}

/// Advances `state` through every integer step up to and including `t`.
///
/// Each step first moves existing vortices with the velocity of the previous
/// instant, then sheds on multiples of `shed_period`, then prunes.
pub fn advance_vortices(params: &VortexStreetParams, state: &mut VortexState, t: u64) {
    if state.shed_counts.len() != params.cylinders.len() {
        state.shed_counts = vec![0; params.cylinders.len()];
    }
    let first = match state.time {
        None => 0,
        Some(last) if t <= last => return,
        Some(last) => last + 1,
    };
    for step in first..=t {
        if step > 0 && !state.vortices.is_empty() {
            let prev = (step - 1) as f64;
            let moved: Vec<Vec2> = state
                .vortices
                .iter()
                .enumerate()
                .map(|(i, me)| {
                    let mut v = background(params, me.pos, prev);
                    for (j, other) in state.vortices.iter().enumerate() {
                        if i != j {
                            v += vortex_induced(params, me.pos, other.pos, other.circulation);
                        } else if params.wall_images {
                            for m in wall_mirrors(params.domain, me.pos) {
                                v += lamb_oseen(me.pos, m, -me.circulation, params.core_radius);
                            }
                        }
                    }
                    me.pos + v
                })
                .collect();
            for (vx, p) in state.vortices.iter_mut().zip(moved) {
                vx.pos = p;
            }
        }
        if step % params.shed_period == 0 {
            for (ci, count) in state.shed_counts.iter_mut().enumerate() {
                let positive = *count % 2 == 0;
                let sign = if positive { 1.0 } else { -1.0 };
                state.vortices.push(PointVortex {
                    pos: params.shed_point(ci, step as f64, positive),
                    circulation: sign * params.vortex_strength,
                    born: step,
                    cylinder: ci,
                });
                *count += 1;
            }
        }
        let d = params.domain;
        let m = params.drop_margin;
        let keep = Rect::new(d.x_min - m, d.x_max + m, d.y_min - m, d.y_max + m);
        state.vortices.retain(|v| keep.contains(v.pos));
        if state.vortices.len() > params.max_live_vortices {
            let excess = state.vortices.len() - params.max_live_vortices;
            // vortices are stored in shed order, so the front is the oldest
            state.vortices.drain(..excess);
        }
        state.time = Some(step);
    }
}

/// Vortex snapshots for every simulated step, grown on demand.
#[derive(Debug)]
struct History {
    state: VortexState,
    snapshots: Vec<Arc<[PointVortex]>>,
}

/// A vortex street queryable at any non-negative time.
///
/// Environment time `t` maps to street time `t + time_offset`, which lets a
/// single developed wake serve many episodes with different phases. The
/// snapshot history is shared between clones.
#[derive(Debug, Clone)]
pub struct VortexStreetField {
    params: Arc<VortexStreetParams>,
    history: Arc<RwLock<History>>,
    time_offset: u64,
    speed_bound: f64,
}

impl VortexStreetField {
    pub fn new(params: VortexStreetParams, time_offset: u64) -> Result<Self, FlowError> {
        params.validate()?;
        let speed_bound = Self::compute_speed_bound(&params);
        Ok(Self {
            params: Arc::new(params),
            history: Arc::new(RwLock::new(History {
                state: VortexState::new(),
                snapshots: Vec::new(),
            })),
            time_offset,
            speed_bound,
        })
    }

    /// Same street (and shared history) seen with a different phase.
    pub fn with_offset(&self, time_offset: u64) -> Self {
        Self {
            time_offset,
            ..self.clone()
        }
    }

    pub fn params(&self) -> &VortexStreetParams {
        &self.params
    }

    pub fn time_offset(&self) -> u64 {
        self.time_offset
    }

    /// Loose bound: free stream plus full blockage of every doublet, and every
    /// live vortex at its peak tangential speed, images included.
    fn compute_speed_bound(p: &VortexStreetParams) -> f64 {
        // max over s of (1 - exp(-s^2)) / s, attained near s = 1.1209
        const LAMB_OSEEN_PEAK: f64 = 0.638_161_6;
        let u = p.free_stream.norm();
        let copies = if p.wall_images { 3.0 } else { 1.0 };
        let blockage = if p.cylinders.is_empty() {
            u
        } else {
            u + copies * u * p.cylinders.len() as f64
        };
        let per_vortex = p.vortex_strength.abs() / (2.0 * PI * p.core_radius) * LAMB_OSEEN_PEAK;
        blockage + copies * per_vortex * p.max_live_vortices as f64
    }

    /// Vortices alive at street step `step`.
    pub fn snapshot(&self, step: u64) -> Arc<[PointVortex]> {
        let idx = step as usize;
        {
            let h = self.history.read().expect("vortex history lock poisoned");
            if let Some(s) = h.snapshots.get(idx) {
                return Arc::clone(s);
            }
        }
        let mut h = self.history.write().expect("vortex history lock poisoned");
        while h.snapshots.len() <= idx {
            let next = h.snapshots.len() as u64;
            let History { state, snapshots } = &mut *h;
            advance_vortices(&self.params, state, next);
            snapshots.push(Arc::from(state.vortices.as_slice()));
        }
        Arc::clone(&h.snapshots[idx])
    }

    fn velocity_at_step(&self, pos: Vec2, step: u64) -> Vec2 {
        let snap = self.snapshot(step);
        vortex_street_velocity(&self.params, &snap, pos, step as f64)
    }
}

impl FlowField for VortexStreetField {
    /// Integer times hit a snapshot exactly; fractional times interpolate
    /// linearly between the two neighbouring snapshots.
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        if !self.params.domain.contains(pos) || !(t >= 0.0) || !t.is_finite() {
            return Err(FlowError::OutOfDomain { pos, t });
        }
        let s = t + self.time_offset as f64;
        let k0 = s.floor();
        let frac = s - k0;
        let k0 = k0 as u64;
        let v0 = self.velocity_at_step(pos, k0);
        if frac == 0.0 {
            return Ok(v0);
        }
        let v1 = self.velocity_at_step(pos, k0 + 1);
        Ok(v0 * (1.0 - frac) + v1 * frac)
    }

    fn bounds(&self) -> Rect {
        self.params.domain
    }

    fn max_speed(&self) -> f64 {
        self.speed_bound
    }
}
