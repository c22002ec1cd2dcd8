//! Local flow reconstruction from single-point measurements.
//!
//! A sliding window of timestamped velocity samples feeds two independent
//! Gaussian processes, one per velocity component, over inputs `(x, y, t)`
//! with a separable squared-exponential kernel
//!
//! ```text
//! k = σ_f² · exp(−‖Δp‖² / 2ℓ_s² − Δt² / 2ℓ_t²) + σ_n² · 1[same sample]
//! ```
//!
//! Both components share inputs and hyperparameters, so they share one
//! Cholesky factor and the same posterior variance.

use crate::flow::{FlowError, FlowField};
use crate::geom::{Rect, Vec2};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 55;
pub const GRID_SIDE: usize = 64;
pub const GRID_SPACING: f64 = 0.5;
pub const NOISE_FLOOR: f64 = 1e-10;
const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GprError {
    #[error("sample time {t} is not after the newest stored time {newest}")]
    NonMonotoneTime { t: f64, newest: f64 },
    #[error("non-finite sample")]
    NonFinite,
    #[error("window is empty")]
    EmptyWindow,
    #[error("window capacity must be at least 1")]
    ZeroCapacity,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("Gram matrix not positive definite even with jitter {jitter:e}")]
    Factorization { jitter: f64 },
    #[error("every grid cell lies outside the truth field")]
    NoOverlap,
    #[error("invalid sweep: {0}")]
    Protocol(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub pos: Vec2,
    pub t: f64,
    pub velocity: Vec2,
}

/// Ring buffer of the most recent `capacity` measurements, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSampleWindow {
    capacity: usize,
    entries: VecDeque<FlowSample>,
}

impl Default for FlowSampleWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW).expect("default capacity is positive")
    }
}

impl FlowSampleWindow {
    pub fn new(capacity: usize) -> Result<Self, GprError> {
        if capacity == 0 {
            return Err(GprError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FlowSample> {
        self.entries.iter()
    }

    pub fn newest(&self) -> Option<&FlowSample> {
        self.entries.back()
    }

    pub fn oldest(&self) -> Option<&FlowSample> {
        self.entries.front()
    }

    pub fn push(&mut self, pos: Vec2, t: f64, velocity: Vec2) -> Result<(), GprError> {
        if !pos.is_finite() || !t.is_finite() || !velocity.is_finite() {
            return Err(GprError::NonFinite);
        }
        if let Some(last) = self.entries.back() {
            if !(t > last.t) {
                return Err(GprError::NonMonotoneTime { t, newest: last.t });
            }
        }
        self.entries.push_back(FlowSample { pos, t, velocity });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Free-function form of [`FlowSampleWindow::push`].
pub fn push_sample(
    window: &mut FlowSampleWindow,
    pos: Vec2,
    t: f64,
    v: Vec2,
) -> Result<(), GprError> {
    window.push(pos, t, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GprHyperparams {
    /// σ_f², velocity².
    pub signal_var: f64,
    /// ℓ_s, length units.
    pub space_lengthscale: f64,
    /// ℓ_t, steps.
    pub time_lengthscale: f64,
    /// σ_n², velocity².
    pub noise_var: f64,
}

impl GprHyperparams {
    pub const DEFAULT_SPACE_LENGTHSCALE: f64 = 10.0;
    pub const DEFAULT_TIME_LENGTHSCALE: f64 = 25.0;

    /// Defaults for a field whose speeds reach `max_speed`:
    /// `σ_f = max_speed`, `σ_n = 0.01 σ_f`.
    pub fn for_max_speed(max_speed: f64) -> Self {
        let s2 = max_speed * max_speed;
        Self {
            signal_var: s2,
            space_lengthscale: Self::DEFAULT_SPACE_LENGTHSCALE,
            time_lengthscale: Self::DEFAULT_TIME_LENGTHSCALE,
            noise_var: (1e-4 * s2).max(NOISE_FLOOR),
        }
    }

    pub fn validate(&self) -> Result<(), GprError> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !ok(self.signal_var) || !ok(self.space_lengthscale) || !ok(self.time_lengthscale) {
            return Err(GprError::InvalidHyperparams(
                "signal variance and lengthscales must be positive".into(),
            ));
        }
        if !(self.noise_var >= NOISE_FLOOR) || !self.noise_var.is_finite() {
            return Err(GprError::InvalidHyperparams(format!(
                "noise variance must be at least {NOISE_FLOOR:e}"
            )));
        }
        Ok(())
    }

    /// Noise-free covariance between two inputs.
    pub fn kernel(&self, p: Vec2, t: f64, q: Vec2, s: f64) -> f64 {
        let d2 = (p - q).norm_sq();
        let dt = t - s;
        let ls2 = self.space_lengthscale * self.space_lengthscale;
        let lt2 = self.time_lengthscale * self.time_lengthscale;
        self.signal_var * (-d2 / (2.0 * ls2) - dt * dt / (2.0 * lt2)).exp()
    }
}

/// Geometry of the agent-centric query lattice: `side × side` nodes spaced
/// `spacing` apart, with node `(side/2, side/2)` on the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub side: usize,
    pub spacing: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            side: GRID_SIDE,
            spacing: GRID_SPACING,
        }
    }
}

impl GridSpec {
    pub fn center_index(&self) -> usize {
        self.side / 2
    }

    pub fn offset(&self, i: usize, j: usize) -> Vec2 {
        let c = self.center_index() as f64;
        Vec2::new((i as f64 - c) * self.spacing, (j as f64 - c) * self.spacing)
    }

    pub fn node(&self, center: Vec2, i: usize, j: usize) -> Vec2 {
        center + self.offset(i, j)
    }
}

/// Agent-centric reconstructed maps. Arrays are row-major with the row index
/// running along y: entry `j * side + i` is node `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconGrid {
    pub spec: GridSpec,
    pub center: Vec2,
    pub t: f64,
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub std_x: Vec<f64>,
    pub std_y: Vec<f64>,
}

impl ReconGrid {
    pub fn side(&self) -> usize {
        self.spec.side
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.spec.side + i
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        self.spec.node(self.center, i, j)
    }

    /// Bounding box of the node lattice.
    pub fn extent(&self) -> Rect {
        let lo = self.node(0, 0);
        let hi = self.node(self.spec.side - 1, self.spec.side - 1);
        Rect::new(lo.x, hi.x, lo.y, hi.y)
    }

    /// `(∂V'x/∂x, ∂V'y/∂y)` by central differences around the center node.
    pub fn center_gradients(&self) -> (f64, f64) {
        let c = self.spec.center_index();
        let h2 = 2.0 * self.spec.spacing;
        let gx = (self.mean_x[self.idx(c + 1, c)] - self.mean_x[self.idx(c - 1, c)]) / h2;
        let gy = (self.mean_y[self.idx(c, c + 1)] - self.mean_y[self.idx(c, c - 1)]) / h2;
        (gx, gy)
    }

    /// Maps stacked channel-last, `side × side × 4`, row-major:
    /// `[V'x, V'y, σx, σy]` per node.
    pub fn stacked(&self) -> Vec<f64> {
        let n = self.mean_x.len();
        let mut out = Vec::with_capacity(4 * n);
        for k in 0..n {
            out.extend_from_slice(&[self.mean_x[k], self.mean_y[k], self.std_x[k], self.std_y[k]]);
        }
        out
    }

    pub fn from_stacked(spec: GridSpec, center: Vec2, t: f64, data: &[f64]) -> Option<Self> {
        let n = spec.side * spec.side;
        if data.len() != 4 * n {
            return None;
        }
        let pick = |c: usize| (0..n).map(|k| data[4 * k + c]).collect::<Vec<_>>();
        Some(Self {
            spec,
            center,
            t,
            mean_x: pick(0),
            mean_y: pick(1),
            std_x: pick(2),
            std_y: pick(3),
        })
    }
}

/// Fitted posterior for one window; reusable for any number of queries.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    hp: GprHyperparams,
    inputs: Vec<(Vec2, f64)>,
    chol: Cholesky<f64, Dyn>,
    alpha_x: DVector<f64>,
    alpha_y: DVector<f64>,
    jitter: f64,
}

impl GpPosterior {
    pub fn fit(window: &FlowSampleWindow, hp: &GprHyperparams) -> Result<Self, GprError> {
        hp.validate()?;
        if window.is_empty() {
            return Err(GprError::EmptyWindow);
        }
        let inputs: Vec<(Vec2, f64)> = window.iter().map(|s| (s.pos, s.t)).collect();
        let n = inputs.len();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            hp.kernel(inputs[i].0, inputs[i].1, inputs[j].0, inputs[j].1)
        });
        let mut jitter = 0.0;
        let chol = loop {
            let mut k = gram.clone();
            for i in 0..n {
                k[(i, i)] += hp.noise_var + jitter;
            }
            if let Some(c) = Cholesky::new(k) {
                break c;
            }
            jitter = if jitter == 0.0 {
                NOISE_FLOOR
            } else {
                jitter * 10.0
            };
            if jitter > MAX_JITTER * (1.0 + 1e-9) {
                return Err(GprError::Factorization {
                    jitter: jitter / 10.0,
                });
            }
        };
        let yx = DVector::from_iterator(n, window.iter().map(|s| s.velocity.x));
        let yy = DVector::from_iterator(n, window.iter().map(|s| s.velocity.y));
        let alpha_x = chol.solve(&yx);
        let alpha_y = chol.solve(&yy);
        Ok(Self {
            hp: *hp,
            inputs,
            chol,
            alpha_x,
            alpha_y,
            jitter,
        })
    }

    /// Extra diagonal jitter that was needed for the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross_cov(&self, p: Vec2, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|&(q, s)| self.hp.kernel(p, t, q, s)),
        )
    }

    fn mean_from(&self, k: impl Iterator<Item = f64> + Clone) -> Vec2 {
        let mut mx = 0.0;
        let mut my = 0.0;
        for (i, ki) in k.enumerate() {
            mx += ki * self.alpha_x[i];
            my += ki * self.alpha_y[i];
        }
        Vec2::new(mx, my)
    }

    pub fn mean(&self, p: Vec2, t: f64) -> Vec2 {
        let k = self.cross_cov(p, t);
        self.mean_from(k.iter().copied())
    }

    /// Posterior mean and standard deviation (shared by both components).
    pub fn predict(&self, p: Vec2, t: f64) -> (Vec2, f64) {
        let k = self.cross_cov(p, t);
        let mean = self.mean_from(k.iter().copied());
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a non-zero diagonal");
        let var = (self.hp.signal_var - v.norm_squared()).max(0.0);
        (mean, var.sqrt())
    }

    /// Central-difference `(∂V'x/∂x, ∂V'y/∂y)` at `center`, evaluated at the
    /// same points the grid would use.
    pub fn center_gradients(&self, center: Vec2, t: f64, spec: &GridSpec) -> (f64, f64) {
        let c = spec.center_index();
        let h2 = 2.0 * spec.spacing;
        let gx = (self.mean(spec.node(center, c + 1, c), t).x
            - self.mean(spec.node(center, c - 1, c), t).x)
            / h2;
        let gy = (self.mean(spec.node(center, c, c + 1), t).y
            - self.mean(spec.node(center, c, c - 1), t).y)
            / h2;
        (gx, gy)
    }

    pub fn grid(&self, center: Vec2, t: f64, spec: &GridSpec) -> ReconGrid {
        let n = self.inputs.len();
        let side = spec.side;
        let q = side * side;
        let mut kstar = DMatrix::<f64>::zeros(n, q);
        for j in 0..side {
            for i in 0..side {
                let col = j * side + i;
                let p = spec.node(center, i, j);
                for (r, &(xp, s)) in self.inputs.iter().enumerate() {
                    kstar[(r, col)] = self.hp.kernel(p, t, xp, s);
                }
            }
        }
        let mut mean_x = Vec::with_capacity(q);
        let mut mean_y = Vec::with_capacity(q);
        for col in 0..q {
            let m = self.mean_from(kstar.column(col).iter().copied());
            mean_x.push(m.x);
            mean_y.push(m.y);
        }
        self.chol.l_dirty().solve_lower_triangular_mut(&mut kstar);
        let std: Vec<f64> = kstar
            .column_iter()
            .map(|v| (self.hp.signal_var - v.norm_squared()).max(0.0).sqrt())
            .collect();
        ReconGrid {
            spec: *spec,
            center,
            t,
            mean_x,
            mean_y,
            std_x: std.clone(),
            std_y: std,
        }
    }
}

/// Posterior maps on the agent-centric lattice around `center` at `t_now`.
pub fn reconstruct(
    window: &FlowSampleWindow,
    hp: &GprHyperparams,
    center: Vec2,
    t_now: f64,
    spec: &GridSpec,
) -> Result<ReconGrid, GprError> {
    Ok(GpPosterior::fit(window, hp)?.grid(center, t_now, spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaeReport {
    pub mae: f64,
    /// Nodes that lay inside the truth field's bounds.
    pub used_cells: usize,
    pub excluded_cells: usize,
}

/// Mean absolute error of the mean maps against a reference field, over both
/// components of every node inside the reference bounds.
pub fn mae_vs_truth<F: FlowField + ?Sized>(
    grid: &ReconGrid,
    truth: &F,
    t: f64,
) -> Result<MaeReport, GprError> {
    let bounds = truth.bounds();
    let side = grid.side();
    let mut sum = 0.0;
    let mut used = 0usize;
    for j in 0..side {
        for i in 0..side {
            let p = grid.node(i, j);
            if !bounds.contains(p) {
                continue;
            }
            let v = truth.velocity(p, t)?;
            let k = grid.idx(i, j);
            sum += (grid.mean_x[k] - v.x).abs() + (grid.mean_y[k] - v.y).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(GprError::NoOverlap);
    }
    Ok(MaeReport {
        mae: sum / (2 * used) as f64,
        used_cells: used,
        excluded_cells: side * side - used,
    })
}

/// Dummy-trajectory protocol for window-size sweeps: straight horizontal
/// passes at evenly spaced heights, reconstructing at the agent every
/// `eval_every` steps once the largest window has filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    pub passes: usize,
    /// Steps per pass.
    pub steps: usize,
    pub eval_every: usize,
    /// Fraction of the domain width covered by each pass, starting at 10%.
    pub span: f64,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self {
            passes: 3,
            steps: 300,
            eval_every: 10,
            span: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowMae {
    pub window_size: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub evaluations: usize,
}

impl SweepProtocol {
    pub fn position(&self, bounds: Rect, pass: usize, step: usize) -> Vec2 {
        let y = bounds.y_min + bounds.height() * (pass + 1) as f64 / (self.passes + 1) as f64;
        let x0 = bounds.x_min + 0.1 * bounds.width();
        let speed = self.span * bounds.width() / self.steps as f64;
        Vec2::new(x0 + speed * step as f64, y)
    }

    /// MAE of the reconstruction along every pass, per window size. The
    /// same instants are evaluated for every window.
    pub fn sweep<F: FlowField + ?Sized>(
        &self,
        field: &F,
        hp: &GprHyperparams,
        spec: &GridSpec,
        windows: &[usize],
    ) -> Result<Vec<WindowMae>, GprError> {
        let warmup = windows.iter().copied().max().unwrap_or(0);
        if self.passes == 0 || self.eval_every == 0 || self.steps <= warmup {
            return Err(GprError::Protocol(format!(
                "{} steps cannot fill a {warmup}-sample window",
                self.steps
            )));
        }
        let bounds = field.bounds();
        windows
            .iter()
            .map(|&w| {
                let mut maes = Vec::new();
                for pass in 0..self.passes {
                    let mut win = FlowSampleWindow::new(w)?;
                    for step in 0..self.steps {
                        let t = step as f64;
                        let p = self.position(bounds, pass, step);
                        win.push(p, t, field.velocity(p, t)?)?;
                        if step >= warmup && (step - warmup) % self.eval_every == 0 {
                            let grid = reconstruct(&win, hp, p, t, spec)?;
                            maes.push(mae_vs_truth(&grid, field, t)?.mae);
                        }
                    }
                }
                let n = maes.len() as f64;
                let mean = maes.iter().sum::<f64>() / n;
                let var = maes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
                Ok(WindowMae {
                    window_size: w,
                    mae_mean: mean,
                    mae_std: var.sqrt(),
                    evaluations: maes.len(),
                })
            })
            .collect()
    }
}
