//! Named environment presets and the calibrated constants behind them.

use crate::flow::{
    FlowError, FlowField, GridError, GridFieldSeries, GyreField, TimeShifted, UniformFlow,
    VortexStreetField, VortexStreetParams,
};
use crate::geom::Rect;
use crate::gpr::GprHyperparams;
use crate::vehicle::VehicleParams;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

/// Free stream (units/step) of the cylinder presets, tuned so an unpowered
/// drifter crosses the 300-unit channel in about 1200 steps.
pub const CYL_FREE_STREAM: f64 = 0.242;

/// Peak flow speed measured over the three cylinder presets (the cyl-double
/// wake sets it). Vehicle thrust and gyre amplitudes are scaled to this.
pub const NOMINAL_MAX_FLOW_SPEED: f64 = 0.71;

/// Gyre amplitudes whose sampled peak speed equals [`NOMINAL_MAX_FLOW_SPEED`].
pub const GYRE2_AMPLITUDE: f64 = 0.075383;
pub const GYRE4_AMPLITUDE: f64 = 0.090436;

/// Steps the vortex street is run before any episode starts.
pub const SPINUP_STEPS: u64 = 1500;
/// Episode start phases are drawn from `[0, PHASE_SPAN)`.
pub const PHASE_SPAN: u64 = 500;

/// Sampling protocol for [`measure_max_speed`]: node lattice and instants.
pub const MEASURE_NX: usize = 301;
pub const MEASURE_NY: usize = 101;
pub const MEASURE_TIMES: usize = 20;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment preset '{0}' (expected still, gyre2, gyre4, cyl-static, cyl-osc, cyl-double or grid:<path>)")]
    UnknownPreset(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("loading grid {path}: {source}")]
    Grid { path: PathBuf, source: GridError },
    #[error("flow override of kind '{flow}' does not fit preset '{preset}'")]
    OverrideMismatch { preset: String, flow: &'static str },
    #[error(transparent)]
    Calibration(#[from] crate::vehicle::CalibrationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EnvPreset {
    Still,
    Gyre2,
    Gyre4,
    CylStatic,
    CylOsc,
    CylDouble,
    Grid(PathBuf),
}

impl EnvPreset {
    pub const BUILTIN: [EnvPreset; 6] = [
        EnvPreset::Still,
        EnvPreset::Gyre2,
        EnvPreset::Gyre4,
        EnvPreset::CylStatic,
        EnvPreset::CylOsc,
        EnvPreset::CylDouble,
    ];

    pub fn is_cylinder(&self) -> bool {
        matches!(
            self,
            EnvPreset::CylStatic | EnvPreset::CylOsc | EnvPreset::CylDouble
        )
    }
}

impl fmt::Display for EnvPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvPreset::Still => f.write_str("still"),
            EnvPreset::Gyre2 => f.write_str("gyre2"),
            EnvPreset::Gyre4 => f.write_str("gyre4"),
            EnvPreset::CylStatic => f.write_str("cyl-static"),
            EnvPreset::CylOsc => f.write_str("cyl-osc"),
            EnvPreset::CylDouble => f.write_str("cyl-double"),
            EnvPreset::Grid(p) => write!(f, "grid:{}", p.display()),
        }
    }
}

impl FromStr for EnvPreset {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "still" => EnvPreset::Still,
            "gyre2" => EnvPreset::Gyre2,
            "gyre4" => EnvPreset::Gyre4,
            "cyl-static" => EnvPreset::CylStatic,
            "cyl-osc" => EnvPreset::CylOsc,
            "cyl-double" => EnvPreset::CylDouble,
            other => match other.strip_prefix("grid:") {
                Some(path) if !path.is_empty() => EnvPreset::Grid(PathBuf::from(path)),
                _ => return Err(EnvError::UnknownPreset(other.to_string())),
            },
        })
    }
}

impl TryFrom<String> for EnvPreset {
    type Error = EnvError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EnvPreset> for String {
    fn from(p: EnvPreset) -> String {
        p.to_string()
    }
}

/// Parameters of the flow behind an environment. Any preset's parameters can
/// be replaced wholesale from a config file with one of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FlowSpec {
    Uniform { velocity: crate::Vec2, bounds: Rect },
    Gyre(GyreField),
    VortexStreet(VortexStreetParams),
}

impl FlowSpec {
    fn kind(&self) -> &'static str {
        match self {
            FlowSpec::Uniform { .. } => "uniform",
            FlowSpec::Gyre(_) => "gyre",
            FlowSpec::VortexStreet(_) => "vortex-street",
        }
    }

    pub fn for_preset(preset: &EnvPreset) -> Option<FlowSpec> {
        Some(match preset {
            EnvPreset::Still => FlowSpec::Uniform {
                velocity: crate::Vec2::ZERO,
                bounds: Rect::new(0.0, 300.0, 0.0, 100.0),
            },
            EnvPreset::Gyre2 => FlowSpec::Gyre(GyreField::double(GYRE2_AMPLITUDE)),
            EnvPreset::Gyre4 => FlowSpec::Gyre(GyreField::quad(GYRE4_AMPLITUDE)),
            EnvPreset::CylStatic => {
                FlowSpec::VortexStreet(VortexStreetParams::single_static(CYL_FREE_STREAM))
            }
            EnvPreset::CylOsc => {
                FlowSpec::VortexStreet(VortexStreetParams::single_oscillating(CYL_FREE_STREAM))
            }
            EnvPreset::CylDouble => {
                FlowSpec::VortexStreet(VortexStreetParams::double_static(CYL_FREE_STREAM))
            }
            EnvPreset::Grid(_) => return None,
        })
    }
}

#[derive(Debug, Clone)]
enum Backing {
    Uniform(UniformFlow),
    Gyre(GyreField),
    Vortex(VortexStreetField),
    Grid(Arc<GridFieldSeries>),
}

/// A ready-to-use environment: the flow plus the scales derived from it.
///
/// Cloning is cheap and clones share the vortex-street history, so a single
/// `Environment` can feed many concurrent episodes.
#[derive(Debug, Clone)]
pub struct Environment {
    preset: EnvPreset,
    backing: Backing,
}

impl Environment {
    pub fn from_preset(preset: &EnvPreset) -> Result<Self, EnvError> {
        Self::with_flow(preset, None)
    }

    /// Builds `preset`, replacing its flow parameters with `flow` if given.
    pub fn with_flow(preset: &EnvPreset, flow: Option<FlowSpec>) -> Result<Self, EnvError> {
        let backing = match preset {
            EnvPreset::Grid(path) => {
                if let Some(f) = flow {
                    return Err(EnvError::OverrideMismatch {
                        preset: preset.to_string(),
                        flow: f.kind(),
                    });
                }
                let series = crate::flow::gridded::load_grid_series(path).map_err(|source| {
                    EnvError::Grid {
                        path: path.clone(),
                        source,
                    }
                })?;
                Backing::Grid(Arc::new(series))
            }
            _ => {
                let default = FlowSpec::for_preset(preset).expect("builtin preset has a flow");
                let spec = match flow {
                    None => default,
                    Some(f) if f.kind() == default.kind() => f,
                    Some(f) => {
                        return Err(EnvError::OverrideMismatch {
                            preset: preset.to_string(),
                            flow: f.kind(),
                        })
                    }
                };
                match spec {
                    FlowSpec::Uniform { velocity, bounds } => {
                        if !bounds.is_valid() || !velocity.is_finite() {
                            return Err(FlowError::InvalidParams("bad uniform flow".into()).into());
                        }
                        Backing::Uniform(UniformFlow::new(velocity, bounds))
                    }
                    FlowSpec::Gyre(g) => {
                        Backing::Gyre(GyreField::new(g.params, g.length_scale, g.time_scale)?)
                    }
                    FlowSpec::VortexStreet(p) => Backing::Vortex(VortexStreetField::new(p, 0)?),
                }
            }
        };
        Ok(Self {
            preset: preset.clone(),
            backing,
        })
    }

    /// Wraps an already-loaded gridded series.
    pub fn from_grid(path: PathBuf, series: GridFieldSeries) -> Self {
        Self {
            preset: EnvPreset::Grid(path),
            backing: Backing::Grid(Arc::new(series)),
        }
    }

    pub fn preset(&self) -> &EnvPreset {
        &self.preset
    }

    pub fn bounds(&self) -> Rect {
        match &self.backing {
            Backing::Uniform(f) => f.bounds(),
            Backing::Gyre(f) => f.bounds(),
            Backing::Vortex(f) => f.bounds(),
            Backing::Grid(f) => f.bounds(),
        }
    }

    /// Flow parameters in their config-file form (`None` for gridded data).
    pub fn flow_spec(&self) -> Option<FlowSpec> {
        match &self.backing {
            Backing::Uniform(f) => Some(FlowSpec::Uniform {
                velocity: f.velocity,
                bounds: f.bounds,
            }),
            Backing::Gyre(g) => Some(FlowSpec::Gyre(g.clone())),
            Backing::Vortex(v) => Some(FlowSpec::VortexStreet(v.params().clone())),
            Backing::Grid(_) => None,
        }
    }

    /// Speed scale used for the GPR prior. Gridded data supplies its own
    /// peak; everything else uses the nominal training-environment speed.
    pub fn speed_scale(&self) -> f64 {
        match &self.backing {
            Backing::Grid(g) => g.max_speed(),
            _ => NOMINAL_MAX_FLOW_SPEED,
        }
    }

    /// The vehicle is the same in every environment: thrust is set against
    /// the nominal peak flow speed.
    pub fn vehicle_params(&self) -> VehicleParams {
        VehicleParams::for_max_flow_speed(NOMINAL_MAX_FLOW_SPEED)
    }

    pub fn gpr_hyperparams(&self) -> GprHyperparams {
        GprHyperparams::for_max_speed(self.speed_scale().max(1e-6))
    }

    /// Largest start phase an episode may use. Gridded fields must still
    /// cover `horizon` steps after the phase.
    pub fn phase_span(&self, horizon: u64) -> u64 {
        match &self.backing {
            Backing::Uniform(_) => 1,
            Backing::Grid(g) => {
                let spare = (g.duration() - horizon as f64).floor();
                if spare >= 1.0 {
                    spare as u64
                } else {
                    1
                }
            }
            _ => PHASE_SPAN,
        }
    }

    /// The flow as seen by an episode starting at `phase`: episode time 0 maps
    /// to field time `phase` (plus the spin-up for vortex streets).
    pub fn field(&self, phase: u64) -> Arc<dyn FlowField> {
        match &self.backing {
            Backing::Uniform(f) => Arc::new(*f),
            Backing::Gyre(g) => Arc::new(TimeShifted::new(g.clone(), phase as f64)),
            Backing::Vortex(v) => Arc::new(v.with_offset(SPINUP_STEPS + phase)),
            Backing::Grid(g) => Arc::new(TimeShifted::new(Arc::clone(g), phase as f64)),
        }
    }
}

/// Measured peak speed of an environment: a [`MEASURE_NX`]×[`MEASURE_NY`]
/// lattice at [`MEASURE_TIMES`] instants spread over one phase span.
pub fn measure_max_speed(env: &Environment) -> Result<f64, FlowError> {
    let field = env.field(0);
    let span = env.phase_span(0) as f64;
    let times: Vec<f64> = (0..MEASURE_TIMES)
        .map(|k| span * k as f64 / MEASURE_TIMES as f64)
        .collect();
    crate::flow::sampled_max_speed(&*field, MEASURE_NX, MEASURE_NY, &times)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftFit {
    pub free_stream: f64,
    pub mean_steps: f64,
    pub iterations: usize,
}

/// Rescales the free stream of `base` until the mean unpowered crossing
/// over `releases` heights (after spin-up) is within half a step of
/// `target`, or `max_iter` rounds have run. Crossing time is close to
/// inversely proportional to the free stream, so each round multiplies it by
/// `measured / target`.
pub fn fit_free_stream(
    base: &VortexStreetParams,
    vehicle: &VehicleParams,
    target: f64,
    releases: usize,
    max_iter: usize,
) -> Result<DriftFit, EnvError> {
    let mut params = base.clone();
    let mut fit = DriftFit {
        free_stream: params.free_stream.x,
        mean_steps: f64::NAN,
        iterations: 0,
    };
    for it in 1..=max_iter.max(1) {
        let field = VortexStreetField::new(params.clone(), SPINUP_STEPS)?;
        let mean = crate::vehicle::mean_drift_crossing(vehicle, &field, releases)?;
        fit = DriftFit {
            free_stream: params.free_stream.x,
            mean_steps: mean,
            iterations: it,
        };
        if (mean - target).abs() <= 0.5 {
            break;
        }
        params.free_stream.x *= mean / target;
    }
    Ok(fit)
}
