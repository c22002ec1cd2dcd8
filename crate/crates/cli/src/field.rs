use crate::commands::{csv_string, emit};
use crate::FieldCommand;
use anyhow::{bail, Context, Result};
use khalasi_core::env::{measure_max_speed, EnvPreset, Environment};
use khalasi_core::flow::gridded::load_grid_series;
use khalasi_core::flow::GridFieldSeries;
use khalasi_core::{Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// A preset name, `grid:<path>`, or a bare path to a UVGRID file.
fn source(s: &str) -> Result<EnvPreset> {
    match s.parse::<EnvPreset>() {
        Ok(p) => Ok(p),
        Err(e) => {
            let path = Path::new(s);
            if path.is_file() {
                Ok(EnvPreset::Grid(PathBuf::from(s)))
            } else if s.contains(std::path::MAIN_SEPARATOR) || path.extension().is_some() {
                bail!("{s}: no such file (and not a preset name)")
            } else {
                Err(e.into())
            }
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Info {
    Uvgrid {
        path: PathBuf,
        nx: usize,
        ny: usize,
        nt: usize,
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        dt: f64,
        bounds: Rect,
        duration: f64,
        max_speed: f64,
    },
    Preset {
        env: String,
        bounds: Rect,
        measured_max_speed: f64,
        flow: Option<khalasi_core::env::FlowSpec>,
    },
}

#[derive(Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
    #[serde(default)]
    t: f64,
}

pub fn run(cmd: &FieldCommand, out: Option<&Path>) -> Result<()> {
    match cmd {
        FieldCommand::Info { source: s } => {
            let info = match source(s)? {
                EnvPreset::Grid(path) => {
                    let g = load_grid_series(&path)
                        .with_context(|| format!("loading {}", path.display()))?;
                    Info::Uvgrid {
                        nx: g.nx,
                        ny: g.ny,
                        nt: g.nt,
                        x0: g.x0,
                        y0: g.y0,
                        dx: g.dx,
                        dy: g.dy,
                        dt: g.dt,
                        bounds: g.extent(),
                        duration: g.duration(),
                        max_speed: khalasi_core::flow::FlowField::max_speed(&g),
                        path,
                    }
                }
                preset => {
                    let env = Environment::from_preset(&preset)?;
                    Info::Preset {
                        env: preset.to_string(),
                        bounds: env.bounds(),
                        measured_max_speed: measure_max_speed(&env)?,
                        flow: env.flow_spec(),
                    }
                }
            };
            let mut text = serde_json::to_string_pretty(&info)?;
            text.push('\n');
            emit(out, &text)
        }
        FieldCommand::Sample {
            source: s,
            at,
            points,
        } => {
            let env = Environment::from_preset(&source(s)?)?;
            let mut pts = at.clone();
            if let Some(file) = points {
                let mut r = csv::Reader::from_path(file)
                    .with_context(|| format!("reading {}", file.display()))?;
                for row in r.deserialize::<PointRow>() {
                    let row = row.with_context(|| format!("parsing {}", file.display()))?;
                    pts.push((row.x, row.y, row.t));
                }
            }
            if pts.is_empty() {
                bail!("no sample points (use --at or --points)");
            }
            let field = env.field(0);
            let mut rows = Vec::with_capacity(pts.len());
            for (x, y, t) in pts {
                let v = field
                    .velocity(Vec2::new(x, y), t)
                    .with_context(|| format!("sampling ({x}, {y}) at t={t}"))?;
                rows.push(vec![
                    x.to_string(),
                    y.to_string(),
                    t.to_string(),
                    v.x.to_string(),
                    v.y.to_string(),
                ]);
            }
            emit(out, &csv_string(&["x", "y", "t", "u", "v"], rows)?)
        }
        FieldCommand::Refine { input, factor } => {
            let out = out.context("refine needs --out")?;
            let g =
                load_grid_series(input).with_context(|| format!("loading {}", input.display()))?;
            let fine = g.refine(*factor as usize)?;
            fine.save(out)
                .with_context(|| format!("writing {}", out.display()))?;
            log::info!(
                "{}×{}×{} -> {}×{}×{}",
                g.nx,
                g.ny,
                g.nt,
                fine.nx,
                fine.ny,
                fine.nt
            );
            Ok(())
        }
        FieldCommand::Export {
            source: s,
            nx,
            ny,
            nt,
            dt,
            phase,
        } => {
            let out = out.context("export needs --out")?;
            if *nx < 2 || *ny < 2 || *nt < 2 {
                bail!("--nx, --ny and --nt must be at least 2");
            }
            if !(*dt > 0.0 && dt.is_finite()) {
                bail!("--dt must be positive");
            }
            let env = Environment::from_preset(&source(s)?)?;
            let field = env.field(*phase);
            let b = env.bounds();
            let (dx, dy) = (b.width() / (*nx - 1) as f64, b.height() / (*ny - 1) as f64);
            let mut failure = None;
            let series = GridFieldSeries::from_fn(
                (*nx, *ny, *nt),
                (b.x_min, b.y_min),
                (dx, dy, *dt),
                |x, y, t| {
                    // lattice nodes on the far edge can round just outside the bounds
                    let p = Vec2::new(x.min(b.x_max), y.min(b.y_max));
                    field.velocity(p, t).unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        Vec2::ZERO
                    })
                },
            )?;
            if let Some(e) = failure {
                return Err(e).context("sampling the preset");
            }
            series
                .save(out)
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
    }
}
