use crate::commands::emit;
use crate::{Metric, PlotCommand};
use anyhow::{bail, Context, Result};
use khalasi_core::env::{EnvPreset, Environment, FlowSpec, SPINUP_STEPS};
use khalasi_core::spawn::GRID10_GOAL;
use khalasi_core::{Rect, Vec2};
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::Path;

const PX: f64 = 3.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Viridis sampled at five stops, linearly interpolated.
fn viridis(v: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let x = v.clamp(0.0, 1.0) * 4.0;
    let k = (x.floor() as usize).min(3);
    let f = x - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

/// Maps environment coordinates to SVG pixels (y up).
struct Canvas {
    area: Rect,
    body: String,
}

impl Canvas {
    fn new(area: Rect) -> Self {
        Self {
            area,
            body: String::new(),
        }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.area.x_min) * PX,
            MARGIN + (self.area.y_max - p.y) * PX,
        )
    }

    fn width(&self) -> f64 {
        self.area.width() * PX + 2.0 * MARGIN
    }

    fn height(&self) -> f64 {
        self.area.height() * PX + 2.0 * MARGIN + 30.0
    }

    fn frame(&mut self, title: &str) {
        let (x0, y0) = self.px(Vec2::new(self.area.x_min, self.area.y_max));
        let (w, h) = (self.area.width() * PX, self.area.height() * PX);
        let _ = writeln!(
            self.body,
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#333" stroke-width="1"/>"##
        );
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14">{}</text>"#,
            MARGIN,
            MARGIN - 12.0,
            escape(title)
        );
        for (p, anchor, label) in [
            (
                Vec2::new(self.area.x_min, self.area.y_min),
                "start",
                format!("({}, {})", self.area.x_min, self.area.y_min),
            ),
            (
                Vec2::new(self.area.x_max, self.area.y_min),
                "end",
                format!("({}, {})", self.area.x_max, self.area.y_min),
            ),
        ] {
            let (x, y) = self.px(p);
            let _ = writeln!(
                self.body,
                r##"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="{anchor}" fill="#555">{label}</text>"##,
                y + 14.0
            );
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width(),
            self.height(),
            self.width(),
            self.height(),
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Deserialize)]
struct HeatRow {
    x: f64,
    y: f64,
    success_rate: Option<f64>,
    mean_energy: Option<f64>,
    #[serde(default)]
    env: String,
    #[serde(default)]
    policy: String,
}

#[derive(Deserialize)]
struct TrajRow {
    x: f64,
    y: f64,
}

fn spacing(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn heatmap(
    input: &Path,
    metric: Metric,
    env: Option<&str>,
    policy: Option<&str>,
) -> Result<String> {
    let mut r =
        csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    let mut rows = Vec::new();
    for row in r.deserialize::<HeatRow>() {
        rows.push(row.with_context(|| format!("parsing {}", input.display()))?);
    }
    rows.retain(|h| env.is_none_or(|e| h.env == e) && policy.is_none_or(|p| h.policy == p));
    let Some(first) = rows.first() else {
        bail!("{} has no matching rows", input.display());
    };
    let (env, policy) = (first.env.clone(), first.policy.clone());
    let before = rows.len();
    rows.retain(|h| h.env == env && h.policy == policy);
    if rows.len() < before {
        log::warn!("heatmap has several env/policy combinations; plotting {env} / {policy} (use --env and --policy)");
    }
    let value = |h: &HeatRow| match metric {
        Metric::SuccessRate => h.success_rate,
        Metric::MeanEnergy => h.mean_energy,
    };
    let values: Vec<f64> = rows.iter().filter_map(value).collect();
    let (lo, hi) = match metric {
        Metric::SuccessRate => (0.0, 1.0),
        Metric::MeanEnergy => (
            values.iter().copied().fold(f64::INFINITY, f64::min),
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
    };
    let dx = spacing(rows.iter().map(|h| h.x).collect());
    let dy = spacing(rows.iter().map(|h| h.y).collect());
    let dx = if dx.is_finite() { dx } else { 10.0 };
    let dy = if dy.is_finite() { dy } else { 10.0 };
    let env_bounds = env
        .parse::<EnvPreset>()
        .ok()
        .filter(|p| !matches!(p, EnvPreset::Grid(_)))
        .and_then(|p| Environment::from_preset(&p).ok())
        .map(|e| e.bounds());
    let cells = Rect::new(
        rows.iter().map(|h| h.x).fold(f64::INFINITY, f64::min) - dx / 2.0,
        rows.iter().map(|h| h.x).fold(f64::NEG_INFINITY, f64::max) + dx / 2.0,
        rows.iter().map(|h| h.y).fold(f64::INFINITY, f64::min) - dy / 2.0,
        rows.iter().map(|h| h.y).fold(f64::NEG_INFINITY, f64::max) + dy / 2.0,
    );
    let mut c = Canvas::new(env_bounds.unwrap_or(cells));
    let label = match metric {
        Metric::SuccessRate => "success rate",
        Metric::MeanEnergy => "mean energy (successes)",
    };
    for h in &rows {
        let (x, y) = c.px(Vec2::new(h.x - dx / 2.0, h.y + dy / 2.0));
        let fill = match value(h) {
            Some(v) if hi > lo => viridis((v - lo) / (hi - lo)),
            Some(_) => viridis(1.0),
            None => "#cccccc".to_string(),
        };
        let _ = writeln!(
            c.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            dx * PX,
            dy * PX
        );
    }
    let (gx, gy) = c.px(GRID10_GOAL);
    let _ = writeln!(
        c.body,
        r##"<circle cx="{gx:.2}" cy="{gy:.2}" r="{:.2}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
        khalasi_core::reward::RewardConfig::default().target_radius * PX
    );
    c.frame(&format!("{label}: {env} / {policy}"));
    // color bar
    let (bx, by) = (MARGIN, c.height() - 24.0);
    for k in 0..50 {
        let _ = writeln!(
            c.body,
            r#"<rect x="{:.2}" y="{by:.2}" width="4" height="10" fill="{}"/>"#,
            bx + 4.0 * k as f64,
            viridis(k as f64 / 49.0)
        );
    }
    let _ = writeln!(
        c.body,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{lo:.3} … {hi:.3} (grey: no data)</text>"#,
        bx + 206.0,
        by + 9.0
    );
    Ok(c.finish())
}

fn trajectory(
    inputs: &[std::path::PathBuf],
    env: Option<&str>,
    time: f64,
    goal: Option<(f64, f64)>,
) -> Result<String> {
    let mut paths = Vec::new();
    for input in inputs {
        let mut r = csv::Reader::from_path(input)
            .with_context(|| format!("reading {}", input.display()))?;
        let mut pts = Vec::new();
        for row in r.deserialize::<TrajRow>() {
            let row = row.with_context(|| format!("parsing {}", input.display()))?;
            pts.push(Vec2::new(row.x, row.y));
        }
        if pts.is_empty() {
            bail!("{} has no rows", input.display());
        }
        paths.push((input, pts));
    }
    let env = env
        .map(|e| e.parse::<EnvPreset>())
        .transpose()?
        .map(|p| Environment::from_preset(&p))
        .transpose()?;
    let area = match &env {
        Some(e) => e.bounds(),
        None => {
            let all = paths.iter().flat_map(|(_, p)| p.iter());
            let (mut b, pad) = (
                Rect::new(
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                ),
                5.0,
            );
            for p in all {
                b.x_min = b.x_min.min(p.x - pad);
                b.x_max = b.x_max.max(p.x + pad);
                b.y_min = b.y_min.min(p.y - pad);
                b.y_max = b.y_max.max(p.y + pad);
            }
            b
        }
    };
    let mut c = Canvas::new(area);
    if let Some(e) = &env {
        let field = e.field(0);
        let scale = e.speed_scale().max(1e-9);
        let (nx, ny) = (30usize, 10usize);
        let (sx, sy) = (area.width() / nx as f64, area.height() / ny as f64);
        for j in 0..ny {
            for i in 0..nx {
                let p = Vec2::new(
                    area.x_min + (i as f64 + 0.5) * sx,
                    area.y_min + (j as f64 + 0.5) * sy,
                );
                let Ok(v) = field.velocity(p, time) else {
                    continue;
                };
                let tip = p + v * (0.8 * sx.min(sy) / scale);
                let (x1, y1) = c.px(p);
                let (x2, y2) = c.px(tip);
                let _ = writeln!(
                    c.body,
                    r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#9ab" stroke-width="1"/><circle cx="{x2:.2}" cy="{y2:.2}" r="1.2" fill="#9ab"/>"##
                );
            }
        }
        if let Some(FlowSpec::VortexStreet(p)) = e.flow_spec() {
            for cyl in &p.cylinders {
                let (x, y) = c.px(cyl.center_at(SPINUP_STEPS as f64 + time));
                let _ = writeln!(
                    c.body,
                    r##"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="#666"/>"##,
                    p.cylinder_radius * PX
                );
            }
        }
    }
    for (k, (_, pts)) in paths.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for p in pts {
            let (x, y) = c.px(*p);
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            c.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
        let (x, y) = c.px(pts[0]);
        let _ = writeln!(
            c.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
        );
    }
    if let Some((gx, gy)) = goal {
        let (x, y) = c.px(Vec2::new(gx, gy));
        let _ = writeln!(
            c.body,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="none" stroke="#000" stroke-dasharray="3,2"/>"##,
            khalasi_core::reward::RewardConfig::default().target_radius * PX
        );
    }
    let names: Vec<String> = paths
        .iter()
        .map(|(p, _)| {
            p.file_name().map_or_else(
                || p.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            )
        })
        .collect();
    c.frame(&names.join(", "));
    Ok(c.finish())
}

pub fn run(cmd: &PlotCommand, out: Option<&Path>) -> Result<()> {
    let out = out.context("plot needs --out <file.svg>")?;
    let svg = match cmd {
        PlotCommand::Heatmap {
            input,
            metric,
            env,
            policy,
        } => heatmap(input, *metric, env.as_deref(), policy.as_deref())?,
        PlotCommand::Trajectory {
            inputs,
            env,
            time,
            goal,
        } => trajectory(inputs, env.as_deref(), *time, *goal)?,
    };
    emit(Some(out), &svg)
}
