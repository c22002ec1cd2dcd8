//! Where agents and goals start.

use crate::geom::{Rect, Vec2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAIR_MIN_SEPARATION: f64 = 50.0;
pub const PAIR_MAX_ATTEMPTS: usize = 10_000;
/// Distance kept from the walls by the named `pair_min_dist` layout.
pub const WALL_MARGIN: f64 = 5.0;
/// Static goal of the 10×10 evaluation lattice.
pub const GRID10_GOAL: Vec2 = Vec2::new(290.0, 50.0);
/// Domain the fixed layouts are written for; other domains get them
/// stretched onto their bounds.
pub const LAYOUT_REFERENCE: Rect = Rect::new(0.0, 300.0, 0.0, 100.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpawnError {
    #[error("no pair at least {min_separation} apart after {attempts} attempts")]
    Exhausted {
        min_separation: f64,
        attempts: usize,
    },
    #[error("invalid spawn layout: {0}")]
    Invalid(String),
    #[error("unknown spawn layout '{0}' (expected vertical, l_shaped, grid10 or pair_min_dist)")]
    Unknown(String),
    #[error("lattice point {index} out of range (layout has {len})")]
    BadPoint { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnKind {
    Vertical,
    LShaped,
    Grid10,
    PairMinDist,
}

impl SpawnKind {
    pub fn name(self) -> &'static str {
        match self {
            SpawnKind::Vertical => "vertical",
            SpawnKind::LShaped => "l_shaped",
            SpawnKind::Grid10 => "grid10",
            SpawnKind::PairMinDist => "pair_min_dist",
        }
    }
}

impl std::str::FromStr for SpawnKind {
    type Err = SpawnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vertical" => Ok(SpawnKind::Vertical),
            "l_shaped" | "l-shaped" => Ok(SpawnKind::LShaped),
            "grid10" => Ok(SpawnKind::Grid10),
            "pair_min_dist" | "pair-min-dist" => Ok(SpawnKind::PairMinDist),
            other => Err(SpawnError::Unknown(other.to_string())),
        }
    }
}

/// Sampling regions for the agent and the goal. Region lists are unions;
/// `points` replaces the agent regions for lattice layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnLayout {
    pub kind: SpawnKind,
    #[serde(default)]
    pub agent_regions: Vec<Rect>,
    #[serde(default)]
    pub goal_regions: Vec<Rect>,
    #[serde(default)]
    pub points: Vec<Vec2>,
    #[serde(default)]
    pub goal: Option<Vec2>,
    #[serde(default)]
    pub min_separation: f64,
}

impl SpawnLayout {
    /// Agent on the left strip, goal on the right strip.
    pub fn vertical() -> Self {
        Self {
            kind: SpawnKind::Vertical,
            agent_regions: vec![Rect::new(10.0, 40.0, 10.0, 90.0)],
            goal_regions: vec![Rect::new(260.0, 290.0, 10.0, 90.0)],
            points: Vec::new(),
            goal: None,
            min_separation: 0.0,
        }
    }

    /// Agent anywhere on an L along the left and top edges; goal in the
    /// lower-right corner.
    pub fn l_shaped() -> Self {
        Self {
            kind: SpawnKind::LShaped,
            agent_regions: vec![
                Rect::new(10.0, 40.0, 10.0, 90.0),
                Rect::new(40.0, 290.0, 70.0, 90.0),
            ],
            goal_regions: vec![Rect::new(260.0, 290.0, 10.0, 40.0)],
            points: Vec::new(),
            goal: None,
            min_separation: 0.0,
        }
    }

    /// 10×10 agent lattice (x = 15..240 step 25, y = 5..95 step 10) with the
    /// goal fixed at (290, 50).
    pub fn grid10() -> Self {
        let mut points = Vec::with_capacity(100);
        for j in 0..10 {
            for i in 0..10 {
                points.push(Vec2::new(15.0 + 25.0 * i as f64, 5.0 + 10.0 * j as f64));
            }
        }
        Self {
            kind: SpawnKind::Grid10,
            agent_regions: Vec::new(),
            goal_regions: Vec::new(),
            points,
            goal: Some(GRID10_GOAL),
            min_separation: 0.0,
        }
    }

    /// Agent and goal anywhere in `area`, at least 50 units apart.
    pub fn pair_min_dist(area: Rect) -> Self {
        Self {
            kind: SpawnKind::PairMinDist,
            agent_regions: vec![area],
            goal_regions: vec![area],
            points: Vec::new(),
            goal: None,
            min_separation: PAIR_MIN_SEPARATION,
        }
    }

    /// The named layout for an environment with `bounds`. The fixed layouts
    /// are mapped affinely from [`LAYOUT_REFERENCE`] (unchanged on that
    /// domain); `pair_min_dist` covers `bounds` minus a [`WALL_MARGIN`]
    /// strip along every wall.
    pub fn named(kind: SpawnKind, bounds: Rect) -> Self {
        match kind {
            SpawnKind::Vertical => Self::vertical().mapped_onto(bounds),
            SpawnKind::LShaped => Self::l_shaped().mapped_onto(bounds),
            SpawnKind::Grid10 => Self::grid10().mapped_onto(bounds),
            SpawnKind::PairMinDist => {
                let m = WALL_MARGIN
                    .min(bounds.width() / 4.0)
                    .min(bounds.height() / 4.0);
                Self::pair_min_dist(Rect::new(
                    bounds.x_min + m,
                    bounds.x_max - m,
                    bounds.y_min + m,
                    bounds.y_max - m,
                ))
            }
        }
    }

    fn mapped_onto(mut self, bounds: Rect) -> Self {
        if bounds == LAYOUT_REFERENCE {
            return self;
        }
        let r = LAYOUT_REFERENCE;
        let (sx, sy) = (bounds.width() / r.width(), bounds.height() / r.height());
        let point = |p: Vec2| {
            Vec2::new(
                bounds.x_min + (p.x - r.x_min) * sx,
                bounds.y_min + (p.y - r.y_min) * sy,
            )
        };
        let rect = |q: Rect| {
            let (a, b) = (
                point(Vec2::new(q.x_min, q.y_min)),
                point(Vec2::new(q.x_max, q.y_max)),
            );
            Rect::new(a.x, b.x, a.y, b.y)
        };
        self.agent_regions = self.agent_regions.into_iter().map(rect).collect();
        self.goal_regions = self.goal_regions.into_iter().map(rect).collect();
        self.points = self.points.into_iter().map(point).collect();
        self.goal = self.goal.map(point);
        self
    }

    pub fn validate(&self, bounds: Rect) -> Result<(), SpawnError> {
        let regions_ok = |rs: &[Rect], what: &str| -> Result<(), SpawnError> {
            for r in rs {
                if !r.is_valid() || !bounds.contains_rect(r) {
                    return Err(SpawnError::Invalid(format!(
                        "{what} region {r:?} is not inside the environment {bounds:?}"
                    )));
                }
            }
            Ok(())
        };
        regions_ok(&self.agent_regions, "agent")?;
        regions_ok(&self.goal_regions, "goal")?;
        if let Some(p) = self.points.iter().find(|p| !bounds.contains(**p)) {
            return Err(SpawnError::Invalid(format!(
                "lattice point {p} outside the environment"
            )));
        }
        if self.points.is_empty() && self.agent_regions.is_empty() {
            return Err(SpawnError::Invalid("no agent region or lattice".into()));
        }
        match self.goal {
            Some(g) if !bounds.contains(g) => {
                return Err(SpawnError::Invalid(format!(
                    "goal {g} outside the environment"
                )))
            }
            None if self.goal_regions.is_empty() => {
                return Err(SpawnError::Invalid("no goal region or fixed goal".into()))
            }
            _ => {}
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(SpawnError::Invalid(
                "min_separation must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Draws `(agent, goal)`.
    pub fn spawn<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec2, Vec2), SpawnError> {
        let attempts = if self.min_separation > 0.0 {
            PAIR_MAX_ATTEMPTS
        } else {
            1
        };
        for _ in 0..attempts {
            let agent = if self.points.is_empty() {
                sample_union(&self.agent_regions, rng)
            } else {
                self.points[rng.gen_range(0..self.points.len())]
            };
            let goal = match self.goal {
                Some(g) => g,
                None => sample_union(&self.goal_regions, rng),
            };
            if agent.distance(goal) >= self.min_separation {
                return Ok((agent, goal));
            }
        }
        Err(SpawnError::Exhausted {
            min_separation: self.min_separation,
            attempts,
        })
    }

    /// Lattice point `index` with the fixed goal, for lattice layouts.
    pub fn spawn_at(&self, index: usize) -> Result<(Vec2, Vec2), SpawnError> {
        let agent = *self.points.get(index).ok_or(SpawnError::BadPoint {
            index,
            len: self.points.len(),
        })?;
        let goal = self
            .goal
            .ok_or_else(|| SpawnError::Invalid("lattice layout needs a fixed goal".into()))?;
        Ok((agent, goal))
    }
}

/// Uniform over a union of rectangles (overlaps counted twice).
fn sample_union<R: Rng + ?Sized>(regions: &[Rect], rng: &mut R) -> Vec2 {
    let total: f64 = regions.iter().map(Rect::area).sum();
    let mut pick = rng.gen_range(0.0..total.max(f64::MIN_POSITIVE));
    let mut chosen = regions[regions.len() - 1];
    for r in regions {
        if pick < r.area() {
            chosen = *r;
            break;
        }
        pick -= r.area();
    }
    let x = if chosen.width() > 0.0 {
        rng.gen_range(chosen.x_min..=chosen.x_max)
    } else {
        chosen.x_min
    };
    let y = if chosen.height() > 0.0 {
        rng.gen_range(chosen.y_min..=chosen.y_max)
    } else {
        chosen.y_min
    };
    Vec2::new(x, y)
}
