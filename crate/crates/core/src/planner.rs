//! Energy-aware graph planners on an 8-connected lattice over a
//! time-varying current.
//!
//! Time expansion is label-setting: a node's departure time is fixed by the
//! step count of the path that settled it, and every edge advances the clock
//! by one grid step (`step_time`) whether it is axial or diagonal. On frozen
//! flows this reduces to an ordinary shortest-path search and Dijkstra is
//! exactly optimal.

use crate::flow::FlowField;
use crate::geom::{Rect, Vec2};
use crate::vehicle::VehicleParams;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Default lattice spacing in environment units.
pub const DEFAULT_RESOLUTION: f64 = 2.0;

/// Effort ceiling per unit time: both thrusters at full command.
pub const MAX_EFFORT_RATE: f64 = 2.0;
/// Cost multiplier for edges the vehicle cannot make headway along.
pub const INFEASIBLE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid planning grid: {0}")]
    InvalidGrid(String),
    #[error("{which} node ({i}, {j}) is outside the {nx}x{ny} lattice")]
    OffGrid {
        which: &'static str,
        i: usize,
        j: usize,
        nx: usize,
        ny: usize,
    },
    #[error("{which} position {pos} is outside the planning area")]
    OutsideArea { which: &'static str, pos: Vec2 },
    #[error("start and goal are the same node")]
    SameNode,
    #[error("open set exhausted after expanding {expanded} nodes")]
    NoPath { expanded: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub i: usize,
    pub j: usize,
}

impl Node {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    pub fn is_neighbor(self, other: Node) -> bool {
        let di = self.i.abs_diff(other.i);
        let dj = self.j.abs_diff(other.j);
        di <= 1 && dj <= 1 && (di, dj) != (0, 0)
    }
}

const OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Node lattice over a rectangle, with the clock that maps step counts to
/// flow time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanGrid {
    pub origin: Vec2,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    /// Flow time at which the start node is left.
    pub t0: f64,
    /// Flow time consumed by one edge.
    pub step_time: f64,
}

impl PlanGrid {
    /// Lattice covering `area` at `resolution`; one edge takes the time an
    /// axial edge needs at the vehicle's terminal speed.
    pub fn new(
        area: Rect,
        resolution: f64,
        params: &VehicleParams,
        t0: f64,
    ) -> Result<Self, PlanError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(PlanError::InvalidGrid("resolution must be positive".into()));
        }
        if !area.is_valid() {
            return Err(PlanError::InvalidGrid("planning area is degenerate".into()));
        }
        let v_ref = params.terminal_speed();
        if !(v_ref.is_finite() && v_ref > 0.0) {
            return Err(PlanError::InvalidGrid(
                "vehicle terminal speed must be positive".into(),
            ));
        }
        let nx = (area.width() / resolution + 1e-9).floor() as usize + 1;
        let ny = (area.height() / resolution + 1e-9).floor() as usize + 1;
        if nx < 2 || ny < 2 {
            return Err(PlanError::InvalidGrid(format!(
                "area {}x{} too small for resolution {resolution}",
                area.width(),
                area.height()
            )));
        }
        Ok(Self {
            origin: Vec2::new(area.x_min, area.y_min),
            resolution,
            nx,
            ny,
            t0,
            step_time: resolution / v_ref,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, n: Node) -> bool {
        n.i < self.nx && n.j < self.ny
    }

    pub fn position(&self, n: Node) -> Vec2 {
        self.origin + Vec2::new(n.i as f64, n.j as f64) * self.resolution
    }

    /// Nearest lattice node, or `None` if `p` lies beyond the lattice.
    pub fn node_at(&self, p: Vec2) -> Option<Node> {
        let fx = (p.x - self.origin.x) / self.resolution;
        let fy = (p.y - self.origin.y) / self.resolution;
        let i = fx.round();
        let j = fy.round();
        if !(fx.is_finite() && fy.is_finite()) || fx < -0.5 || fy < -0.5 {
            return None;
        }
        let n = Node::new(i as usize, j as usize);
        self.contains(n).then_some(n)
    }

    fn index(&self, n: Node) -> usize {
        n.j * self.nx + n.i
    }

    fn node(&self, idx: usize) -> Node {
        Node::new(idx % self.nx, idx / self.nx)
    }

    pub fn neighbors(&self, n: Node) -> impl Iterator<Item = Node> + '_ {
        OFFSETS.iter().filter_map(move |&(di, dj)| {
            let i = n.i as isize + di;
            let j = n.j as isize + dj;
            (i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny)
                .then(|| Node::new(i as usize, j as usize))
        })
    }

    /// Flow time at which a path that has taken `steps` edges departs.
    pub fn time_at(&self, steps: usize) -> f64 {
        self.t0 + steps as f64 * self.step_time
    }

    fn check(&self, which: &'static str, n: Node) -> Result<(), PlanError> {
        if self.contains(n) {
            Ok(())
        } else {
            Err(PlanError::OffGrid {
                which,
                i: n.i,
                j: n.j,
                nx: self.nx,
                ny: self.ny,
            })
        }
    }
}

/// Command-L1 effort to traverse `from → to` in a straight line at the
/// vehicle's terminal speed, given the current `flow_v` at the edge midpoint.
///
/// The effort rate is clamped to the thruster envelope; edges where even
/// full thrust cannot make headway cost [`INFEASIBLE_FACTOR`] times the
/// clamped maximum.
pub fn edge_energy_with_flow(from: Vec2, to: Vec2, flow_v: Vec2, params: &VehicleParams) -> f64 {
    let d = to - from;
    let len = d.norm();
    if len == 0.0 {
        return 0.0;
    }
    let v_ref = params.terminal_speed();
    let tau = len / v_ref;
    let dir = d / len;
    let max_cost = MAX_EFFORT_RATE * tau;
    if !flow_v.is_finite() || v_ref + flow_v.dot(dir) < 0.0 {
        return INFEASIBLE_FACTOR * max_cost;
    }
    let u_req = dir * v_ref - flow_v;
    let rate = (u_req.norm() * params.linear_drag / params.max_thrust).clamp(0.0, MAX_EFFORT_RATE);
    rate * tau
}

/// [`edge_energy_with_flow`] with the current sampled from `flow` at time `t`.
/// A failed flow query counts as infeasible.
pub fn edge_energy<F: FlowField + ?Sized>(
    from: Vec2,
    to: Vec2,
    t: f64,
    flow: &F,
    params: &VehicleParams,
) -> f64 {
    let mid = (from + to) * 0.5;
    let v = flow
        .velocity(mid, t)
        .unwrap_or(Vec2::new(f64::NAN, f64::NAN));
    edge_energy_with_flow(from, to, v, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub waypoints: Vec<Node>,
    pub total_energy: f64,
    /// Edges traversed.
    pub steps: usize,
    /// Nodes popped from the open set.
    pub expanded: usize,
}

impl PlanResult {
    pub fn positions(&self, grid: &PlanGrid) -> Vec<Vec2> {
        self.waypoints.iter().map(|&n| grid.position(n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heuristic {
    /// Straight-line distance to the goal in environment units, scaled by
    /// the weight. Not admissible against energy costs.
    Euclidean(f64),
    Zero,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    f: f64,
    g: f64,
    seq: u64,
    idx: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // min-heap on f, then insertion order
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Best-first search with an arbitrary time-dependent edge cost
/// `cost(from, to, departure_steps)`.
pub fn search_with_costs(
    grid: &PlanGrid,
    start: Node,
    goal: Node,
    heuristic: Heuristic,
    mut cost: impl FnMut(Node, Node, usize) -> f64,
) -> Result<PlanResult, PlanError> {
    grid.check("start", start)?;
    grid.check("goal", goal)?;
    if start == goal {
        return Err(PlanError::SameNode);
    }
    let n = grid.len();
    let goal_pos = grid.position(goal);
    let h = |node: Node| match heuristic {
        Heuristic::Zero => 0.0,
        Heuristic::Euclidean(w) => w * grid.position(node).distance(goal_pos),
    };
    let mut g = vec![f64::INFINITY; n];
    let mut steps = vec![0usize; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    let s = grid.index(start);
    g[s] = 0.0;
    open.push(Entry {
        f: h(start),
        g: 0.0,
        seq,
        idx: s,
    });
    let mut expanded = 0usize;
    while let Some(e) = open.pop() {
        if closed[e.idx] || e.g > g[e.idx] {
            continue;
        }
        closed[e.idx] = true;
        expanded += 1;
        let node = grid.node(e.idx);
        if node == goal {
            let mut path = vec![node];
            let mut cur = e.idx;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(grid.node(cur));
            }
            path.reverse();
            return Ok(PlanResult {
                steps: path.len() - 1,
                waypoints: path,
                total_energy: g[e.idx],
                expanded,
            });
        }
        for nb in grid.neighbors(node) {
            let k = grid.index(nb);
            if closed[k] {
                continue;
            }
            let c = cost(node, nb, steps[e.idx]);
            let cand = g[e.idx] + c.max(0.0);
            if cand < g[k] {
                g[k] = cand;
                parent[k] = e.idx;
                steps[k] = steps[e.idx] + 1;
                seq += 1;
                open.push(Entry {
                    f: cand + h(nb),
                    g: cand,
                    seq,
                    idx: k,
                });
            }
        }
    }
    Err(PlanError::NoPath { expanded })
}

/// Search with flow-dependent edge energies.
pub fn plan<F: FlowField + ?Sized>(
    grid: &PlanGrid,
    start: Node,
    goal: Node,
    flow: &F,
    params: &VehicleParams,
    heuristic: Heuristic,
) -> Result<PlanResult, PlanError> {
    search_with_costs(grid, start, goal, heuristic, |a, b, k| {
        edge_energy(
            grid.position(a),
            grid.position(b),
            grid.time_at(k),
            flow,
            params,
        )
    })
}

/// A* with the Euclidean-distance heuristic.
pub fn astar_dynamic<F: FlowField + ?Sized>(
    grid: &PlanGrid,
    start: Node,
    goal: Node,
    flow: &F,
    params: &VehicleParams,
) -> Result<PlanResult, PlanError> {
    plan(grid, start, goal, flow, params, Heuristic::Euclidean(1.0))
}

/// Uniform-cost search: optimal for the label-setting cost model.
pub fn dijkstra_oracle<F: FlowField + ?Sized>(
    grid: &PlanGrid,
    start: Node,
    goal: Node,
    flow: &F,
    params: &VehicleParams,
) -> Result<PlanResult, PlanError> {
    plan(grid, start, goal, flow, params, Heuristic::Zero)
}

/// Cost of following `path` under the same clock and cost model the
/// planners use.
pub fn path_energy<F: FlowField + ?Sized>(
    grid: &PlanGrid,
    path: &[Node],
    flow: &F,
    params: &VehicleParams,
) -> f64 {
    path.windows(2)
        .enumerate()
        .map(|(k, w)| {
            edge_energy(
                grid.position(w[0]),
                grid.position(w[1]),
                grid.time_at(k),
                flow,
                params,
            )
        })
        .sum()
}
