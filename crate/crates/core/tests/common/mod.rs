#![allow(dead_code)]

use khalasi_core::flow::{vortex::lamb_oseen, FlowError, FlowField};
use khalasi_core::planner::{edge_energy, Node, PlanGrid};
use khalasi_core::vehicle::VehicleParams;
use khalasi_core::{Rect, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform drift plus a few regularized vortices, time-independent.
#[derive(Debug, Clone)]
pub struct RandomCurrent {
    pub bounds: Rect,
    pub drift: Vec2,
    pub vortices: Vec<(Vec2, f64)>,
}

impl RandomCurrent {
    pub fn new(bounds: Rect, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drift = Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        let vortices = (0..4)
            .map(|_| {
                let c = Vec2::new(
                    rng.gen_range(bounds.x_min..bounds.x_max),
                    rng.gen_range(bounds.y_min..bounds.y_max),
                );
                (c, rng.gen_range(-6.0..6.0))
            })
            .collect();
        Self {
            bounds,
            drift,
            vortices,
        }
    }
}

impl FlowField for RandomCurrent {
    fn velocity(&self, pos: Vec2, _t: f64) -> Result<Vec2, FlowError> {
        let mut v = self.drift;
        for &(c, g) in &self.vortices {
            v += lamb_oseen(pos, c, g, 2.0);
        }
        Ok(v)
    }
    fn bounds(&self) -> Rect {
        self.bounds
    }
    fn max_speed(&self) -> f64 {
        1.0
    }
}

/// A `n`×`n` lattice with unit spacing, a random current and distinct
/// random start and goal nodes.
pub struct Instance {
    pub grid: PlanGrid,
    pub flow: RandomCurrent,
    pub params: VehicleParams,
    pub start: Node,
    pub goal: Node,
}

impl Instance {
    pub fn random(n: usize, seed: u64) -> Self {
        let side = (n - 1) as f64;
        let bounds = Rect::new(0.0, side, 0.0, side);
        let params = VehicleParams::for_max_flow_speed(0.5);
        let grid = PlanGrid::new(bounds, 1.0, &params, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let start = Node::new(rng.gen_range(0..n), rng.gen_range(0..n));
        let mut goal = start;
        while goal == start {
            goal = Node::new(rng.gen_range(0..n), rng.gen_range(0..n));
        }
        Self {
            grid,
            flow: RandomCurrent::new(bounds, seed),
            params,
            start,
            goal,
        }
    }

    /// Costs of `n` uniform random walks from start to goal. Edge costs
    /// are tabulated once since the flow is frozen.
    pub fn random_walks(&self, n: usize, seed: u64) -> Vec<f64> {
        let g = &self.grid;
        let table: Vec<Vec<(Node, f64)>> = (0..g.len())
            .map(|k| {
                let a = Node::new(k % g.nx, k / g.nx);
                g.neighbors(a)
                    .map(|b| {
                        (
                            b,
                            edge_energy(
                                g.position(a),
                                g.position(b),
                                0.0,
                                &self.flow,
                                &self.params,
                            ),
                        )
                    })
                    .collect()
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (mut cur, mut total) = (self.start, 0.0);
                while cur != self.goal {
                    let nbs = &table[cur.j * g.nx + cur.i];
                    let (next, c) = nbs[rng.gen_range(0..nbs.len())];
                    total += c;
                    cur = next;
                }
                total
            })
            .collect()
    }
}
