mod common;

use common::Instance;
use khalasi_core::env::{EnvPreset, Environment};
use khalasi_core::flow::FrozenFlow;
use khalasi_core::planner::{
    astar_dynamic, dijkstra_oracle, path_energy, plan, Heuristic, PlanGrid, DEFAULT_RESOLUTION,
};
use khalasi_core::Vec2;

#[test]
fn zero_heuristic_matches_dijkstra_on_random_instances() {
    for seed in 0..30 {
        let inst = Instance::random(20, seed);
        let d =
            dijkstra_oracle(&inst.grid, inst.start, inst.goal, &inst.flow, &inst.params).unwrap();
        let a = plan(
            &inst.grid,
            inst.start,
            inst.goal,
            &inst.flow,
            &inst.params,
            Heuristic::Zero,
        )
        .unwrap();
        assert_eq!(a.total_energy, d.total_energy, "seed {seed}");
        let best_walk = inst
            .random_walks(100, seed)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(
            d.total_energy <= best_walk,
            "seed {seed}: {} > {best_walk}",
            d.total_energy
        );
    }
}

#[test]
fn euclidean_astar_never_beats_the_oracle() {
    for seed in 100..130 {
        let inst = Instance::random(20, seed);
        let d =
            dijkstra_oracle(&inst.grid, inst.start, inst.goal, &inst.flow, &inst.params).unwrap();
        let a = astar_dynamic(&inst.grid, inst.start, inst.goal, &inst.flow, &inst.params).unwrap();
        assert!(a.total_energy >= d.total_energy - 1e-12, "seed {seed}");
        assert!(a.expanded <= d.expanded, "seed {seed}");
    }
}

#[test]
fn cylinder_crossing_astar_is_close_to_optimal() {
    let env = Environment::from_preset(&EnvPreset::CylStatic).unwrap();
    let p = env.vehicle_params();
    let flow = FrozenFlow::new(env.field(0), 0.0);
    let grid = PlanGrid::new(env.bounds(), DEFAULT_RESOLUTION, &p, 0.0).unwrap();
    let start = grid.node_at(Vec2::new(20.0, 50.0)).unwrap();
    let goal = grid.node_at(Vec2::new(290.0, 50.0)).unwrap();
    let d = dijkstra_oracle(&grid, start, goal, &flow, &p).unwrap();
    let a = astar_dynamic(&grid, start, goal, &flow, &p).unwrap();
    assert!(a.total_energy >= d.total_energy);
    assert!(
        a.total_energy <= 1.05 * d.total_energy,
        "{} vs {}",
        a.total_energy,
        d.total_energy
    );
    assert!(a.expanded < d.expanded);
    for r in [&a, &d] {
        assert_eq!(r.waypoints.first(), Some(&start));
        assert_eq!(r.waypoints.last(), Some(&goal));
        assert!(r.waypoints.windows(2).all(|w| w[0].is_neighbor(w[1])));
        let replay = path_energy(&grid, &r.waypoints, &flow, &p);
        assert!((replay - r.total_energy).abs() <= 1e-9 * r.total_energy);
    }
}

#[test]
fn time_dependent_oracle_bounds_astar() {
    let env = Environment::from_preset(&EnvPreset::CylOsc).unwrap();
    let p = env.vehicle_params();
    let flow = env.field(137);
    let grid = PlanGrid::new(env.bounds(), 4.0, &p, 0.0).unwrap();
    let start = grid.node_at(Vec2::new(20.0, 20.0)).unwrap();
    let goal = grid.node_at(Vec2::new(280.0, 80.0)).unwrap();
    let d = dijkstra_oracle(&grid, start, goal, &*flow, &p).unwrap();
    let a = astar_dynamic(&grid, start, goal, &*flow, &p).unwrap();
    assert!(a.total_energy >= d.total_energy);
    let replay = path_energy(&grid, &d.waypoints, &*flow, &p);
    assert!((replay - d.total_energy).abs() <= 1e-9 * d.total_energy);
}
