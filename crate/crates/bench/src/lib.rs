//! Fixtures shared by the criterion benches.

use vtube_core::perf::lattice_scenario;
use vtube_core::simulation::SnapEntry;
use vtube_core::World;

/// Lattice swarm of `m` UAVs with safety radius `r_s`, at t = 0.
pub fn lattice_world(m: usize, r_s: f64) -> World {
    lattice_scenario(m, r_s)
        .build()
        .expect("lattice scenarios are valid")
        .world
}

/// Snapshot of a lattice swarm together with its detection radius and
/// `r_s + r_a`.
pub fn lattice_snapshot(m: usize, r_s: f64) -> (Vec<SnapEntry>, f64, f64) {
    let w = lattice_world(m, r_s);
    let p = w.params();
    (w.snapshot(), p.r_d, p.r_s() + p.r_a())
}
