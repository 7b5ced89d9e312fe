use std::path::PathBuf;

use vtube_core::controller::Faults;
use vtube_core::output::write_trajectory;
use vtube_core::perf::{bench_scenario, lattice_scenario};
use vtube_core::scenario::{load_scenario_file, parse_scenario, MANIFEST_SCHEMA};
use vtube_core::selfcheck::{fit_v_increments, simulate, STALL_LIMIT};
use vtube_core::simulation::StepStatus;
use vtube_core::{run, Integrator, Manifest, ScenarioFile, Simulator, TrajRow};

const SHIPPED: [&str; 5] = [
    "paper_40uav",
    "two_uav_headon",
    "overtaking",
    "crowded_entrance",
    "basic_8uav",
];

fn scenario(name: &str) -> ScenarioFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    load_scenario_file(&path).unwrap()
}

fn csv_bytes(file: &ScenarioFile) -> Vec<u8> {
    let rec = simulate(file, Faults::default(), 1).unwrap();
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &rec.rows).unwrap();
    buf
}

#[test]
fn only_the_seeded_scenario_warns() {
    for name in SHIPPED {
        let sc = scenario(name).build().unwrap();
        let warned = !sc.world.warnings().is_empty();
        assert_eq!(warned, name == "paper_40uav", "{name}: {:?}", sc.world.warnings());
    }
}

#[test]
fn assumption_abiding_scenarios_stay_conflict_free() {
    for name in ["two_uav_headon", "overtaking", "crowded_entrance", "basic_8uav"] {
        let rec = simulate(&scenario(name), Faults::default(), 1).unwrap();
        assert!(rec.complete, "{name}");
        assert!(rec.safety_violations.is_empty(), "{name}");
        let min_xi = rec
            .trace
            .iter()
            .map(|s| s.min_xi_distance)
            .fold(f64::INFINITY, f64::min);
        assert!(min_xi > 40.0, "{name}: {min_xi}");
    }
}

#[test]
fn manifest_replays_bit_exactly() {
    let file = scenario("basic_8uav");
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_owned(),
        version: "test".to_owned(),
        git_rev: "unknown".to_owned(),
        dt: file.sim.dt,
        integrator: file.sim.integrator,
        threads: 1,
        warnings: Vec::new(),
        scenario: file.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).unwrap();
    let replayed = parse_scenario(&text, "manifest.json").unwrap();
    assert_eq!(replayed, file);
    assert_eq!(csv_bytes(&replayed), csv_bytes(&file));
}

#[test]
fn advanced_matches_a_simulator_step() {
    let sc = scenario("basic_8uav").build().unwrap();
    let cfg = sc.sim_config(1);
    let mut sim = Simulator::new(sc.world, cfg).unwrap();
    for _ in 0..200 {
        let next = sim.world().advanced(0.01, Integrator::Exact).unwrap();
        sim.step().unwrap();
        assert_eq!(next.states(), sim.world().states());
    }
}

#[test]
fn v_decreases_along_the_basic_run() {
    let mut file = scenario("basic_8uav");
    file.sim.t_max = 30.0;
    let rec = simulate(&file, Faults::default(), 1).unwrap();
    assert!(rec.arrival_times.iter().all(Option::is_none));
    for w in rec.trace.windows(2) {
        let noise = 1e-12 * w[0].total_v.abs();
        assert!(w[1].total_v <= w[0].total_v + noise, "t = {}", w[1].t);
    }
}

#[test]
fn flipped_avoidance_breaks_second_order_increments() {
    let file = scenario("basic_8uav");
    let good = fit_v_increments(&file, 0.01, Faults::default(), 1).unwrap();
    assert!(good.second_order());
    let flip = Faults {
        flip_avoidance: true,
        ..Faults::default()
    };
    let bad = fit_v_increments(&file, 0.01, flip, 1).unwrap();
    assert!(!bad.second_order(), "{bad:?}");
}

#[test]
fn keeping_arrived_uavs_traps_the_crowd() {
    let file = scenario("crowded_entrance");
    let keep = Faults {
        keep_arrived: true,
        ..Faults::default()
    };
    let rec = simulate(&file, keep, 1).unwrap();
    assert!(!rec.complete || rec.invariants.max_stall_time >= STALL_LIMIT);
}

#[test]
fn head_on_pair_stays_mirrored() {
    let rec = simulate(&scenario("two_uav_headon"), Faults::default(), 1).unwrap();
    let (a, b): (Vec<&TrajRow>, Vec<&TrajRow>) = rec.rows.iter().partition(|r| r.id == 1);
    assert_eq!(a.len(), b.len());
    for (r1, r2) in a.iter().zip(&b) {
        assert_eq!(r1.t, r2.t);
        assert_eq!((r1.p.x, r1.p.y), (r2.p.x, -r2.p.y));
        assert_eq!((r1.v.x, r1.v.y), (r2.v.x, -r2.v.y));
    }
    assert_eq!(rec.arrival_times[0], rec.arrival_times[1]);
}

#[test]
fn grid_and_brute_force_agree_on_a_large_swarm() {
    let row = bench_scenario("lattice", &lattice_scenario(160, 20.0), 100).unwrap();
    assert_eq!(row.steps, 100);
    assert_eq!(row.neighbor_mismatches, 0);
}

#[test]
fn drained_rows_match_the_full_table() {
    let file = scenario("overtaking");
    let whole = simulate(&file, Faults::default(), 1).unwrap().rows;
    let sc = file.build().unwrap();
    let cfg = sc.sim_config(1);
    let mut sim = Simulator::new(sc.world, cfg).unwrap();
    let mut streamed = Vec::new();
    while sim.step().unwrap() == StepStatus::Running {
        streamed.extend(sim.drain_rows());
    }
    streamed.extend(sim.drain_rows());
    assert_eq!(streamed, whole);
}

#[test]
fn run_and_simulator_agree() {
    let file = scenario("overtaking");
    let sc = file.build().unwrap();
    let cfg = sc.sim_config(2);
    let rec = run(sc.world, cfg).unwrap();
    assert_eq!(rec.rows, simulate(&file, Faults::default(), 1).unwrap().rows);
}
