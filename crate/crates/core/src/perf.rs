//! Per-step timing of the controller and the neighbour search, for
//! `vtube bench` and the criterion benches.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::math::Vec2;
use crate::scenario::{ParamsConfig, ScenarioFile, SimSettings, TubeConfig, UavConfig, SCENARIO_SCHEMA};
use crate::simulation::{neighbors_brute, Grid, NeighborMode, SimConfig, Simulator, StepStatus};

/// Timing of one scenario over its first steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub m: usize,
    pub r_s: f64,
    pub steps: usize,
    /// Mean wall time to compute every command in one step.
    pub step_mean_us: f64,
    /// Mean wall time of a full brute-force neighbour pass.
    pub brute_mean_us: f64,
    /// Mean wall time to build the grid and query every UAV.
    pub grid_mean_us: f64,
    /// Steps on which the two searches disagreed.
    pub neighbor_mismatches: usize,
}

/// `m` UAVs on a lattice in a 500 m by 300 m tube and its extension, filling
/// rows of constant x from the finishing end backwards. Radii scale with
/// `r_s` so that the detection and initial-separation assumptions hold.
pub fn lattice_scenario(m: usize, r_s: f64) -> ScenarioFile {
    let r_t = 150.0;
    let r_a = 1.5 * r_s;
    let spacing = 2.0 * r_s + 15.0;
    let columns = ((2.0 * (r_t - r_a - 5.0) / spacing).floor() as usize + 1).max(1);
    let y0 = -0.5 * spacing * (columns - 1) as f64;
    let uavs = (0..m)
        .map(|i| {
            let (row, col) = (i / columns, i % columns);
            UavConfig {
                id: i as u32 + 1,
                p0: Vec2::new(400.0 - spacing * row as f64, y0 + spacing * col as f64),
                v0: Vec2::ZERO,
                l: 5.0,
                vm: 5.0 + (i % 20) as f64 / 4.0,
            }
        })
        .collect();
    ScenarioFile {
        schema: SCENARIO_SCHEMA.to_owned(),
        name: Some(format!("lattice_{m}_rs{r_s}")),
        description: None,
        tube: TubeConfig {
            p_t1: Vec2::ZERO,
            p_t2: Vec2::new(500.0, 0.0),
            r_t,
            lane_count: None,
        },
        params: ParamsConfig {
            r_s,
            r_a,
            r_d: 4.0 * r_s,
            r_b: None,
            r_sr: None,
            r_rt: None,
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            eps_m: crate::potentials::DEFAULT_EPS,
            eps_t: crate::potentials::DEFAULT_EPS,
            eps_s: crate::potentials::DEFAULT_EPS,
            eps_0: 1.0,
        },
        uavs: Some(uavs),
        generator: None,
        sim: SimSettings::default(),
    }
}

/// Runs up to `steps` steps of `file` on one thread, timing the command
/// computation and both neighbour searches on every step.
pub fn bench_scenario(label: &str, file: &ScenarioFile, steps: usize) -> Result<BenchRow> {
    let sc = file.build()?;
    let r_d = sc.world.params().r_d;
    let r_sa = sc.world.params().r_s() + sc.world.params().r_a();
    let m = sc.world.uavs().len();
    let cfg = SimConfig {
        threads: 1,
        neighbor_mode: NeighborMode::Auto,
        ..sc.sim_config(1)
    };
    let mut sim = Simulator::new(sc.world, cfg)?;
    let (mut brute_s, mut grid_s) = (0.0, 0.0);
    let mut mismatches = 0;
    let mut done = 0;
    while done < steps && sim.status() == StepStatus::Running {
        let snap = sim.world().snapshot();

        let t0 = Instant::now();
        let brute: Vec<Vec<usize>> = (0..snap.len()).map(|k| neighbors_brute(&snap, k, r_d, r_sa)).collect();
        brute_s += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let grid = Grid::build(&snap, r_d);
        let hashed: Vec<Vec<usize>> = (0..snap.len()).map(|k| grid.neighbors(&snap, k, r_d, r_sa)).collect();
        grid_s += t0.elapsed().as_secs_f64();

        if brute != hashed {
            mismatches += 1;
        }
        if sim.step()? == StepStatus::Running {
            done += 1;
        }
    }
    let times = &sim.record().compute_times;
    let n = done.max(1) as f64;
    let mean_us = |s: f64| 1e6 * s / n;
    Ok(BenchRow {
        label: label.to_owned(),
        m,
        r_s: file.params.r_s,
        steps: done,
        step_mean_us: mean_us(times.iter().sum()),
        brute_mean_us: mean_us(brute_s),
        grid_mean_us: mean_us(grid_s),
        neighbor_mismatches: mismatches,
    })
}

/// Least-squares exponent `k` in `time ~ M^k` over the rows.
pub fn growth_exponent(rows: &[BenchRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.m > 0 && r.step_mean_us > 0.0)
        .map(|r| ((r.m as f64).ln(), r.step_mean_us.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_builds_without_warnings() {
        for (m, r_s) in [(10, 20.0), (160, 20.0), (40, 10.0), (40, 30.0)] {
            let sc = lattice_scenario(m, r_s).build().unwrap();
            assert_eq!(sc.world.uavs().len(), m);
            assert!(sc.world.warnings().is_empty(), "{m} {r_s}: {:?}", sc.world.warnings());
        }
    }

    #[test]
    fn bench_counts_steps() {
        let row = bench_scenario("x", &lattice_scenario(10, 20.0), 5).unwrap();
        assert_eq!(row.steps, 5);
        assert_eq!(row.neighbor_mismatches, 0);
    }

    #[test]
    fn exponent_of_power_law() {
        let row = |m: usize, t: f64| BenchRow {
            label: String::new(),
            m,
            r_s: 20.0,
            steps: 1,
            step_mean_us: t,
            brute_mean_us: 0.0,
            grid_mean_us: 0.0,
            neighbor_mismatches: 0,
        };
        let rows = [row(10, 3.0), row(40, 48.0), row(160, 768.0)];
        assert!((growth_exponent(&rows).unwrap() - 2.0).abs() < 1e-12);
    }
}
