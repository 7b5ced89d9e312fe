//! Lockstep swarm simulation.
//!
//! Each step scans for arrivals, freezes a snapshot of the visible UAVs,
//! computes every command from that snapshot (in parallel), integrates, and
//! then evaluates events and metrics at the new time.

mod neighbors;
mod record;

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

pub use neighbors::{detect_neighbors, neighbors_brute, Grid, NeighborIndex, NeighborMode, SnapEntry, GRID_THRESHOLD};
pub use record::{ArrivalTime, Event, EventKind, InvariantStats, MetricSample, RunRecord, Summary, TrajRow};

use crate::controller::{active_tube, build_aux_tubes, dispatch, tube_command, AuxTubes, ControlParams};
use crate::dynamics::{check_separation_implication, Integrator, SwarmLimits, UavParams, UavState};
use crate::error::{Error, Result};
use crate::geometry::{arrival_test, classify_region, tube_errors, wall_clearance, Region, TubeSpec};
use crate::math::Vec2;
use crate::potentials::{total_v, VInput};

/// A UAV's parameters and initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UavInit {
    pub params: UavParams,
    pub p0: Vec2,
    pub v0: Vec2,
}

/// Speed below `STALL_FRACTION * vm` counts as stalled.
pub const STALL_FRACTION: f64 = 1e-3;

/// Slack on the filtered-to-physical separation check.
const SEPARATION_TOL: f64 = 1e-9;

/// UAVs, tubes and controller constants.
#[derive(Clone, Debug)]
pub struct World {
    t: f64,
    tube: TubeSpec,
    aux: AuxTubes,
    params: ControlParams,
    limits: SwarmLimits,
    uavs: Vec<UavParams>,
    states: Vec<UavState>,
    speed_bounded: Vec<bool>,
    warnings: Vec<String>,
}

impl World {
    pub fn new(tube: TubeSpec, params: ControlParams, inits: &[UavInit]) -> Result<Self> {
        let r_s = params.r_s();
        let r_a = params.r_a();
        if !(tube.r_t() > r_a) {
            return Err(Error::param(
                "r_t",
                format!("tube half-width {} must exceed r_a = {r_a}", tube.r_t()),
            ));
        }
        for (name, v) in [("r_sr", params.r_sr), ("r_rt", params.r_rt)] {
            if !(v > r_a) {
                return Err(Error::param(name, format!("must exceed r_a = {r_a}, got {v}")));
            }
        }
        if !(params.eps_0 > 0.0) {
            return Err(Error::param("eps_0", format!("must be positive, got {}", params.eps_0)));
        }
        let mut ids = BTreeSet::new();
        for u in inits {
            if !ids.insert(u.params.id) {
                return Err(Error::param("id", format!("duplicate UAV id {}", u.params.id)));
            }
            if !u.p0.is_finite() || !u.v0.is_finite() {
                return Err(Error::param(
                    "p0",
                    format!("UAV {}: non-finite initial state", u.params.id),
                ));
            }
        }
        let uavs: Vec<UavParams> = inits.iter().map(|u| u.params).collect();
        let limits = SwarmLimits::from_uavs(&uavs);
        let bound = r_s + r_a + 2.0 * limits.r_v;
        if !(params.r_d > bound) {
            return Err(Error::DetectionRadius { r_d: params.r_d, bound });
        }
        let aux = build_aux_tubes(&tube, params.r_sr, params.r_rt, params.r_b)?;
        let states: Vec<UavState> = inits
            .iter()
            .map(|u| {
                let mut s = UavState::new(u.p0, u.v0, u.params.l, Region::TubeExtension);
                s.region = classify_region(s.xi, &tube);
                s
            })
            .collect();
        let speed_bounded = inits.iter().map(|u| u.v0.norm() <= u.params.vm).collect();

        let mut warnings = Vec::new();
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                let d = states[i].xi.distance(states[j].xi);
                if d <= 2.0 * r_s {
                    warnings.push(format!(
                        "UAVs {} and {} start in conflict: filtered distance {d} <= 2 r_s = {}",
                        uavs[i].id,
                        uavs[j].id,
                        2.0 * r_s
                    ));
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(World {
            t: 0.0,
            tube,
            aux,
            params,
            limits,
            uavs,
            states,
            speed_bounded,
            warnings,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn tube(&self) -> &TubeSpec {
        &self.tube
    }
    pub fn aux(&self) -> &AuxTubes {
        &self.aux
    }
    pub fn params(&self) -> &ControlParams {
        &self.params
    }
    pub fn limits(&self) -> SwarmLimits {
        self.limits
    }
    pub fn uavs(&self) -> &[UavParams] {
        &self.uavs
    }
    pub fn states(&self) -> &[UavState] {
        &self.states
    }
    /// Assumption warnings raised at construction.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    #[doc(hidden)]
    pub fn with_faults(mut self, faults: crate::controller::Faults) -> Self {
        self.params.faults = faults;
        self
    }

    /// Whether UAV `i` still takes part in the simulation.
    pub fn is_visible(&self, i: usize) -> bool {
        !self.states[i].arrived || self.params.faults.keep_arrived
    }

    pub fn snapshot(&self) -> Vec<SnapEntry> {
        (0..self.states.len())
            .filter(|&i| self.is_visible(i))
            .map(|i| {
                let s = &self.states[i];
                SnapEntry {
                    index: i,
                    p: s.p,
                    v: s.v,
                    xi: s.xi,
                }
            })
            .collect()
    }

    /// Neighbour observations for UAV `i` from the current state.
    pub fn neighbors_of(&self, i: usize) -> Vec<crate::controller::NeighborObs> {
        let snap = self.snapshot();
        match snap.iter().position(|e| e.index == i) {
            Some(k) => detect_neighbors(&snap, k, self.params.r_d, self.params.r_s() + self.params.r_a()),
            None => Vec::new(),
        }
    }

    /// Tube whose potentials apply to a UAV in `region`. Past the finish the
    /// main tube is used.
    pub fn potential_tube(&self, region: Region) -> &TubeSpec {
        active_tube(region, &self.tube, &self.aux).unwrap_or(&self.tube)
    }

    /// Total potential over the UAVs that have not arrived.
    pub fn total_v(&self) -> Result<f64> {
        let inputs: Vec<VInput<'_>> = self
            .states
            .iter()
            .zip(&self.uavs)
            .filter(|(s, _)| !s.arrived)
            .map(|(s, u)| VInput {
                xi: s.xi,
                vm: u.vm,
                tube: self.potential_tube(s.region),
            })
            .collect();
        total_v(&inputs, &self.params.potentials)
    }

    /// This world after one lockstep update of every visible UAV by `dt`.
    /// Arrivals, events and invariant tracking are left to the simulator.
    pub fn advanced(&self, dt: f64, integrator: Integrator) -> Result<World> {
        let snap = self.snapshot();
        let index = NeighborIndex::build(&snap, self.params.r_d, NeighborMode::Brute);
        let mut next = self.clone();
        for k in 0..snap.len() {
            let i = snap[k].index;
            let vc = self.command(&snap, k, &index)?;
            let s = integrator.step(&self.states[i], &self.uavs[i], vc, dt);
            next.states[i] = UavState {
                region: classify_region(s.xi, &self.tube),
                ..s
            };
        }
        next.t = self.t + dt;
        Ok(next)
    }

    /// Command for `snap[k]`, given the neighbour index for the snapshot.
    fn command(&self, snap: &[SnapEntry], k: usize, index: &NeighborIndex) -> Result<Vec2> {
        let e = &snap[k];
        let r_sa = self.params.r_s() + self.params.r_a();
        let nbrs = index.observations(snap, k, self.params.r_d, r_sa);
        let vm = self.uavs[e.index].vm;
        let terms = if self.states[e.index].arrived {
            tube_command(e.xi, vm, &nbrs, &self.tube, &self.params)?
        } else {
            dispatch(e.xi, vm, &nbrs, &self.tube, &self.aux, &self.params)?
        };
        Ok(terms.command)
    }
}

/// Run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub integrator: Integrator,
    /// Keep every k-th step in the trajectory table.
    pub record_every: u32,
    pub threads: usize,
    pub neighbor_mode: NeighborMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            t_max: 400.0,
            integrator: Integrator::Exact,
            record_every: 10,
            threads: 1,
            neighbor_mode: NeighborMode::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepStatus {
    Running,
    Complete,
    TimedOut,
}

/// Drives a [`World`] and accumulates its [`RunRecord`].
pub struct Simulator {
    world: World,
    cfg: SimConfig,
    pool: rayon::ThreadPool,
    step_index: u64,
    max_steps: u64,
    record: RunRecord,
    open_conflicts: BTreeSet<(usize, usize)>,
    open_breaches: BTreeSet<usize>,
    stall_since: Vec<Option<f64>>,
    status: StepStatus,
}

impl Simulator {
    pub fn new(world: World, cfg: SimConfig) -> Result<Self> {
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", cfg.dt)));
        }
        if !(cfg.t_max > 0.0) {
            return Err(Error::param("t_max", format!("must be positive, got {}", cfg.t_max)));
        }
        if cfg.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        if cfg.threads == 0 {
            return Err(Error::param("threads", "must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::param("threads", e.to_string()))?;
        let n = world.uavs.len();
        let max_steps = (cfg.t_max / cfg.dt - 1e-9).ceil().max(0.0) as u64;
        let mut sim = Simulator {
            record: RunRecord {
                dt: cfg.dt,
                ids: world.uavs.iter().map(|u| u.id).collect(),
                arrival_times: vec![None; n],
                ..RunRecord::default()
            },
            world,
            cfg,
            pool,
            step_index: 0,
            max_steps,
            open_conflicts: BTreeSet::new(),
            open_breaches: BTreeSet::new(),
            stall_since: vec![None; n],
            status: StepStatus::Running,
        };
        let prev: Vec<Region> = sim.world.states.iter().map(|s| s.region).collect();
        sim.evaluate(&prev)?;
        Ok(sim)
    }

    pub fn world(&self) -> &World {
        &self.world
    }
    pub fn record(&self) -> &RunRecord {
        &self.record
    }
    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }
    /// Takes the trajectory rows recorded so far, for callers that stream
    /// them out instead of keeping the whole table.
    pub fn drain_rows(&mut self) -> Vec<TrajRow> {
        std::mem::take(&mut self.record.rows)
    }

    pub fn status(&self) -> StepStatus {
        self.status
    }

    /// Advance by one step, or detect that the run is over.
    pub fn step(&mut self) -> Result<StepStatus> {
        if self.status != StepStatus::Running {
            return Ok(self.status);
        }
        let t = self.world.t;
        self.arrival_scan(t);
        if (0..self.world.states.len()).all(|i| !self.world.is_visible(i)) {
            return Ok(self.finish(StepStatus::Complete));
        }
        if self.step_index >= self.max_steps {
            return Ok(self.finish(StepStatus::TimedOut));
        }

        let snap = self.world.snapshot();
        let index = NeighborIndex::build(&snap, self.world.params.r_d, self.cfg.neighbor_mode);
        let started = Instant::now();
        let world = &self.world;
        let commands: Vec<Vec2> = self.pool.install(|| {
            (0..snap.len())
                .into_par_iter()
                .map(|k| world.command(&snap, k, &index))
                .collect::<Result<Vec<_>>>()
        })?;
        self.record.compute_times.push(started.elapsed().as_secs_f64());

        if self.step_index.is_multiple_of(u64::from(self.cfg.record_every)) {
            for (e, &vc) in snap.iter().zip(&commands) {
                self.push_row(t, e.index, vc);
            }
        }

        let dt = self.cfg.dt;
        let prev: Vec<Region> = self.world.states.iter().map(|s| s.region).collect();
        let stats = &mut self.record.invariants;
        for (e, &vc) in snap.iter().zip(&commands) {
            let i = e.index;
            let u = &self.world.uavs[i];
            let old = self.world.states[i];
            let new = self.cfg.integrator.step(&old, u, vc, dt);
            if !new.p.is_finite() || !new.v.is_finite() {
                return Err(Error::NonFinite {
                    t: t + dt,
                    dump: format!(
                        "UAV {}: p {} v {} -> p {} v {} under command {}",
                        u.id, old.p, old.v, new.p, new.v, vc
                    ),
                });
            }
            let want = old.xi + vc * dt;
            let scale = new.xi.norm().max(old.xi.norm()).max(1.0);
            stats.max_kinematic_error = stats.max_kinematic_error.max((new.xi - want).norm() / scale);
            stats.max_command_ratio = stats.max_command_ratio.max(vc.norm() / u.vm);
            if self.world.speed_bounded[i] {
                stats.max_speed_excess = stats.max_speed_excess.max(new.v.norm() - u.vm);
            }
            self.world.states[i] = new;
        }
        self.step_index += 1;
        self.world.t = self.step_index as f64 * dt;
        self.evaluate(&prev)?;
        Ok(StepStatus::Running)
    }

    /// Step until all UAVs have arrived or time runs out.
    pub fn run(mut self) -> Result<RunRecord> {
        while self.step()? == StepStatus::Running {}
        Ok(self.record)
    }

    fn finish(&mut self, status: StepStatus) -> StepStatus {
        self.status = status;
        self.record.complete = status == StepStatus::Complete;
        self.record.end_time = self.world.t;
        status
    }

    fn push_row(&mut self, t: f64, i: usize, vc: Vec2) {
        let s = &self.world.states[i];
        self.record.rows.push(TrajRow {
            t,
            id: self.world.uavs[i].id,
            p: s.p,
            v: s.v,
            xi: s.xi,
            vc,
            region: s.region,
            arrived: s.arrived,
        });
    }

    fn arrival_scan(&mut self, t: f64) {
        for i in 0..self.world.states.len() {
            let s = &self.world.states[i];
            if s.arrived {
                continue;
            }
            let crossed =
                arrival_test(s.p, &self.world.tube, self.world.params.eps_0) || s.region == Region::PastFinish;
            if !crossed {
                continue;
            }
            self.world.states[i].arrived = true;
            self.record.arrival_times[i] = Some(t);
            self.stall_since[i] = None;
            let id = self.world.uavs[i].id;
            self.record.events.push(Event::new(t, EventKind::Arrival, vec![id]));
            self.push_row(t, i, Vec2::ZERO);
            if self.world.is_visible(i) {
                continue;
            }
            if self.open_breaches.remove(&i) {
                self.record
                    .events
                    .push(Event::new(t, EventKind::TubeBreachEnd, vec![id]));
            }
            let closed: Vec<(usize, usize)> = self
                .open_conflicts
                .iter()
                .copied()
                .filter(|&(a, b)| a == i || b == i)
                .collect();
            for pair in closed {
                self.open_conflicts.remove(&pair);
                self.record.events.push(Event::new(
                    t,
                    EventKind::ConflictEnd,
                    vec![self.world.uavs[pair.0].id, self.world.uavs[pair.1].id],
                ));
            }
        }
    }

    /// Regions, events, invariant checks and the metric sample at the
    /// current time. `prev` holds each UAV's region before the step.
    fn evaluate(&mut self, prev: &[Region]) -> Result<()> {
        let t = self.world.t;
        let w = &mut self.world;
        let r_s = w.params.r_s();
        let r_sa = r_s + w.params.r_a();
        let r_v = w.limits.r_v;
        let r_t = w.tube.r_t();
        let visible: Vec<usize> = (0..w.states.len())
            .filter(|&i| !w.states[i].arrived || w.params.faults.keep_arrived)
            .collect();
        let events = &mut self.record.events;
        let stats = &mut self.record.invariants;

        let mut min_margin = f64::INFINITY;
        let mut min_margin_xi = f64::INFINITY;
        for &i in &visible {
            let id = w.uavs[i].id;
            let region = classify_region(w.states[i].xi, &w.tube);
            let old = w.states[i].region;
            if region != old {
                let mut e = Event::new(t, EventKind::RegionChange, vec![id]);
                e.from = Some(old);
                e.to = Some(region);
                events.push(e);
                w.states[i].region = region;
            }
            let s = &w.states[i];
            let breaching = region.in_band() && tube_errors(s.xi, s.p, &w.tube).xi_t.norm() >= r_t - r_s;
            if breaching && self.open_breaches.insert(i) {
                let e = Event::new(t, EventKind::TubeBreachStart, vec![id]);
                if t > 0.0 && prev[i].in_band() {
                    self.record.safety_violations.push(e.clone());
                }
                events.push(e);
            } else if !breaching && self.open_breaches.remove(&i) {
                events.push(Event::new(t, EventKind::TubeBreachEnd, vec![id]));
            }
            if region.in_band() {
                min_margin = min_margin.min(wall_clearance(s.p, &w.tube));
                min_margin_xi = min_margin_xi.min(wall_clearance(s.xi, &w.tube));
            }
            if !s.arrived {
                let slow = s.v.norm() < STALL_FRACTION * w.uavs[i].vm;
                if slow {
                    let since = *self.stall_since[i].get_or_insert(t);
                    stats.max_stall_time = stats.max_stall_time.max(t - since);
                } else {
                    self.stall_since[i] = None;
                }
            }
        }

        let mut min_p = f64::INFINITY;
        let mut min_xi = f64::INFINITY;
        for (a_pos, &a) in visible.iter().enumerate() {
            for &b in &visible[a_pos + 1..] {
                let (sa, sb) = (&w.states[a], &w.states[b]);
                let dp = sa.p.distance(sb.p);
                let dxi = sa.xi.distance(sb.xi);
                min_p = min_p.min(dp);
                min_xi = min_xi.min(dxi);
                let r = dxi - 2.0 * r_v - SEPARATION_TOL;
                if r > 0.0 && !check_separation_implication(sa.xi, sb.xi, sa.p, sb.p, r, r_v) {
                    stats.separation_violations += 1;
                }
                if dxi <= r_sa && dp > w.params.r_d {
                    stats.detection_violations += 1;
                }
                let ids = || vec![w.uavs[a].id, w.uavs[b].id];
                if dxi <= 2.0 * r_s {
                    if self.open_conflicts.insert((a, b)) {
                        let e = Event::new(t, EventKind::ConflictStart, ids());
                        if t > 0.0 {
                            self.record.safety_violations.push(e.clone());
                        }
                        events.push(e);
                    }
                } else if self.open_conflicts.remove(&(a, b)) {
                    events.push(Event::new(t, EventKind::ConflictEnd, ids()));
                }
            }
        }

        let total_v = self.world.total_v()?;
        self.record.trace.push(MetricSample {
            t,
            min_p_distance: min_p,
            min_xi_distance: min_xi,
            min_tube_margin: min_margin,
            min_tube_margin_xi: min_margin_xi,
            total_v,
            live: visible.len(),
        });
        Ok(())
    }
}

/// Simulate `world` to completion or timeout.
pub fn run(world: World, cfg: SimConfig) -> Result<RunRecord> {
    Simulator::new(world, cfg)?.run()
}

/// Scalar summary of a finished run.
pub fn metrics(record: &RunRecord) -> Summary {
    record.summary()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{Gains, PotentialParams};

    fn params() -> ControlParams {
        ControlParams::new(PotentialParams::new(20.0, 30.0, Gains::default()).unwrap(), 80.0)
    }

    fn tube() -> TubeSpec {
        TubeSpec::new(Vec2::ZERO, Vec2::new(500.0, 0.0), 150.0).unwrap()
    }

    fn init(id: u32, x: f64, y: f64, vm: f64) -> UavInit {
        UavInit {
            params: UavParams::new(id, 5.0, vm).unwrap(),
            p0: Vec2::new(x, y),
            v0: Vec2::ZERO,
        }
    }

    #[test]
    fn empty_world_completes_immediately() {
        let w = World::new(tube(), params(), &[]).unwrap();
        let r = run(w, SimConfig::default()).unwrap();
        assert!(r.complete);
        assert_eq!(r.end_time, 0.0);
        assert!(r.trace[0].min_p_distance.is_infinite());
    }

    #[test]
    fn assumption_one_is_enforced() {
        let mut p = params();
        p.r_d = 50.0;
        let err = World::new(tube(), p, &[init(1, 0.0, 0.0, 15.0)]).unwrap_err();
        assert!(matches!(err, Error::DetectionRadius { bound, .. } if bound == 56.0));
    }

    #[test]
    fn lone_uav_moves_by_command() {
        let w = World::new(tube(), params(), &[init(1, 100.0, 0.0, 5.0)]).unwrap();
        let mut sim = Simulator::new(w, SimConfig::default()).unwrap();
        let xi0 = sim.world().states()[0].xi;
        sim.step().unwrap();
        let xi1 = sim.world().states()[0].xi;
        assert!((xi1 - (xi0 + Vec2::new(5.0, 0.0) * 0.01)).norm() < 1e-12);
        assert_eq!(sim.world().t(), 0.01);
    }

    #[test]
    fn lone_uav_arrives() {
        let w = World::new(tube(), params(), &[init(7, 300.0, 10.0, 5.0)]).unwrap();
        let r = run(w, SimConfig::default()).unwrap();
        assert!(r.complete);
        let t = r.arrival_time(7).unwrap();
        // 40 s at full speed, then an exponential approach to within eps_0
        assert!(t > 45.0 && t < 49.0, "{t}");
        assert!(r.events.iter().any(|e| e.kind == EventKind::Arrival));
        assert!(r.rows.last().unwrap().arrived);
    }

    #[test]
    fn starting_past_the_finish_counts_as_arrived() {
        let w = World::new(tube(), params(), &[init(1, 600.0, 0.0, 5.0)]).unwrap();
        let r = run(w, SimConfig::default()).unwrap();
        assert!(r.complete);
        assert_eq!(r.arrival_time(1), Some(0.0));
    }

    #[test]
    fn timeout_is_reported() {
        let w = World::new(tube(), params(), &[init(1, 0.0, 0.0, 5.0)]).unwrap();
        let cfg = SimConfig {
            t_max: 1.0,
            ..SimConfig::default()
        };
        let r = run(w, cfg).unwrap();
        assert!(!r.complete);
        assert!((r.end_time - 1.0).abs() < 1e-12);
        assert_eq!(r.trace.len(), 101);
    }

    #[test]
    fn seeded_conflict_opens_then_closes() {
        let w = World::new(
            tube(),
            params(),
            &[init(2, -500.0, -0.1, 5.5), init(3, -500.0, 0.1, 5.75)],
        )
        .unwrap();
        assert_eq!(w.warnings().len(), 1);
        let r = run(w, SimConfig::default()).unwrap();
        let starts: Vec<_> = r.events.iter().filter(|e| e.kind == EventKind::ConflictStart).collect();
        assert_eq!(starts.len(), 1);
        assert_eq!(starts[0].t, 0.0);
        assert!(r.events.iter().any(|e| e.kind == EventKind::ConflictEnd));
        assert!(r.safety_violations.is_empty());
        assert!(r.complete);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let inits: Vec<_> = (0..12)
            .map(|i| {
                init(
                    i + 1,
                    -300.0 + 45.0 * f64::from(i),
                    60.0 * f64::from(i % 3) - 60.0,
                    5.0 + f64::from(i) / 4.0,
                )
            })
            .collect();
        let go = |threads| {
            let w = World::new(tube(), params(), &inits).unwrap();
            let cfg = SimConfig {
                threads,
                t_max: 30.0,
                ..SimConfig::default()
            };
            run(w, cfg).unwrap()
        };
        let (a, b) = (go(1), go(4));
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.events, b.events);
    }
}
