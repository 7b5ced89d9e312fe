use serde::{Deserialize, Serialize};

use crate::geometry::Region;
use crate::math::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ConflictStart,
    ConflictEnd,
    TubeBreachStart,
    TubeBreachEnd,
    Arrival,
    RegionChange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub subject_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Region>,
}

impl Event {
    pub(crate) fn new(t: f64, kind: EventKind, subject_ids: Vec<u32>) -> Self {
        Event {
            t,
            kind,
            subject_ids,
            from: None,
            to: None,
        }
    }
}

/// One trajectory table row. `vc` is the command applied from `t` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajRow {
    pub t: f64,
    pub id: u32,
    pub p: Vec2,
    pub v: Vec2,
    pub xi: Vec2,
    pub vc: Vec2,
    pub region: Region,
    pub arrived: bool,
}

/// Swarm-level quantities after each step. Distances are `+inf` when fewer
/// than two UAVs are live, margins when none is in the tube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSample {
    pub t: f64,
    pub min_p_distance: f64,
    pub min_xi_distance: f64,
    /// Smallest distance from a physical position to the tube walls, over
    /// UAVs whose filtered position is in the tube or its extension.
    pub min_tube_margin: f64,
    /// Same as `min_tube_margin` but measured with the filtered position.
    pub min_tube_margin_xi: f64,
    pub total_v: f64,
    pub live: usize,
}

/// Running checks of the model's structural guarantees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantStats {
    /// Largest `|xi⁺ - xi - vc dt| / max(|xi⁺|, 1)` over all UAV steps.
    pub max_kinematic_error: f64,
    /// Largest `|v| - vm` over all UAV steps, for UAVs starting within
    /// their limit.
    pub max_speed_excess: f64,
    /// Pairs where a filtered separation did not imply the physical one.
    pub separation_violations: u64,
    /// Pairs inside each other's avoidance range but not detected.
    pub detection_violations: u64,
    /// Longest time any live UAV spent below `1e-3 vm`.
    pub max_stall_time: f64,
    /// Largest `|command| / vm`.
    pub max_command_ratio: f64,
}

/// Everything a run produced.
#[derive(Clone, Debug, Default)]
pub struct RunRecord {
    pub dt: f64,
    pub rows: Vec<TrajRow>,
    pub events: Vec<Event>,
    pub trace: Vec<MetricSample>,
    /// Indexed like the world's UAV list.
    pub ids: Vec<u32>,
    pub arrival_times: Vec<Option<f64>>,
    pub complete: bool,
    pub end_time: f64,
    /// Conflicts or in-tube breaches that started after `t = 0`.
    pub safety_violations: Vec<Event>,
    pub invariants: InvariantStats,
    /// Wall-clock seconds spent computing commands, per step.
    pub compute_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalTime {
    pub id: u32,
    pub t: Option<f64>,
}

/// Scalar summary of a [`RunRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub complete: bool,
    pub end_time: f64,
    /// `None` stands for no pair ever being live.
    pub min_p_distance: Option<f64>,
    pub min_p_distance_t: Option<f64>,
    pub min_xi_distance: Option<f64>,
    pub min_tube_margin: Option<f64>,
    pub min_tube_margin_t: Option<f64>,
    pub arrival_time_max: Option<f64>,
    pub arrivals: Vec<ArrivalTime>,
    pub safety_violations: usize,
    pub conflict_starts: usize,
    pub breach_starts: usize,
    pub invariants: InvariantStats,
    pub mean_step_compute_s: f64,
    pub max_step_compute_s: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn argmin(trace: &[MetricSample], f: impl Fn(&MetricSample) -> f64) -> (f64, Option<f64>) {
    let mut best = f64::INFINITY;
    let mut at = None;
    for s in trace {
        let v = f(s);
        if v < best {
            best = v;
            at = Some(s.t);
        }
    }
    (best, at)
}

impl RunRecord {
    pub fn summary(&self) -> Summary {
        let (min_p, min_p_t) = argmin(&self.trace, |s| s.min_p_distance);
        let (min_xi, _) = argmin(&self.trace, |s| s.min_xi_distance);
        let (min_m, min_m_t) = argmin(&self.trace, |s| s.min_tube_margin);
        let count = |k: EventKind| self.events.iter().filter(|e| e.kind == k).count();
        let n = self.compute_times.len().max(1) as f64;
        Summary {
            complete: self.complete,
            end_time: self.end_time,
            min_p_distance: finite(min_p),
            min_p_distance_t: min_p_t,
            min_xi_distance: finite(min_xi),
            min_tube_margin: finite(min_m),
            min_tube_margin_t: min_m_t,
            arrival_time_max: if self.complete {
                self.arrival_times.iter().flatten().copied().reduce(f64::max)
            } else {
                None
            },
            arrivals: self
                .ids
                .iter()
                .zip(&self.arrival_times)
                .map(|(&id, &t)| ArrivalTime { id, t })
                .collect(),
            safety_violations: self.safety_violations.len(),
            conflict_starts: count(EventKind::ConflictStart),
            breach_starts: count(EventKind::TubeBreachStart),
            invariants: self.invariants,
            mean_step_compute_s: self.compute_times.iter().sum::<f64>() / n,
            max_step_compute_s: self.compute_times.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn arrival_time(&self, id: u32) -> Option<f64> {
        let i = self.ids.iter().position(|&x| x == id)?;
        self.arrival_times[i]
    }
}
