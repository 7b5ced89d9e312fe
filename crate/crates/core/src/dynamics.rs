//! Velocity-tracking point-mass model and its discretisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::math::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavParams {
    pub id: u32,
    /// Velocity-tracking gain (1/s).
    pub l: f64,
    /// Speed limit (m/s).
    pub vm: f64,
}

impl UavParams {
    pub fn new(id: u32, l: f64, vm: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param("l", format!("UAV {id}: must be positive, got {l}")));
        }
        if !(vm > 0.0 && vm.is_finite()) {
            return Err(Error::param("vm", format!("UAV {id}: must be positive, got {vm}")));
        }
        Ok(UavParams { id, l, vm })
    }

    /// `vm / l`: how far ahead of `p` the filtered position can sit.
    pub fn r_v(&self) -> f64 {
        self.vm / self.l
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UavState {
    pub p: Vec2,
    pub v: Vec2,
    pub xi: Vec2,
    pub arrived: bool,
    pub region: Region,
}

impl UavState {
    pub fn new(p: Vec2, v: Vec2, l: f64, region: Region) -> Self {
        UavState {
            p,
            v,
            xi: filtered_position(p, v, l),
            arrived: false,
            region,
        }
    }
}

#[inline]
pub fn filtered_position(p: Vec2, v: Vec2, l: f64) -> Vec2 {
    p + v / l
}

/// Swarm-wide bounds derived from the UAV parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmLimits {
    pub r_v: f64,
}

impl SwarmLimits {
    pub fn from_uavs<'a>(uavs: impl IntoIterator<Item = &'a UavParams>) -> Self {
        let r_v = uavs.into_iter().map(UavParams::r_v).fold(0.0, f64::max);
        SwarmLimits { r_v }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Closed-form solution under a command held constant over the step.
    #[default]
    Exact,
    /// Forward Euler.
    Euler,
}

impl std::str::FromStr for Integrator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Integrator::Exact),
            "euler" => Ok(Integrator::Euler),
            _ => Err(format!("unknown integrator `{s}` (expected exact or euler)")),
        }
    }
}

impl Integrator {
    pub fn as_str(self) -> &'static str {
        match self {
            Integrator::Exact => "exact",
            Integrator::Euler => "euler",
        }
    }

    pub fn step(self, state: &UavState, params: &UavParams, vc: Vec2, dt: f64) -> UavState {
        match self {
            Integrator::Exact => step_exact(state, params, vc, dt),
            Integrator::Euler => step_euler(state, params, vc, dt),
        }
    }
}

/// Advance `p' = v`, `v' = -l (v - vc)` by `dt` with `vc` held constant.
pub fn step_exact(state: &UavState, params: &UavParams, vc: Vec2, dt: f64) -> UavState {
    let l = params.l;
    let e = (-l * dt).exp();
    let dv = state.v - vc;
    // 1 - e without cancellation for small l dt
    let one_minus_e = -(-l * dt).exp_m1();
    let v = vc + dv * e;
    let p = state.p + vc * dt + dv * (one_minus_e / l);
    UavState {
        p,
        v,
        xi: filtered_position(p, v, l),
        ..*state
    }
}

pub fn step_euler(state: &UavState, params: &UavParams, vc: Vec2, dt: f64) -> UavState {
    let l = params.l;
    let p = state.p + state.v * dt;
    let v = state.v - (state.v - vc) * (l * dt);
    UavState {
        p,
        v,
        xi: filtered_position(p, v, l),
        ..*state
    }
}

/// Whether `|xi_i - xi_j| >= r + 2 r_v` implies `|p_i - p_j| >= r`.
/// Returns false only when the implication is violated.
pub fn check_separation_implication(xi_i: Vec2, xi_j: Vec2, p_i: Vec2, p_j: Vec2, r: f64, r_v: f64) -> bool {
    xi_i.distance(xi_j) < r + 2.0 * r_v || p_i.distance(p_j) >= r
}
