//! Distributed control of UAV swarms passing through a straight virtual
//! tube, with a deterministic lockstep simulator.
//!
//! Each UAV tracks a velocity command with first-order lag. The command sums
//! a saturated pull towards the finishing line, pairwise repulsion from
//! regularised barrier potentials and a barrier that keeps the UAV inside
//! the tube. UAVs outside the tube are funnelled in through four auxiliary
//! tubes selected by airspace region.

pub mod controller;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod math;
pub mod output;
pub mod perf;
pub mod potentials;
pub mod scenario;
pub mod selfcheck;
pub mod shaping;
pub mod simulation;

pub use controller::{build_aux_tubes, dispatch, tube_command, AuxTubes, ControlParams, ControlTermSet, NeighborObs};
pub use dynamics::{filtered_position, step_exact, Integrator, SwarmLimits, UavParams, UavState};
pub use error::{Error, Result};
pub use geometry::{classify_region, Region, TubeSpec};
pub use math::{Mat2, Vec2};
pub use potentials::{Gains, PotentialParams};
pub use scenario::{load_scenario, Manifest, Scenario, ScenarioFile};
pub use simulation::{run, Event, EventKind, RunRecord, SimConfig, Simulator, Summary, TrajRow, UavInit, World};
