//! Scenario files: schema, UAV generators, validation and world building.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{ControlParams, DEFAULT_AUX_RADIUS};
use crate::dynamics::{Integrator, UavParams};
use crate::error::{Error, Result};
use crate::geometry::TubeSpec;
use crate::math::Vec2;
use crate::potentials::{Gains, PotentialParams, DEFAULT_EPS};
use crate::simulation::{NeighborMode, SimConfig, UavInit, World};

pub const SCENARIO_SCHEMA: &str = "vtube-scenario/1";
pub const MANIFEST_SCHEMA: &str = "vtube-manifest/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeConfig {
    pub p_t1: Vec2,
    pub p_t2: Vec2,
    pub r_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_count: Option<u32>,
}

fn one() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub r_s: f64,
    pub r_a: f64,
    pub r_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_sr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_rt: Option<f64>,
    #[serde(default = "one")]
    pub k1: f64,
    #[serde(default = "one")]
    pub k2: f64,
    #[serde(default = "one")]
    pub k3: f64,
    #[serde(default = "default_eps")]
    pub eps_m: f64,
    #[serde(default = "default_eps")]
    pub eps_t: f64,
    #[serde(default = "default_eps")]
    pub eps_s: f64,
    #[serde(default = "one")]
    pub eps_0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavConfig {
    pub id: u32,
    pub p0: Vec2,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub v0: Vec2,
    pub l: f64,
    pub vm: f64,
}

fn is_zero(v: &Vec2) -> bool {
    *v == Vec2::ZERO
}

/// Where generated UAVs start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "placement", rename_all = "snake_case")]
pub enum Placement {
    Explicit {
        positions: Vec<Vec2>,
    },
    /// Row-major grid starting at `origin`.
    Grid {
        origin: Vec2,
        spacing: Vec2,
        columns: u32,
    },
    /// Evenly spaced on a circle, starting on the +x axis.
    Ring {
        center: Vec2,
        radius: f64,
    },
}

/// Generates `count` UAVs with ids `1..=count` and speed limits
/// `vm + i * vm_step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub count: u32,
    #[serde(flatten)]
    pub placement: Placement,
    #[serde(default)]
    pub seed: u64,
    /// Uniform positional jitter half-width, drawn from `seed`.
    #[serde(default)]
    pub jitter: f64,
    pub l: f64,
    pub vm: f64,
    #[serde(default)]
    pub vm_step: f64,
}

fn default_dt() -> f64 {
    0.01
}
fn default_t_max() -> f64 {
    400.0
}
fn default_record_every() -> u32 {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_record_every")]
    pub record_every: u32,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            dt: default_dt(),
            t_max: default_t_max(),
            integrator: Integrator::Exact,
            record_every: default_record_every(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub tube: TubeConfig,
    pub params: ParamsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uavs: Option<Vec<UavConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub sim: SimSettings,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub git_rev: String,
    pub dt: f64,
    pub integrator: Integrator,
    pub threads: usize,
    pub warnings: Vec<String>,
    /// Resolved scenario: explicit UAV list, overrides applied.
    pub scenario: ScenarioFile,
}

/// A validated scenario ready to simulate.
#[derive(Clone, Debug)]
pub struct Scenario {
    /// The scenario with generated UAVs expanded into an explicit list.
    pub file: ScenarioFile,
    pub world: World,
}

impl Scenario {
    pub fn sim_config(&self, threads: usize) -> SimConfig {
        let s = &self.file.sim;
        SimConfig {
            dt: s.dt,
            t_max: s.t_max,
            integrator: s.integrator,
            record_every: s.record_every,
            threads,
            neighbor_mode: NeighborMode::Auto,
        }
    }
}

impl GeneratorConfig {
    pub fn generate(&self) -> Result<Vec<UavConfig>> {
        let n = self.count as usize;
        let mut pos: Vec<Vec2> = match &self.placement {
            Placement::Explicit { positions } => {
                if positions.len() != n {
                    return Err(Error::scenario(
                        "generator.positions",
                        format!("expected {n} positions, got {}", positions.len()),
                    ));
                }
                positions.clone()
            }
            Placement::Grid {
                origin,
                spacing,
                columns,
            } => {
                if *columns == 0 {
                    return Err(Error::scenario("generator.columns", "must be at least 1"));
                }
                (0..self.count)
                    .map(|i| {
                        let (r, c) = (i / columns, i % columns);
                        *origin + Vec2::new(spacing.x * f64::from(c), spacing.y * f64::from(r))
                    })
                    .collect()
            }
            Placement::Ring { center, radius } => (0..n)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / n as f64;
                    *center + Vec2::new(a.cos(), a.sin()) * *radius
                })
                .collect(),
        };
        if self.jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for p in &mut pos {
                *p += Vec2::new(
                    rng.gen_range(-self.jitter..=self.jitter),
                    rng.gen_range(-self.jitter..=self.jitter),
                );
            }
        }
        Ok(pos
            .into_iter()
            .enumerate()
            .map(|(i, p0)| UavConfig {
                id: i as u32 + 1,
                p0,
                v0: Vec2::ZERO,
                l: self.l,
                vm: self.vm + self.vm_step * (i as f64 + 1.0),
            })
            .collect())
    }
}

/// Re-tag parameter errors with their location in the file.
fn at(path: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::scenario(format!("{path}.{field}"), reason),
        Error::DetectionRadius { r_d, bound } => Error::scenario(
            "params.r_d",
            format!("r_d = {r_d} must exceed r_s + r_a + 2 r_v = {bound}"),
        ),
        Error::DegenerateGeometry(reason) => Error::scenario(path, reason),
        other => other,
    }
}

impl ScenarioFile {
    /// Copy with any generator expanded into an explicit UAV list.
    pub fn resolved(&self) -> Result<ScenarioFile> {
        let uavs = match (&self.uavs, &self.generator) {
            (Some(u), None) => u.clone(),
            (None, Some(g)) => g.generate()?,
            (Some(_), Some(_)) => return Err(Error::scenario("uavs", "give either `uavs` or `generator`, not both")),
            (None, None) => return Err(Error::scenario("uavs", "missing `uavs` or `generator`")),
        };
        Ok(ScenarioFile {
            uavs: Some(uavs),
            generator: None,
            ..self.clone()
        })
    }

    pub fn control_params(&self) -> Result<ControlParams> {
        let p = &self.params;
        let gains = Gains {
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            eps_m: p.eps_m,
            eps_t: p.eps_t,
            eps_s: p.eps_s,
        };
        let pot = PotentialParams::new(p.r_s, p.r_a, gains).map_err(|e| at("params", e))?;
        let mut cp = ControlParams::new(pot, p.r_d);
        cp.r_b = p.r_b.unwrap_or(p.r_a);
        cp.r_sr = p.r_sr.unwrap_or(DEFAULT_AUX_RADIUS);
        cp.r_rt = p.r_rt.unwrap_or(DEFAULT_AUX_RADIUS);
        cp.eps_0 = p.eps_0;
        Ok(cp)
    }

    pub fn tube_spec(&self) -> Result<TubeSpec> {
        let t = &self.tube;
        let spec = TubeSpec::new(t.p_t1, t.p_t2, t.r_t).map_err(|e| at("tube", e))?;
        match t.lane_count {
            Some(l) => spec.with_lanes(l, self.params.r_a).map_err(|e| at("tube", e)),
            None => Ok(spec),
        }
    }

    fn validate_sim(&self) -> Result<()> {
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(Error::scenario("sim.dt", format!("must be positive, got {}", s.dt)));
        }
        if !(s.t_max > 0.0 && s.t_max.is_finite()) {
            return Err(Error::scenario(
                "sim.t_max",
                format!("must be positive, got {}", s.t_max),
            ));
        }
        if s.record_every == 0 {
            return Err(Error::scenario("sim.record_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Validate and build the world.
    pub fn build(&self) -> Result<Scenario> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::scenario(
                "schema",
                format!("expected `{SCENARIO_SCHEMA}`, got `{}`", self.schema),
            ));
        }
        let file = self.resolved()?;
        file.validate_sim()?;
        let tube = file.tube_spec()?;
        let params = file.control_params()?;
        let mut inits = Vec::new();
        for (k, u) in file.uavs.as_deref().unwrap_or_default().iter().enumerate() {
            let params = UavParams::new(u.id, u.l, u.vm).map_err(|e| at(&format!("uavs[{k}]"), e))?;
            inits.push(UavInit {
                params,
                p0: u.p0,
                v0: u.v0,
            });
        }
        let world = World::new(tube, params, &inits).map_err(|e| at("params", e))?;
        Ok(Scenario { file, world })
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::scenario(format!("{origin}: {path}"), e.into_inner().to_string())
    })
}

/// Parse scenario or manifest JSON. A manifest yields its embedded scenario.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioFile> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::scenario(origin.to_owned(), e.to_string()))?;
    if v.get("schema").and_then(|s| s.as_str()) == Some(MANIFEST_SCHEMA) {
        let m: Manifest = parse(text, origin)?;
        Ok(m.scenario)
    } else {
        parse(text, origin)
    }
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text, &path.display().to_string())
}

/// Read, validate and build a scenario or manifest.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_file(path)?.build()
}
