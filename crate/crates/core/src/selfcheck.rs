//! Runtime invariant suite behind `vtube check`.
//!
//! Every check compares the library against an oracle computed here from
//! scratch (finite differences, quadrature, Runge-Kutta) or against the
//! invariants gathered while simulating a set of scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::Faults;
use crate::dynamics::{step_exact, UavParams, UavState};
use crate::error::Result;
use crate::geometry::Region;
use crate::math::Vec2;
use crate::potentials::{gain_b, gain_c, v_m, v_t, Gains, PotentialParams};
use crate::scenario::ScenarioFile;
use crate::shaping::{bump, bump_deriv, smooth_sat, smooth_sat_deriv, vli_value, BumpSpec, SmoothSatSpec};
use crate::simulation::{RunRecord, SimConfig, Simulator, StepStatus};

pub const SAMPLES: usize = 1000;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const QUADRATURE_TOL: f64 = 1e-8;
pub const ZOH_TOL: f64 = 1e-9;
pub const KINEMATIC_TOL: f64 = 1e-12;
pub const SPEED_TOL: f64 = 1e-9;
pub const STALL_LIMIT: f64 = 10.0;
/// Window over which the V increments are fitted, in seconds.
pub const V_WINDOW: f64 = 30.0;
/// Largest accepted ratio `c(dt/2) / c(dt)`. Second-order growth keeps it
/// near 1, a first-order term pushes it to 2.
pub const V_RATIO_LIMIT: f64 = 1.5;

/// Narrowest arc in the smooth-saturation oracle. Below this the arc spans
/// too few ulps around 1 for a central difference to reach [`GRADIENT_TOL`].
pub const EPS_S_MIN: f64 = 1e-4;

const SEED: u64 = 0x7475_6265;

/// Result of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }
}

/// Scenarios and settings the suite runs against.
#[derive(Clone, Debug)]
pub struct Suite {
    /// Every shipped scenario, by name.
    pub scenarios: Vec<(String, ScenarioFile)>,
    /// Basic-problem scenario with no arrivals inside [`V_WINDOW`].
    pub basic: ScenarioFile,
    /// Crowded scenario for the trap-freedom check.
    pub crowded: ScenarioFile,
    pub faults: Faults,
    pub threads: usize,
}

/// Names of all checks, in the order they run.
pub const CHECKS: [&str; 12] = [
    "bump_gradient",
    "smooth_sat_gradient",
    "gain_b_gradient",
    "gain_c_gradient",
    "vli_quadrature",
    "zoh_exactness",
    "v_monotonicity",
    "kinematic_exactness",
    "speed_bound",
    "detection_implication",
    "conflict_freedom",
    "trap_freedom",
];

/// Runs every check whose name contains `filter`.
pub fn run_suite(suite: &Suite, filter: Option<&str>) -> Vec<CheckOutcome> {
    let selected: Vec<&'static str> = CHECKS
        .iter()
        .copied()
        .filter(|n| filter.is_none_or(|f| n.contains(f)))
        .collect();
    let needs_runs = selected.iter().any(|n| {
        matches!(
            *n,
            "kinematic_exactness" | "speed_bound" | "detection_implication" | "conflict_freedom"
        )
    });
    let runs = if needs_runs {
        suite
            .scenarios
            .iter()
            .map(|(name, file)| (name.as_str(), simulate(file, suite.faults, suite.threads)))
            .collect()
    } else {
        Vec::new()
    };

    let mut out = Vec::new();
    for name in selected {
        let outcome = match name {
            "bump_gradient" => check_bump_gradient(),
            "smooth_sat_gradient" => check_smooth_sat_gradient(),
            "gain_b_gradient" => check_gain_b_gradient(),
            "gain_c_gradient" => check_gain_c_gradient(),
            "vli_quadrature" => check_vli_quadrature(),
            "zoh_exactness" => check_zoh(),
            "v_monotonicity" => check_v_monotonicity(&suite.basic, suite.faults, suite.threads),
            "trap_freedom" => check_trap_freedom(&suite.crowded, suite.faults, suite.threads),
            _ => check_runs(name, &runs),
        };
        out.push(outcome);
    }
    out
}

/// Runs `file` to completion with its own settings.
pub fn simulate(file: &ScenarioFile, faults: Faults, threads: usize) -> Result<RunRecord> {
    let sc = file.build()?;
    let cfg = sc.sim_config(threads);
    Simulator::new(sc.world.with_faults(faults), cfg)?.run()
}

fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Worst relative error over the samples, with the sample that produced it.
#[derive(Default)]
struct Worst {
    err: f64,
    at: String,
}

impl Worst {
    fn update(&mut self, err: f64, at: impl FnOnce() -> String) {
        if err > self.err || err.is_nan() {
            self.err = if err.is_nan() { f64::INFINITY } else { err };
            self.at = at();
        }
    }

    fn outcome(self, name: &'static str, tol: f64) -> CheckOutcome {
        let detail = format!("max rel err {:.2e} (tol {tol:.0e}){}", self.err, self.at);
        CheckOutcome::new(name, self.err <= tol, detail)
    }
}

/// Central difference with step `h`.
fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Draws `x` uniformly from `(lo, hi)` until it keeps a relative gap of at
/// least `min_gap` from every knot. Returns `x` and its gap.
fn draw_away(rng: &mut ChaCha8Rng, lo: f64, hi: f64, knots: &[f64], min_gap: f64) -> (f64, f64) {
    loop {
        let x = rng.gen_range(lo..hi);
        let gap = knots.iter().map(|k| (x - k).abs()).fold(x.abs(), f64::min);
        if gap > min_gap * x.abs().max(1e-300) {
            return (x, gap);
        }
    }
}

fn check_bump_gradient() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = Worst::default();
    for _ in 0..SAMPLES {
        let d1 = rng.gen_range(1.0..100.0);
        let d2 = d1 + rng.gen_range(1.0..100.0);
        let spec = BumpSpec::new(d1, d2).expect("valid bump");
        let w = d2 - d1;
        let x = rng.gen_range(d1 + 1e-3 * w..d2 - 1e-3 * w);
        let fd = central(|x| bump(x, &spec), x, 1e-6 * w);
        let exact = bump_deriv(x, &spec);
        worst.update(rel_err(exact, fd, 0.0), || format!(" at x={x}, d1={d1}, d2={d2}"));
    }
    worst.outcome("bump_gradient", GRADIENT_TOL)
}

fn check_smooth_sat_gradient() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst = Worst::default();
    for _ in 0..SAMPLES {
        let eps = 10f64.powf(rng.gen_range(EPS_S_MIN.log10()..SmoothSatSpec::max_eps().log10()));
        let spec = SmoothSatSpec::new(eps).expect("valid eps");
        let (x1, x2) = (spec.x1(), spec.x2());
        // half the samples fall on the arc
        let (x, gap) = if rng.gen_bool(0.5) {
            draw_away(&mut rng, x1, x2, &[x1, x2], 1e-3 * eps)
        } else {
            draw_away(&mut rng, 0.0, 3.0, &[x1, x2], 1e-4)
        };
        let h = (1e-3 * eps).min(0.5 * gap);
        let fd = central(|x| smooth_sat(x, &spec).expect("x >= 0"), x, h);
        let exact = smooth_sat_deriv(x, &spec).expect("x >= 0");
        // the flat branch has an exactly zero slope
        let err = if exact == 0.0 && fd == 0.0 {
            0.0
        } else {
            rel_err(exact, fd, 1e-12)
        };
        worst.update(err, || format!(" at x={x}, eps_s={eps}"));
    }
    worst.outcome("smooth_sat_gradient", GRADIENT_TOL)
}

fn random_potentials(rng: &mut ChaCha8Rng) -> (PotentialParams, f64) {
    let r_s = rng.gen_range(1.0..50.0);
    let r_a = r_s * rng.gen_range(1.2..3.0);
    let r_t = r_a + rng.gen_range(1.0..200.0);
    let log_eps = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-6.0..-2.0));
    let g = Gains {
        k1: rng.gen_range(0.1..10.0),
        k2: rng.gen_range(0.1..10.0),
        k3: rng.gen_range(0.1..10.0),
        eps_m: log_eps(rng),
        eps_t: log_eps(rng),
        eps_s: log_eps(rng),
    };
    (PotentialParams::new(r_s, r_a, g).expect("valid potentials"), r_t)
}

fn check_gain_b_gradient() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst = Worst::default();
    for _ in 0..SAMPLES {
        let (p, _) = random_potentials(&mut rng);
        let (r_s, r_a) = (p.r_s(), p.r_a());
        let sat = p.smooth_sat_spec();
        let knots = [2.0 * r_s * sat.x1(), 2.0 * r_s * sat.x2(), 2.0 * r_s, r_s + r_a];
        let (d, gap) = draw_away(&mut rng, 0.05 * r_s, r_s + r_a + 5.0, &knots, 1e-3);
        let fd = central(|d| v_m(d, &p).expect("d > 0"), d, 1e-6 * gap);
        let exact = gain_b(d, &p).expect("d > 0") * d;
        let err = if exact == 0.0 && fd == 0.0 {
            0.0
        } else {
            rel_err(-exact, fd, 1e-12)
        };
        worst.update(err, || format!(" at d={d}, r_s={r_s}, r_a={r_a}"));
    }
    worst.outcome("gain_b_gradient", GRADIENT_TOL)
}

fn check_gain_c_gradient() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst = Worst::default();
    for _ in 0..SAMPLES {
        let (p, r_t) = random_potentials(&mut rng);
        let (r_s, r_a) = (p.r_s(), p.r_a());
        let w0 = r_t - r_s;
        let eps_t = p.eps_t();
        let sat = p.smooth_sat_spec();
        let knots = [r_t - r_a, w0, w0 / sat.x2() - eps_t, w0 / sat.x1() - eps_t];
        let (n, gap) = draw_away(&mut rng, 0.0, r_t + r_s, &knots, 1e-3);
        let fd = central(|n| v_t(n, r_t, &p), n, 1e-6 * gap);
        let exact = gain_c(n, r_t, &p) * n;
        let err = if exact == 0.0 && fd == 0.0 {
            0.0
        } else {
            rel_err(exact, fd, 1e-12)
        };
        worst.update(err, || format!(" at n={n}, r_t={r_t}, r_s={r_s}, r_a={r_a}"));
    }
    worst.outcome("gain_c_gradient", GRADIENT_TOL)
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rule(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = rule(fa, flm, fm, a, m);
        let right = rule(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, rule(fa, fm, fb, a, b), tol, 60)
}

fn check_vli_quadrature() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst = Worst::default();
    for _ in 0..SAMPLES {
        let k = rng.gen_range(0.1..10.0);
        let a = rng.gen_range(0.5..20.0);
        let y = rng.gen_range(0.01..500.0);
        // the integrand along the ray is the norm of the saturated vector
        let f = |z: f64| (k * z).min(a);
        // split at the integrand's kink
        let z = (a / k).min(y);
        let tol = 1e-12 * (a * y).max(1e-6);
        let q = simpson(&f, 0.0, z, tol) + simpson(&f, z, y, tol);
        worst.update(rel_err(vli_value(y, k, a), q, 0.0), || {
            format!(" at |y|={y}, k={k}, a={a}")
        });
    }
    worst.outcome("vli_quadrature", QUADRATURE_TOL)
}

/// Classic RK4 on `p' = v, v' = -l (v - vc)` with `n` substeps.
fn rk4(p: Vec2, v: Vec2, vc: Vec2, l: f64, dt: f64, n: usize) -> (Vec2, Vec2) {
    let h = dt / n as f64;
    let acc = |v: Vec2| (v - vc) * -l;
    let (mut p, mut v) = (p, v);
    for _ in 0..n {
        let (k1p, k1v) = (v, acc(v));
        let v2 = v + k1v * (h / 2.0);
        let (k2p, k2v) = (v2, acc(v2));
        let v3 = v + k2v * (h / 2.0);
        let (k3p, k3v) = (v3, acc(v3));
        let v4 = v + k3v * h;
        let (k4p, k4v) = (v4, acc(v4));
        p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    }
    (p, v)
}

fn check_zoh() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut worst = Worst::default();
    let vec = |rng: &mut ChaCha8Rng, r: f64| Vec2::new(rng.gen_range(-r..r), rng.gen_range(-r..r));
    for _ in 0..SAMPLES {
        let l = rng.gen_range(0.5..10.0);
        let dt = rng.gen_range(0.001..0.5);
        let p = vec(&mut rng, 1000.0);
        let v = vec(&mut rng, 20.0);
        let vc = vec(&mut rng, 20.0);
        let uav = UavParams::new(1, l, 25.0).expect("valid uav");
        let got = step_exact(&UavState::new(p, v, l, Region::TubeInterior), &uav, vc, dt);
        let (rp, rv) = rk4(p, v, vc, l, dt, 1000);
        let scale = v.norm() + vc.norm();
        let ep = (got.p - rp).norm() / rp.norm().max(1e-12 * scale);
        let ev = (got.v - rv).norm() / rv.norm().max(1e-12 * scale);
        worst.update(ep.max(ev), || format!(" at l={l}, dt={dt}"));
    }
    worst.outcome("zoh_exactness", ZOH_TOL)
}

/// Second-order coefficients of the V increments over the first
/// [`V_WINDOW`] seconds of a run at step `dt`.
///
/// From every state of the run one step of `dt` and one of `dt / 2` are
/// taken, and `c` is the largest `ΔV / h^2` over the states for each step
/// size `h`. Using the same states for both isolates the step-size
/// dependence from trajectory divergence. Increments at rounding level are
/// ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VFit {
    pub dt: f64,
    pub c_full: f64,
    pub c_half: f64,
    /// Largest increment of the run itself.
    pub max_increment: f64,
    pub states: usize,
}

impl VFit {
    /// Whether `c` stays put when the step is halved.
    pub fn second_order(&self) -> bool {
        self.c_half <= V_RATIO_LIMIT * self.c_full || self.c_half == 0.0
    }
}

/// Fits [`VFit`] on `file` at step `dt`. Fails if any UAV arrives inside the
/// window, since arrivals drop terms from V.
pub fn fit_v_increments(file: &ScenarioFile, dt: f64, faults: Faults, threads: usize) -> Result<VFit> {
    let sc = file.build()?;
    let mut cfg: SimConfig = sc.sim_config(threads);
    cfg.dt = dt;
    cfg.t_max = V_WINDOW;
    cfg.record_every = u32::MAX;
    let integrator = cfg.integrator;
    let mut sim = Simulator::new(sc.world.with_faults(faults), cfg)?;
    let coefficient = |v0: f64, v1: f64, h: f64| {
        let noise = 1e-12 * v0.abs().max(1.0);
        ((v1 - v0) - noise).max(0.0) / (h * h)
    };
    let (mut c_full, mut c_half) = (0.0_f64, 0.0_f64);
    let mut states = 0;
    while sim.status() == StepStatus::Running {
        let w = sim.world();
        let v0 = w.total_v()?;
        c_full = c_full.max(coefficient(v0, w.advanced(dt, integrator)?.total_v()?, dt));
        c_half = c_half.max(coefficient(v0, w.advanced(dt / 2.0, integrator)?.total_v()?, dt / 2.0));
        states += 1;
        sim.step()?;
    }
    let rec = sim.record();
    if let Some(t) = rec.arrival_times.iter().flatten().next() {
        return Err(crate::error::Error::param(
            "scenario",
            format!("a UAV arrived at t = {t}, inside the {V_WINDOW} s window"),
        ));
    }
    let max_increment = rec
        .trace
        .windows(2)
        .map(|w| w[1].total_v - w[0].total_v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(VFit {
        dt,
        c_full,
        c_half,
        max_increment,
        states,
    })
}

fn check_v_monotonicity(basic: &ScenarioFile, faults: Faults, threads: usize) -> CheckOutcome {
    const NAME: &str = "v_monotonicity";
    match fit_v_increments(basic, 0.01, faults, threads) {
        Err(e) => CheckOutcome::new(NAME, false, format!("simulation failed: {e}")),
        Ok(fit) => {
            let detail = format!(
                "c(0.01) = {:.3e}, c(0.005) = {:.3e} over {} states, max dV {:.3e}",
                fit.c_full, fit.c_half, fit.states, fit.max_increment
            );
            CheckOutcome::new(NAME, fit.second_order(), detail)
        }
    }
}

fn check_trap_freedom(crowded: &ScenarioFile, faults: Faults, threads: usize) -> CheckOutcome {
    const NAME: &str = "trap_freedom";
    match simulate(crowded, faults, threads) {
        Err(e) => CheckOutcome::new(NAME, false, format!("simulation failed: {e}")),
        Ok(rec) => {
            let stall = rec.invariants.max_stall_time;
            let arrived = rec.arrival_times.iter().flatten().count();
            let passed = rec.complete && stall < STALL_LIMIT;
            let detail = format!(
                "{arrived}/{} arrived by t = {:.2} s, longest stall {stall:.2} s",
                rec.ids.len(),
                rec.end_time
            );
            CheckOutcome::new(NAME, passed, detail)
        }
    }
}

/// Checks computed from the invariants of the shipped-scenario runs.
fn check_runs(name: &'static str, runs: &[(&str, Result<RunRecord>)]) -> CheckOutcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (scenario, run) in runs {
        let rec = match run {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{scenario}: {e}"));
                continue;
            }
        };
        let inv = &rec.invariants;
        let bad = match name {
            "kinematic_exactness" => {
                worst = worst.max(inv.max_kinematic_error);
                inv.max_kinematic_error > KINEMATIC_TOL
            }
            "speed_bound" => {
                worst = worst.max(inv.max_speed_excess);
                inv.max_speed_excess > SPEED_TOL || inv.separation_violations > 0
            }
            "detection_implication" => inv.detection_violations > 0,
            "conflict_freedom" => !rec.safety_violations.is_empty(),
            _ => unreachable!("unknown check {name}"),
        };
        if bad {
            failures.push(format!(
                "{scenario}: {}",
                match name {
                    "kinematic_exactness" => format!("error {:.2e}", inv.max_kinematic_error),
                    "speed_bound" => format!(
                        "excess {:.2e}, {} separation violations",
                        inv.max_speed_excess, inv.separation_violations
                    ),
                    "detection_implication" => format!("{} violations", inv.detection_violations),
                    _ => format!("{} safety violations", rec.safety_violations.len()),
                }
            ));
        }
    }
    let detail = if failures.is_empty() {
        match name {
            "kinematic_exactness" => format!("{} scenarios, max rel err {worst:.2e}", runs.len()),
            "speed_bound" => format!("{} scenarios, max excess {worst:.2e} m/s", runs.len()),
            _ => format!("{} scenarios clean", runs.len()),
        }
    } else {
        failures.join("; ")
    };
    CheckOutcome::new(name, failures.is_empty(), detail)
}
