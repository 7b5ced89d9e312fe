mod shipped;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use vtube_core::controller::Faults;
use vtube_core::output::write_bundle;
use vtube_core::perf::{bench_scenario, growth_exponent, lattice_scenario, BenchRow};
use vtube_core::scenario::{load_scenario_file, Manifest, MANIFEST_SCHEMA};
use vtube_core::selfcheck::{run_suite, Suite};
use vtube_core::{run, Integrator};

const GIT_REV: &str = env!("VTUBE_GIT_REV");

/// Exit status when every UAV arrived without a safety violation.
const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_TIMEOUT: u8 = 2;
const EXIT_UNSAFE: u8 = 3;

#[derive(Parser)]
#[command(name = "vtube", version, about = "Virtual-tube swarm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fault {
    FlipAvoidance,
    KeepArrived,
}

fn faults(list: &[Fault]) -> Faults {
    let mut f = Faults::default();
    for x in list {
        match x {
            Fault::FlipAvoidance => f.flip_avoidance = true,
            Fault::KeepArrived => f.keep_arrived = true,
        }
    }
    f
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario (or re-run a manifest) and write its outputs.
    ///
    /// Exit status: 0 all arrived, 2 timeout, 3 safety violation, 1 error.
    Run {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        integrator: Option<Integrator>,
        #[arg(long, env = "VTUBE_THREADS", default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        record_every: Option<u32>,
        #[arg(long, hide = true, value_delimiter = ',')]
        fault: Vec<Fault>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Check {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, env = "VTUBE_THREADS", default_value_t = 1)]
        threads: usize,
        #[arg(long, hide = true, value_delimiter = ',')]
        fault: Vec<Fault>,
    },
    /// Time the controller step and neighbour search.
    Bench {
        /// Swarm sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [10, 40, 160])]
        m: Vec<usize>,
        /// Safety radii to sweep at M = 40.
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 30.0])]
        rs: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario: PathBuf,
    out: PathBuf,
    dt: Option<f64>,
    t_max: Option<f64>,
    integrator: Option<Integrator>,
    threads: usize,
    record_every: Option<u32>,
    fault: &[Fault],
) -> anyhow::Result<u8> {
    let mut file = load_scenario_file(&scenario)?;
    if let Some(dt) = dt {
        file.sim.dt = dt;
    }
    if let Some(t) = t_max {
        file.sim.t_max = t;
    }
    if let Some(i) = integrator {
        file.sim.integrator = i;
    }
    if let Some(k) = record_every {
        file.sim.record_every = k;
    }
    let mut sc = file.build()?;
    sc.world = sc.world.with_faults(faults(fault));
    for w in sc.world.warnings() {
        eprintln!("warning: {w}");
    }
    let cfg = sc.sim_config(threads);
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        git_rev: GIT_REV.to_owned(),
        dt: cfg.dt,
        integrator: cfg.integrator,
        threads,
        warnings: sc.world.warnings().to_vec(),
        scenario: sc.file.clone(),
    };
    let record = run(sc.world, cfg)?;
    let summary = record.summary();
    write_bundle(&out, &record, &summary, &manifest)
        .with_context(|| format!("writing outputs to {}", out.display()))?;

    let arrived = record.arrival_times.iter().filter(|t| t.is_some()).count();
    println!(
        "{}: {arrived}/{} arrived, end t = {:.2} s",
        sc.file.name.as_deref().unwrap_or("scenario"),
        record.ids.len(),
        record.end_time
    );
    if let Some(t) = summary.arrival_time_max {
        println!("last arrival at t = {t:.2} s");
    }
    let show = |x: Option<f64>| x.map_or("n/a".to_owned(), |v| format!("{v:.3}"));
    println!(
        "min p-distance {} m, min xi-distance {} m, min tube margin {} m",
        show(summary.min_p_distance),
        show(summary.min_xi_distance),
        show(summary.min_tube_margin)
    );
    println!("outputs in {}", out.display());

    if !record.safety_violations.is_empty() {
        for e in record.safety_violations.iter().take(5) {
            eprintln!("safety violation: {:?} at t = {} for {:?}", e.kind, e.t, e.subject_ids);
        }
        return Ok(EXIT_UNSAFE);
    }
    if !record.complete {
        eprintln!("timeout: not all UAVs arrived by t = {}", record.end_time);
        return Ok(EXIT_TIMEOUT);
    }
    Ok(EXIT_OK)
}

fn cmd_check(filter: Option<String>, threads: usize, fault: &[Fault]) -> anyhow::Result<u8> {
    let suite = Suite {
        scenarios: shipped::all()?,
        basic: shipped::load("basic_8uav")?,
        crowded: shipped::load("crowded_entrance")?,
        faults: faults(fault),
        threads,
    };
    let outcomes = run_suite(&suite, filter.as_deref());
    if outcomes.is_empty() {
        anyhow::bail!("no check matches {:?}", filter.unwrap_or_default());
    }
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    for o in &outcomes {
        let mark = if o.passed { "PASS" } else { "FAIL" };
        println!("{mark}  {:width$}  {}", o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_ERROR })
}

/// Safety radius of the swarm-size sweep.
const BENCH_RS: f64 = 20.0;

fn cmd_bench(m: &[usize], rs: &[f64], steps: usize, json: bool) -> anyhow::Result<u8> {
    let mut sizes = Vec::new();
    for &n in m {
        sizes.push(bench_scenario(
            &format!("lattice M={n}"),
            &lattice_scenario(n, BENCH_RS),
            steps,
        )?);
    }
    let mut radii = Vec::new();
    for &r in rs {
        radii.push(bench_scenario(
            &format!("lattice r_s={r}"),
            &lattice_scenario(40, r),
            steps,
        )?);
    }
    let forty = bench_scenario("paper_40uav", &shipped::load("paper_40uav")?, steps)?;
    let exponent = growth_exponent(&sizes);
    let all: Vec<&BenchRow> = sizes.iter().chain(&radii).chain(std::iter::once(&forty)).collect();
    let mismatches: usize = all.iter().map(|r| r.neighbor_mismatches).sum();

    if json {
        let doc = serde_json::json!({
            "rows": all,
            "growth_exponent": exponent,
            "neighbor_sets_identical": mismatches == 0,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!(
            "{:<20} {:>5} {:>6} {:>6} {:>12} {:>12} {:>12} {:>10}",
            "case", "M", "r_s", "steps", "step_us", "brute_us", "grid_us", "mismatch"
        );
        for r in &all {
            println!(
                "{:<20} {:>5} {:>6} {:>6} {:>12.2} {:>12.2} {:>12.2} {:>10}",
                r.label, r.m, r.r_s, r.steps, r.step_mean_us, r.brute_mean_us, r.grid_mean_us, r.neighbor_mismatches
            );
        }
        if let Some(k) = exponent {
            println!("step time grows as M^{k:.2}");
        }
    }
    if mismatches > 0 {
        eprintln!("grid and brute-force neighbour sets differ on {mismatches} steps");
        return Ok(EXIT_ERROR);
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            dt,
            t_max,
            integrator,
            threads,
            record_every,
            fault,
        } => cmd_run(scenario, out, dt, t_max, integrator, threads, record_every, &fault),
        Command::Check { filter, threads, fault } => cmd_check(filter, threads, &fault),
        Command::Bench { m, rs, steps, json } => cmd_bench(&m, &rs, steps, json),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
