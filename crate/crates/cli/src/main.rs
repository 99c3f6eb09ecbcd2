//! `platoon`: fleet planning, closed-loop runs, look-ahead profiles, merge
//! optimization, the hill demonstration and plot exports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use platoon_core::case_study::{self, FleetConfig};
use platoon_core::clac::{solve_clac, ClacProblem, KMH};
use platoon_core::merge::solve_merge;
use platoon_core::road::{resolve_route, AltitudeProfile, NodeId};
use platoon_core::scenario::{
    demo_hill, demo_merge_problem, drag_curve, plan_fleet, run_hill_demo, run_scenario_with_plan, write_drag_curve,
    write_gap_curves, write_hill_panels, HillDemoOptions, MergeSpec, RunMode, Scenario,
};
use platoon_core::{PlatoonError, Result};

const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "platoon", version, about = "Fuel-optimal truck platooning runs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Road network JSON (default: bundled corridor network)
    #[arg(long, global = true)]
    network: Option<PathBuf>,
    /// Transport assignments JSON (default: bundled fleet)
    #[arg(long, global = true)]
    assignments: Option<PathBuf>,
    /// Vehicle and environment parameters JSON
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Generate the fleet with this seed instead of using the bundled one
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of a generated fleet
    #[arg(long, global = true, default_value_t = 200)]
    fleet_size: usize,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Fuel accounting fidelity
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    PlanOnly,
    PlanSimulate,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coordinate the fleet and report the planned saving
    Plan,
    /// Plan, then drive every platoon with look-ahead and gap control
    Simulate,
    /// Cooperative look-ahead speed profile over a road window
    Clac(ClacArgs),
    /// Optimal merge of vehicles meeting at a junction
    Merge(MergeArgs),
    /// Solo, gap-keeping and cooperative platoons over a hill
    HillDemo(HillArgs),
    /// Drag curve, trio gap curves and hill panels as CSV
    Export,
}

#[derive(Args, Debug)]
struct ClacArgs {
    /// Comma-separated route node list; without it the demo hill is used
    #[arg(long, value_delimiter = ',')]
    route: Vec<NodeId>,
    /// Window start along the route [m]
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    /// Window length [m]; default is to the end of the route
    #[arg(long)]
    length: Option<f64>,
    #[arg(short = 'n', long, default_value_t = 3)]
    vehicles: usize,
    /// Average speed [km/h]
    #[arg(long, default_value_t = 80.0)]
    v_bar: f64,
    #[arg(long, default_value_t = 60.0)]
    v_min: f64,
    #[arg(long, default_value_t = 90.0)]
    v_max: f64,
    /// Stage length [m]
    #[arg(long)]
    ds: Option<f64>,
    /// Velocity grid step [km/h]
    #[arg(long)]
    dv: Option<f64>,
}

#[derive(Args, Debug)]
struct MergeArgs {
    /// Merge problem JSON with legs as route node lists; default is a
    /// synthetic two-truck junction
    #[arg(long)]
    problem: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HillArgs {
    #[arg(short = 'n', long, default_value_t = 3)]
    vehicles: usize,
    /// Average speed [km/h]
    #[arg(long, default_value_t = 80.0)]
    v_bar: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &PlatoonError) -> u8 {
    match e {
        PlatoonError::Infeasible(_) | PlatoonError::NoMerge(_) | PlatoonError::SafetyViolation { .. } => {
            EXIT_INFEASIBLE
        }
        _ => EXIT_INPUT,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    fs::create_dir_all(&c.out_dir)?;
    match &cli.command {
        Command::Plan => fleet_run(c, c.mode.unwrap_or(Mode::PlanOnly)),
        Command::Simulate => fleet_run(c, c.mode.unwrap_or(Mode::PlanSimulate)),
        Command::Clac(a) => clac(c, a),
        Command::Merge(a) => merge(c, a),
        Command::HillDemo(a) => hill_demo(c, a),
        Command::Export => export(c),
    }
}

fn load_scenario(c: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(c.network.as_deref(), c.assignments.as_deref(), c.params.as_deref())?;
    if let (Some(seed), None) = (c.seed, &c.assignments) {
        let cfg = FleetConfig { seed, size: c.fleet_size, ..FleetConfig::default() };
        s.assignments = case_study::assignments(&s.network, &cfg);
    }
    Ok(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
    let mut text = format!("{header}\n");
    for (a, b) in rows {
        text.push_str(&format!("{a},{b}\n"));
    }
    write(path, &text)
}

fn fleet_run(c: &Common, mode: Mode) -> Result<()> {
    let scenario = load_scenario(c)?;
    let mode = match mode {
        Mode::PlanOnly => RunMode::PlanOnly,
        Mode::PlanSimulate => RunMode::PlanSimulate,
    };
    let (report, outcome) = run_scenario_with_plan(&scenario, mode)?;
    write(&c.out_dir.join("report.json"), &(report.to_json()? + "\n"))?;
    write(&c.out_dir.join("report.txt"), &report.to_text())?;
    write(&c.out_dir.join("plan.json"), &(serde_json::to_string_pretty(&outcome.plan)? + "\n"))?;
    let gaps = c.out_dir.join("gaps");
    fs::create_dir_all(&gaps)?;
    let n = write_gap_curves(&gaps, &outcome, 1000.0)?.len();
    println!("wrote {n} gap curves to {}", gaps.display());
    let text = report.to_text();
    print!("{}", text.split("\n\n").next().unwrap_or_default());
    println!();
    eprint!("{}", report.timings_text());
    Ok(())
}

fn clac(c: &Common, a: &ClacArgs) -> Result<()> {
    let scenario = Scenario::load(c.network.as_deref(), None, c.params.as_deref())?;
    let road = if a.route.is_empty() {
        demo_hill()
    } else {
        resolve_route(&scenario.network, &a.route)?.profile
    };
    let available = road.length() - a.from;
    if a.from < 0.0 || available <= 0.0 {
        return Err(PlatoonError::OutOfRange { s: a.from, length: road.length() });
    }
    let length = a.length.unwrap_or(available).min(available);
    let window: AltitudeProfile = road.window(a.from, length);
    let mut problem = ClacProblem::new(
        vec![scenario.model.vehicle; a.vehicles],
        scenario.model.env,
        window,
        a.v_bar * KMH,
        a.v_min * KMH,
        a.v_max * KMH,
    );
    problem.horizon = length;
    if let Some(ds) = a.ds {
        problem.ds = ds;
    }
    if let Some(dv) = a.dv {
        problem.dv = dv * KMH;
    }
    let sol = solve_clac(&problem)?;
    write_csv(
        &c.out_dir.join("clac_profile.csv"),
        "s_m,v_ref_mps",
        sol.profile.knots.iter().map(|&(s, v)| (s + a.from, v)),
    )?;
    println!(
        "fuel {:.4} kg, {:.6} kg/m per vehicle, lambda {:.6}, brake {:.0} J",
        sol.fuel, sol.j_clac, sol.lambda, sol.brake_energy
    );
    Ok(())
}

fn merge(c: &Common, a: &MergeArgs) -> Result<()> {
    let scenario = Scenario::load(c.network.as_deref(), None, c.params.as_deref())?;
    let problem = match &a.problem {
        Some(path) => MergeSpec::load(path)?.to_problem(&scenario.network, &scenario.model)?,
        None => demo_merge_problem(&scenario.model),
    };
    let sol = solve_merge(&problem)?;
    write(&c.out_dir.join("merge_solution.json"), &(serde_json::to_string_pretty(&sol)? + "\n"))?;
    write_csv(&c.out_dir.join("merge_curve.csv"), "t_m_s,fuel_kg", sol.curve.iter().copied())?;
    for (i, p) in sol.pre_profiles.iter().enumerate() {
        write_csv(&c.out_dir.join(format!("merge_pre_{i}.csv")), "s_m,v_mps", p.knots.iter().copied())?;
    }
    write_csv(&c.out_dir.join("merge_post.csv"), "s_m,v_mps", sol.post_profile.knots.iter().copied())?;
    println!(
        "merge at t = {:.1} s, {:.1} km/h: {:.3} kg vs {:.3} kg alone ({})",
        sol.merge_time,
        sol.merge_speed / KMH,
        sol.merge_cost,
        sol.no_merge_cost,
        if sol.merged { "merge" } else { "drive alone" }
    );
    Ok(())
}

fn hill_demo(c: &Common, a: &HillArgs) -> Result<()> {
    let scenario = Scenario::load(c.network.as_deref(), None, c.params.as_deref())?;
    let opts = HillDemoOptions { vehicles: a.vehicles, v_bar: a.v_bar * KMH, ..HillDemoOptions::default() };
    let road = demo_hill();
    let report = run_hill_demo(&road, &scenario.model, &opts)?;
    write(&c.out_dir.join("hill_report.json"), &(report.to_json()? + "\n"))?;
    write(&c.out_dir.join("hill_report.txt"), &report.to_text())?;
    for p in write_hill_panels(&c.out_dir, &road, &report)? {
        println!("wrote {}", p.display());
    }
    print!("{}", report.to_text());
    Ok(())
}

fn export(c: &Common) -> Result<()> {
    let scenario = Scenario::load(c.network.as_deref(), None, c.params.as_deref())?;
    write_drag_curve(&c.out_dir.join("drag_curve.csv"), &drag_curve(&scenario.model, 3.0, 61)?)?;
    println!("wrote {}", c.out_dir.join("drag_curve.csv").display());

    // the trio on its own, so the curves show exactly its meeting
    let trio = Scenario { assignments: case_study::highlighted_trio(&scenario.network), ..scenario.clone() };
    for p in write_gap_curves(&c.out_dir, &plan_fleet(&trio)?, 500.0)? {
        println!("wrote {}", p.display());
    }

    let road = demo_hill();
    let report = run_hill_demo(&road, &scenario.model, &HillDemoOptions::default())?;
    for p in write_hill_panels(&c.out_dir, &road, &report)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
