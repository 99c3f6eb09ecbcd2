//! End-to-end runs: scenario loading, fleet planning, closed-loop execution
//! of the plan, reports, the hill demonstration and plot exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case_study::{self, FleetConfig};
use crate::clac::{receding_horizon_step, solve_clac, ClacProblem, RecedingHorizon, VelocityProfile, KMH};
use crate::control::{
    simulate_platoon, ControlGains, PlatoonConfigurationState, SimulationOptions, SpacingConfig, StopCondition,
    TrajectoryRecord,
};
use crate::error::{PlatoonError, Result};
use crate::fleet::{
    assemble_plan, build_savings_graph, co2_from_litres, gap_curve, litres_from_kg, resolve_assignments,
    select_leaders_greedy, CoordinationPlan, FlowModel, GreedyStart, PairwisePlan, ResolvedAssignment, Role,
    SegmentStats, TransportAssignment, VehicleId,
};
use crate::merge::{LegSettings, MergeVehicle, MergingProblem};
use crate::road::{resolve_route, AltitudeProfile, NodeId, RoadNetwork};
use crate::vehicle::{drag_coefficient, ModelParameters};

const BUNDLED_NETWORK: &str = include_str!("../data/network.json");
const BUNDLED_ASSIGNMENTS: &str = include_str!("../data/assignments.json");
const BUNDLED_PARAMS: &str = include_str!("../data/params.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    PlanOnly,
    PlanSimulate,
}

/// Grid and controller settings for closed-loop execution. Coarser than the
/// look-ahead defaults so that a whole fleet runs in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSettings {
    pub ds: f64,
    pub dv: f64,
    pub receding: RecedingHorizon,
    /// Lowest planned speed below the requested average [m/s].
    pub speed_band: f64,
    pub h0: f64,
    pub h: f64,
    pub gains: ControlGains,
}

impl Default for ExecutionSettings {
    fn default() -> Self {
        Self {
            ds: 100.0,
            dv: 1.0 * KMH,
            receding: RecedingHorizon { horizon: 2000.0, commit: 1000.0 },
            speed_band: 20.0 * KMH,
            h0: 0.0,
            h: 2.0,
            gains: ControlGains::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub tau_ref: f64,
    pub greedy_start: GreedyStart,
    pub execution: ExecutionSettings,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { tau_ref: 1.0, greedy_start: GreedyStart::Empty, execution: ExecutionSettings::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: RoadNetwork,
    pub assignments: Vec<TransportAssignment>,
    pub model: ModelParameters,
    pub options: RunOptions,
}

impl Scenario {
    /// The 200-vehicle corridor scenario shipped with the crate.
    pub fn bundled() -> Result<Self> {
        Ok(Self {
            network: RoadNetwork::from_json_str(BUNDLED_NETWORK)?,
            assignments: serde_json::from_str(BUNDLED_ASSIGNMENTS)?,
            model: ModelParameters::from_json_str(BUNDLED_PARAMS)?,
            options: RunOptions::default(),
        })
    }

    /// Corridor network with a freshly generated fleet.
    pub fn generated(cfg: &FleetConfig) -> Self {
        let network = case_study::network();
        let assignments = case_study::assignments(&network, cfg);
        Self { network, assignments, model: ModelParameters::default(), options: RunOptions::default() }
    }

    /// Loads files; missing pieces fall back to the bundled data.
    pub fn load(network: Option<&Path>, assignments: Option<&Path>, params: Option<&Path>) -> Result<Self> {
        let mut s = Self::bundled()?;
        if let Some(p) = network {
            s.network = RoadNetwork::load(p)?;
        }
        if let Some(p) = assignments {
            s.assignments = crate::fleet::load_assignments(p)?;
        }
        if let Some(p) = params {
            s.model = ModelParameters::load(p)?;
        }
        Ok(s)
    }

    pub fn flow_model(&self) -> FlowModel {
        FlowModel::new(self.model.vehicle, self.model.env, self.options.tau_ref)
    }
}

/// JSON text of the bundled files, regenerated from the case-study
/// generators: `(network, assignments, params)`.
pub fn bundled_files() -> Result<(String, String, String)> {
    let network = case_study::network();
    let assignments = case_study::assignments(&network, &FleetConfig::default());
    Ok((
        network.to_json_string()? + "\n",
        serde_json::to_string_pretty(&assignments)? + "\n",
        serde_json::to_string_pretty(&ModelParameters::default())? + "\n",
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleFuel {
    pub vehicle_id: VehicleId,
    pub role: String,
    pub leader: Option<VehicleId>,
    pub fuel_kg: f64,
    pub fuel_l: f64,
    pub baseline_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub vehicles: Vec<VehicleFuel>,
    pub total_fuel_kg: f64,
    pub total_fuel_l: f64,
    pub baseline_fuel_kg: f64,
    pub saving_kg: f64,
    pub saving_percent: f64,
    pub saving_litres: f64,
    pub co2_saving_kg: f64,
    pub leaders: usize,
    pub followers: usize,
    pub non_platooning: usize,
    pub median_followers_per_leader: f64,
    pub max_followers_per_leader: usize,
    pub all_platooned_bound_percent: f64,
    pub segments: Vec<SegmentStats>,
    /// Independent-driving baseline of the kinematic model, for comparison
    /// with a simulated baseline.
    pub kinematic_baseline_kg: f64,
    /// Wall-clock seconds per phase. Not part of the serialized report so
    /// that reports stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    fn from_fuel(
        mode: RunMode,
        plan: &CoordinationPlan,
        fuel: &[(f64, f64)],
        timings: Vec<(String, f64)>,
    ) -> Self {
        let vehicles: Vec<VehicleFuel> = plan
            .vehicles
            .iter()
            .zip(fuel)
            .map(|(vp, &(kg, base))| {
                let (role, leader) = match &vp.role {
                    Role::Leader { .. } => ("leader", None),
                    Role::Follower { leader } => ("follower", Some(*leader)),
                    Role::Independent => ("independent", None),
                };
                VehicleFuel {
                    vehicle_id: vp.vehicle_id,
                    role: role.into(),
                    leader,
                    fuel_kg: kg,
                    fuel_l: litres_from_kg(kg),
                    baseline_kg: base,
                }
            })
            .collect();
        let total: f64 = vehicles.iter().map(|v| v.fuel_kg).sum();
        let baseline: f64 = vehicles.iter().map(|v| v.baseline_kg).sum();
        let saving = baseline - total;
        let litres = litres_from_kg(saving);
        Self {
            mode,
            total_fuel_kg: total,
            total_fuel_l: litres_from_kg(total),
            baseline_fuel_kg: baseline,
            saving_kg: saving,
            saving_percent: if baseline > 0.0 { 100.0 * (1.0 - total / baseline) } else { 0.0 },
            saving_litres: litres,
            co2_saving_kg: co2_from_litres(litres),
            leaders: plan.leaders_with_followers,
            followers: plan.followers,
            non_platooning: plan.non_platooning,
            median_followers_per_leader: plan.median_followers_per_leader,
            max_followers_per_leader: plan.max_followers_per_leader,
            all_platooned_bound_percent: plan.all_platooned_bound_percent,
            segments: plan.segment_stats.clone(),
            kinematic_baseline_kg: plan.baseline_fuel_kg,
            vehicles,
            timings,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            RunMode::PlanOnly => "plan-only",
            RunMode::PlanSimulate => "plan+simulate",
        };
        let _ = writeln!(s, "mode: {mode}");
        let _ = writeln!(s, "vehicles: {}", self.vehicles.len());
        let _ = writeln!(
            s,
            "leaders: {}  followers: {}  not platooning: {}",
            self.leaders, self.followers, self.non_platooning
        );
        let _ = writeln!(
            s,
            "followers per leader: median {}  max {}",
            self.median_followers_per_leader, self.max_followers_per_leader
        );
        let _ = writeln!(s, "fuel: {:.3} kg ({:.1} L)", self.total_fuel_kg, self.total_fuel_l);
        let _ = writeln!(s, "independent baseline: {:.3} kg", self.baseline_fuel_kg);
        if self.mode == RunMode::PlanSimulate {
            let _ = writeln!(s, "kinematic baseline: {:.3} kg", self.kinematic_baseline_kg);
        }
        let _ = writeln!(
            s,
            "saving: {:.3} kg ({:.2} %), {:.1} L diesel, {:.1} kg CO2",
            self.saving_kg, self.saving_percent, self.saving_litres, self.co2_saving_kg
        );
        let _ = writeln!(s, "all-platooned bound: {:.2} %", self.all_platooned_bound_percent);
        let _ = writeln!(s, "\nsegment  vehicles  platoons  avg size");
        for seg in &self.segments {
            let _ = writeln!(
                s,
                "{:>3}-{:<3} {:>9} {:>9} {:>9.2}",
                seg.from, seg.to, seg.vehicles, seg.platoons, seg.average_platoon_size
            );
        }
        let _ = writeln!(s, "\nvehicle  role         leader  fuel_kg   baseline_kg");
        for v in &self.vehicles {
            let leader = v.leader.map_or("-".to_string(), |l| l.to_string());
            let _ = writeln!(
                s,
                "{:>7}  {:<11}  {:>6}  {:>8.3}  {:>11.3}",
                v.vehicle_id, v.role, leader, v.fuel_kg, v.baseline_kg
            );
        }
        s
    }

    pub fn timings_text(&self) -> String {
        self.timings.iter().map(|(k, t)| format!("{k}: {t:.2} s\n")).collect()
    }
}

/// Output of the planning pipeline, kept for exports.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub resolved: Vec<ResolvedAssignment>,
    pub plan: CoordinationPlan,
    pub pair_plans: BTreeMap<(VehicleId, VehicleId), PairwisePlan>,
}

/// Pairwise analysis, greedy leader selection and plan assembly.
pub fn plan_fleet(scenario: &Scenario) -> Result<PlanOutcome> {
    let model = scenario.flow_model();
    let resolved = resolve_assignments(&scenario.network, &scenario.assignments)?;
    let (graph, pair_plans) = build_savings_graph(&model, &resolved);
    let selection = select_leaders_greedy(&graph, scenario.options.greedy_start);
    let plan = assemble_plan(&model, &scenario.network, &resolved, &selection, &pair_plans);
    Ok(PlanOutcome { resolved, plan, pair_plans })
}

pub fn run_scenario(scenario: &Scenario, mode: RunMode) -> Result<RunReport> {
    Ok(run_scenario_with_plan(scenario, mode)?.0)
}

/// `run_scenario` that also hands back the plan, for exports.
pub fn run_scenario_with_plan(scenario: &Scenario, mode: RunMode) -> Result<(RunReport, PlanOutcome)> {
    let t0 = Instant::now();
    let outcome = plan_fleet(scenario)?;
    let mut timings = vec![("plan".to_string(), t0.elapsed().as_secs_f64())];
    let fuel = match mode {
        RunMode::PlanOnly => outcome
            .plan
            .vehicles
            .iter()
            .map(|v| (v.planned_fuel_kg, v.independent_fuel_kg))
            .collect(),
        RunMode::PlanSimulate => {
            let t1 = Instant::now();
            let f = execute_plan(scenario, &outcome)?;
            timings.push(("simulate".to_string(), t1.elapsed().as_secs_f64()));
            f
        }
    };
    let report = RunReport::from_fuel(mode, &outcome.plan, &fuel, timings);
    Ok((report, outcome))
}

/// Fuel of `n` vehicles driving `road` as one platoon with receding-horizon
/// look-ahead at average speed `v_bar` and closed-loop gap control.
pub fn execute_stretch(
    model: &ModelParameters,
    options: &RunOptions,
    road: &AltitudeProfile,
    v_bar: f64,
    speed_limit: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let len = road.length();
    if len < 1.0 || n == 0 {
        return Ok(vec![0.0; n]);
    }
    let ex = &options.execution;
    let params = vec![model.vehicle; n];
    let mut p = ClacProblem::new(
        params.clone(),
        model.env,
        road.clone(),
        v_bar,
        (v_bar - ex.speed_band).max(1.0),
        speed_limit.max(v_bar),
    );
    p.ds = ex.ds;
    p.dv = ex.dv;
    p.tau_ref = options.tau_ref;
    p.grid_anchor = Some(v_bar);
    let profile = plan_with_slowdown(&p, &ex.receding, len).map_err(|e| match e {
        PlatoonError::Infeasible(m) => PlatoonError::Infeasible(format!(
            "{m} ({n} vehicles over {len:.0} m at {:.1} km/h)",
            v_bar / KMH
        )),
        e => e,
    })?;
    let mut state = PlatoonConfigurationState::on_policy(params, profile, 0.0, v_bar, options.tau_ref);
    let cfg = SpacingConfig { tau_ref: options.tau_ref, h0: ex.h0, h: ex.h };
    let records = simulate_platoon(
        &mut state,
        &cfg,
        &ex.gains,
        &model.env,
        road,
        StopCondition::LastPasses(len),
        &SimulationOptions::default(),
    )?;
    records
        .iter()
        .map(|r| r.fuel_between(0.0, len).ok_or_else(|| PlatoonError::Window("stretch not covered".into())))
        .collect()
}

/// Receding-horizon planning over `[0, len]`. A window whose average speed
/// cannot be held (a long climb beyond the power limit) is retried at lower
/// requested speeds, one grid step at a time.
fn plan_with_slowdown(template: &ClacProblem, rh: &RecedingHorizon, len: f64) -> Result<VelocityProfile> {
    let mut profile = VelocityProfile { knots: vec![(0.0, template.v_bar)] };
    let (mut pos, mut speed) = (0.0, template.v_bar);
    while len - pos > 1e-6 {
        let mut request = template.v_bar;
        let piece = loop {
            let p = ClacProblem { v_bar: request, ..template.clone() };
            match receding_horizon_step(&p, rh, pos, speed, len) {
                Ok(piece) => break piece,
                Err(PlatoonError::Infeasible(_)) if request - template.dv > template.v_min => request -= template.dv,
                Err(e) => return Err(e),
            }
        };
        pos = piece.end();
        speed = piece.knots[piece.knots.len() - 1].1;
        profile.extend(&piece);
    }
    Ok(profile)
}

fn route_limit(ra: &ResolvedAssignment) -> f64 {
    ra.route.speed_limits.iter().copied().fold(f64::INFINITY, f64::min).max(ra.assignment.v_cap_mps)
}

/// Runs every platoon and solo stretch of the plan in closed loop and
/// returns `(planned, baseline)` fuel per vehicle, in plan order.
pub fn execute_plan(scenario: &Scenario, outcome: &PlanOutcome) -> Result<Vec<(f64, f64)>> {
    use rayon::prelude::*;
    let by_id: BTreeMap<VehicleId, &ResolvedAssignment> =
        outcome.resolved.iter().map(|r| (r.assignment.vehicle_id, r)).collect();
    let model = &scenario.model;
    let opts = &scenario.options;
    let solo = |ra: &ResolvedAssignment, from: f64, to: f64, v: f64| -> Result<f64> {
        let road = ra.route.profile.window(from, to - from);
        Ok(execute_stretch(model, opts, &road, v, route_limit(ra), 1)?[0])
    };
    let baseline: Vec<f64> = outcome
        .resolved
        .par_iter()
        .map(|ra| solo(ra, 0.0, ra.route.total_length, ra.assignment.v_nom_mps))
        .collect::<Result<_>>()?;
    let base_of: BTreeMap<VehicleId, f64> =
        outcome.resolved.iter().zip(&baseline).map(|(r, b)| (r.assignment.vehicle_id, *b)).collect();

    // platoon stretches of each leader, split where membership changes
    let mut groups: BTreeMap<VehicleId, Vec<&PairwisePlan>> = BTreeMap::new();
    for (&f, &l) in &outcome.plan.follows {
        groups.entry(l).or_default().push(&outcome.pair_plans[&(f, l)]);
    }
    let group_fuel: Vec<BTreeMap<VehicleId, f64>> = groups
        .par_iter()
        .map(|(&leader, pairs)| -> Result<BTreeMap<VehicleId, f64>> {
            let ra = by_id[&leader];
            let mut cuts = vec![0.0, ra.route.total_length];
            for p in pairs {
                cuts.push(p.merge_on_leader_m);
                cuts.push(p.split_on_leader_m);
            }
            cuts.sort_by(|a, b| a.total_cmp(b));
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let mut fuel: BTreeMap<VehicleId, f64> = BTreeMap::new();
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let mut members: Vec<&PairwisePlan> = pairs
                    .iter()
                    .copied()
                    .filter(|p| p.merge_on_leader_m <= a + 1e-6 && p.split_on_leader_m >= b - 1e-6)
                    .collect();
                members.sort_by(|x, y| x.merge_time_s.total_cmp(&y.merge_time_s).then(x.follower.cmp(&y.follower)));
                let road = ra.route.profile.window(a, b - a);
                let f = execute_stretch(model, opts, &road, ra.assignment.v_nom_mps, route_limit(ra), members.len() + 1)?;
                *fuel.entry(leader).or_default() += f[0];
                for (p, x) in members.iter().zip(&f[1..]) {
                    *fuel.entry(p.follower).or_default() += x;
                }
            }
            // solo parts of each follower
            for p in pairs {
                let fa = by_id[&p.follower];
                for seg in p.segments.iter().filter(|s| !s.drafting) {
                    *fuel.entry(p.follower).or_default() += solo(fa, seg.from_m, seg.to_m, seg.speed_mps)?;
                }
            }
            Ok(fuel)
        })
        .collect::<Result<_>>()?;
    let mut planned: BTreeMap<VehicleId, f64> = BTreeMap::new();
    for g in group_fuel {
        for (id, f) in g {
            *planned.entry(id).or_default() += f;
        }
    }
    Ok(outcome
        .plan
        .vehicles
        .iter()
        .map(|v| {
            let base = base_of[&v.vehicle_id];
            (planned.get(&v.vehicle_id).copied().unwrap_or(base), base)
        })
        .collect())
}

/// Synthetic hill: flat run-in, 2 % climb over 2 km, 1.3 % descent over
/// 1.8 km, flat run-out.
pub fn demo_hill() -> AltitudeProfile {
    AltitudeProfile::new(&[(0.0, 0.0), (1000.0, 0.0), (3000.0, 40.0), (4800.0, 16.6), (5800.0, 16.6)])
        .expect("valid hill")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillDemoOptions {
    pub vehicles: usize,
    pub v_bar: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub tau_ref: f64,
}

impl Default for HillDemoOptions {
    fn default() -> Self {
        Self { vehicles: 3, v_bar: 80.0 * KMH, v_min: 60.0 * KMH, v_max: 90.0 * KMH, tau_ref: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub fuel_kg: Vec<f64>,
    pub total_fuel_kg: f64,
    pub brake_energy_j: Vec<f64>,
    pub total_brake_energy_j: f64,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
    pub reference: VelocityProfile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HillDemoReport {
    pub options: HillDemoOptions,
    pub window_m: f64,
    pub solo: ArmResult,
    pub gap_keeping: ArmResult,
    pub cooperative: ArmResult,
    pub saving_vs_solo_percent: f64,
    pub saving_vs_gap_keeping_percent: f64,
    /// Lowest planned cooperative speed and where it occurs.
    pub min_speed_kmh: f64,
    pub min_speed_at_m: f64,
}

impl HillDemoReport {
    pub fn arms(&self) -> [&ArmResult; 3] {
        [&self.solo, &self.gap_keeping, &self.cooperative]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "window: {:.0} m, {} vehicles, v_bar {:.1} km/h", self.window_m, self.options.vehicles, self.options.v_bar / KMH);
        for arm in self.arms() {
            let _ = writeln!(
                s,
                "{:<12} fuel {:.4} kg  brake energy {:.1} kJ",
                arm.name,
                arm.total_fuel_kg,
                arm.total_brake_energy_j / 1e3
            );
        }
        let _ = writeln!(s, "cooperative saving vs solo: {:.2} %", self.saving_vs_solo_percent);
        let _ = writeln!(s, "cooperative saving vs gap keeping: {:.2} %", self.saving_vs_gap_keeping_percent);
        let _ = writeln!(s, "lowest cooperative speed: {:.1} km/h at {:.0} m", self.min_speed_kmh, self.min_speed_at_m);
        s
    }
}

fn run_arm(
    name: &str,
    road: &AltitudeProfile,
    model: &ModelParameters,
    reference: VelocityProfile,
    n: usize,
    tau_ref: f64,
) -> Result<ArmResult> {
    let len = road.length();
    let v0 = reference.eval(0.0);
    let mut state = PlatoonConfigurationState::on_policy(vec![model.vehicle; n], reference.clone(), 0.0, v0, tau_ref);
    let cfg = SpacingConfig { tau_ref, ..Default::default() };
    let records = simulate_platoon(
        &mut state,
        &cfg,
        &ControlGains::default(),
        &model.env,
        road,
        StopCondition::LastPasses(len),
        &SimulationOptions::default(),
    )?;
    let uncovered = || PlatoonError::Window("hill window not covered".into());
    let fuel_kg: Vec<f64> = records.iter().map(|r| r.fuel_between(0.0, len).ok_or_else(uncovered)).collect::<Result<_>>()?;
    let brake_energy_j: Vec<f64> =
        records.iter().map(|r| r.brake_energy_between(0.0, len).ok_or_else(uncovered)).collect::<Result<_>>()?;
    Ok(ArmResult {
        name: name.into(),
        total_fuel_kg: fuel_kg.iter().sum(),
        total_brake_energy_j: brake_energy_j.iter().sum(),
        fuel_kg,
        brake_energy_j,
        records,
        reference,
    })
}

/// Three ways for `vehicles` trucks to cross `road`: each alone with its own
/// look-ahead, as a gap-keeping platoon at constant reference speed, and as
/// a platoon on the cooperative look-ahead profile.
pub fn run_hill_demo(road: &AltitudeProfile, model: &ModelParameters, opts: &HillDemoOptions) -> Result<HillDemoReport> {
    let n = opts.vehicles;
    if n == 0 {
        return Err(PlatoonError::Invalid("hill demo needs at least one vehicle".into()));
    }
    let len = road.length();
    let clac = |k: usize| -> Result<VelocityProfile> {
        let mut p = ClacProblem::new(vec![model.vehicle; k], model.env, road.clone(), opts.v_bar, opts.v_min, opts.v_max);
        p.horizon = len;
        p.tau_ref = opts.tau_ref;
        Ok(solve_clac(&p)?.profile)
    };
    let single = run_arm("solo", road, model, clac(1)?, 1, opts.tau_ref)?;
    let solo = ArmResult {
        name: single.name.clone(),
        fuel_kg: vec![single.fuel_kg[0]; n],
        total_fuel_kg: single.fuel_kg[0] * n as f64,
        brake_energy_j: vec![single.brake_energy_j[0]; n],
        total_brake_energy_j: single.brake_energy_j[0] * n as f64,
        records: vec![single.records[0].clone(); n],
        reference: single.reference,
    };
    let flat = VelocityProfile::constant(-len, 2.0 * len, opts.v_bar);
    let gap_keeping = run_arm("gap-keeping", road, model, flat, n, opts.tau_ref)?;
    let cooperative = run_arm("cooperative", road, model, clac(n)?, n, opts.tau_ref)?;
    let (min_speed_at_m, min_speed) = cooperative
        .reference
        .knots
        .iter()
        .copied()
        .filter(|k| (0.0..=len).contains(&k.0))
        .fold((0.0, f64::INFINITY), |acc, k| if k.1 < acc.1 { k } else { acc });
    Ok(HillDemoReport {
        options: *opts,
        window_m: len,
        saving_vs_solo_percent: 100.0 * (1.0 - cooperative.total_fuel_kg / solo.total_fuel_kg),
        saving_vs_gap_keeping_percent: 100.0 * (1.0 - cooperative.total_fuel_kg / gap_keeping.total_fuel_kg),
        min_speed_kmh: min_speed / KMH,
        min_speed_at_m,
        solo,
        gap_keeping,
        cooperative,
    })
}

/// `(tau, cd)` samples of the drag coefficient behind a predecessor.
pub fn drag_curve(model: &ModelParameters, tau_max: f64, samples: usize) -> Result<Vec<(f64, f64)>> {
    let n = samples.max(2);
    (0..n)
        .map(|k| {
            let tau = tau_max * k as f64 / (n - 1) as f64;
            Ok((tau, drag_coefficient(&model.vehicle, Some(tau))?))
        })
        .collect()
}

fn write_columns(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_drag_curve(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    write_columns(path, &["tau_s", "cd"], curve.iter().map(|&(t, c)| vec![t, c]))
}

/// One file per follower, `gap_<follower>_<leader>.csv`, with the time gap
/// to the leader along the follower's route.
pub fn write_gap_curves(dir: &Path, outcome: &PlanOutcome, step_m: f64) -> Result<Vec<std::path::PathBuf>> {
    let by_id: BTreeMap<VehicleId, &ResolvedAssignment> =
        outcome.resolved.iter().map(|r| (r.assignment.vehicle_id, r)).collect();
    let mut written = Vec::new();
    for (&f, &l) in &outcome.plan.follows {
        let curve = gap_curve(&outcome.pair_plans[&(f, l)], by_id[&l], by_id[&f], step_m);
        let path = dir.join(format!("gap_{f}_{l}.csv"));
        write_columns(&path, &["position_m", "gap_s"], curve.iter().map(|&(x, g)| vec![x, g]))?;
        written.push(path);
    }
    Ok(written)
}

/// Per-arm panel file: time, and per vehicle position, altitude, speed,
/// distance to the predecessor and engine power.
pub fn write_hill_panels(dir: &Path, road: &AltitudeProfile, report: &HillDemoReport) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for arm in report.arms() {
        let n = arm.records.len();
        let mut header = vec!["t_s".to_string()];
        for i in 0..n {
            for col in ["s_m", "altitude_m", "v_kmh", "spacing_m", "power_kw"] {
                header.push(format!("{col}_{}", i + 1));
            }
        }
        let rows = arm.records.iter().map(|r| r.samples.len()).min().unwrap_or(0);
        let data = (0..rows).map(|k| {
            let mut row = vec![arm.records[0].samples[k].t];
            for i in 0..n {
                let x = &arm.records[i].samples[k];
                let spacing = if i == 0 { 0.0 } else { arm.records[i - 1].samples[k].s - x.s };
                row.extend([x.s, road.altitude_at(x.s), x.v / KMH, spacing, x.traction * x.v / 1e3]);
            }
            row
        });
        let path = dir.join(format!("hill_{}.csv", arm.name));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_columns(&path, &header, data)?;
        written.push(path);
    }
    Ok(written)
}

/// Two trucks on separate 6 km and 4 km approach roads meeting at a
/// junction, then sharing a 6 km road with a common arrival time.
pub fn demo_merge_problem(model: &ModelParameters) -> MergingProblem {
    let v = 80.0 * KMH;
    let rolling = |len: f64, rise: f64| {
        AltitudeProfile::new(&[(0.0, 0.0), (len * 0.5, rise), (len, 0.0)]).expect("valid leg")
    };
    let settings = LegSettings { env: model.env, ds: 100.0, dv: 1.0 * KMH, ..Default::default() };
    MergingProblem {
        vehicles: vec![
            MergeVehicle { params: model.vehicle, start_time: 0.0, start_speed: v, leg: rolling(6000.0, 20.0) },
            MergeVehicle { params: model.vehicle, start_time: 30.0, start_speed: v, leg: rolling(4000.0, -10.0) },
        ],
        post_leg: rolling(6000.0, 15.0),
        final_time: 12_000.0 / v + 10.0,
        final_speed: v,
        merge_speed: None,
        settings,
    }
}

/// One vehicle of a merge problem file: its road up to the junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeVehicleSpec {
    pub route_nodes: Vec<NodeId>,
    pub start_time_s: f64,
    pub start_speed_mps: f64,
}

/// Merge problem file with legs given as node lists on a network. Every
/// vehicle route ends at the junction where the post route starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub vehicles: Vec<MergeVehicleSpec>,
    pub post_route_nodes: Vec<NodeId>,
    pub final_time_s: f64,
    pub final_speed_mps: f64,
    #[serde(default)]
    pub merge_speed_mps: Option<f64>,
    #[serde(default)]
    pub ds_m: Option<f64>,
    #[serde(default)]
    pub dv_mps: Option<f64>,
}

impl MergeSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| PlatoonError::Parse { path: path.display().to_string(), source })
    }

    pub fn to_problem(&self, network: &RoadNetwork, model: &ModelParameters) -> Result<MergingProblem> {
        let junction = *self
            .post_route_nodes
            .first()
            .ok_or_else(|| PlatoonError::Invalid("post route is empty".into()))?;
        let vehicles = self
            .vehicles
            .iter()
            .map(|v| {
                if v.route_nodes.last() != Some(&junction) {
                    return Err(PlatoonError::Invalid(format!(
                        "route {:?} does not end at junction node {junction}",
                        v.route_nodes
                    )));
                }
                Ok(MergeVehicle {
                    params: model.vehicle,
                    start_time: v.start_time_s,
                    start_speed: v.start_speed_mps,
                    leg: resolve_route(network, &v.route_nodes)?.profile,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let defaults = LegSettings::default();
        let problem = MergingProblem {
            vehicles,
            post_leg: resolve_route(network, &self.post_route_nodes)?.profile,
            final_time: self.final_time_s,
            final_speed: self.final_speed_mps,
            merge_speed: self.merge_speed_mps,
            settings: LegSettings {
                env: model.env,
                ds: self.ds_m.unwrap_or(100.0),
                dv: self.dv_mps.unwrap_or(defaults.dv),
                ..defaults
            },
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_match_generators() {
        let (network, assignments, params) = bundled_files().unwrap();
        assert_eq!(network, BUNDLED_NETWORK);
        assert_eq!(assignments, BUNDLED_ASSIGNMENTS);
        assert_eq!(params, BUNDLED_PARAMS);
    }

    #[test]
    fn empty_fleet_reports_zero() {
        let mut s = Scenario::bundled().unwrap();
        s.assignments.clear();
        let r = run_scenario(&s, RunMode::PlanOnly).unwrap();
        assert_eq!(r.total_fuel_kg, 0.0);
        assert_eq!(r.baseline_fuel_kg, 0.0);
        assert_eq!(r.saving_percent, 0.0);
        assert!(r.vehicles.is_empty());
    }

    #[test]
    fn single_vehicle_saves_nothing() {
        let mut s = Scenario::bundled().unwrap();
        s.assignments.truncate(1);
        let r = run_scenario(&s, RunMode::PlanOnly).unwrap();
        assert_eq!(r.saving_percent, 0.0);
        assert_eq!(r.non_platooning, 1);
    }

    #[test]
    fn drag_curve_endpoints() {
        let c = drag_curve(&ModelParameters::default(), 3.0, 31).unwrap();
        assert!((c[0].1 - 0.282).abs() < 1e-12);
        assert!((c[30].1 - 0.5073).abs() < 1e-4);
        assert!(c.windows(2).all(|w| w[1].1 > w[0].1));
    }

    #[test]
    fn merge_spec_checks_the_junction() {
        let net = case_study::network();
        let spec = MergeSpec {
            vehicles: vec![
                MergeVehicleSpec { route_nodes: vec![4, 3, 5], start_time_s: 0.0, start_speed_mps: 22.0 },
                MergeVehicleSpec { route_nodes: vec![12, 3], start_time_s: 0.0, start_speed_mps: 22.0 },
            ],
            post_route_nodes: vec![5, 7],
            final_time_s: 7000.0,
            final_speed_mps: 22.0,
            merge_speed_mps: None,
            ds_m: None,
            dv_mps: None,
        };
        assert!(matches!(spec.to_problem(&net, &ModelParameters::default()), Err(PlatoonError::Invalid(_))));
    }
}
