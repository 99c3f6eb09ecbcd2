//! Fleet-level coordination on a constant-speed abstraction: pairwise
//! catch-up plans, a savings graph over vehicles, greedy selection of
//! coordination leaders and assembly of the resulting plan.
//!
//! Fuel here counts only air drag and idle flow, so no topography is needed;
//! the look-ahead layer handles the road itself.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PlatoonError, Result};
use crate::road::{common_suffix_overlap, resolve_route, NodeId, RoadNetwork, Route};
use crate::vehicle::{drag_coefficient_at, Environment, VehicleParameters};

/// Diesel density [kg/L].
pub const DIESEL_DENSITY: f64 = 0.832;
/// Tailpipe CO2 per litre of diesel [kg/L].
pub const CO2_PER_LITRE: f64 = 2.651;

pub type VehicleId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportAssignment {
    pub vehicle_id: VehicleId,
    pub route_nodes: Vec<NodeId>,
    pub start_time_s: f64,
    pub deadline_s: f64,
    pub v_nom_mps: f64,
    pub v_cap_mps: f64,
}

impl TransportAssignment {
    pub fn validate(&self, route_length: f64) -> Result<()> {
        if !(self.v_nom_mps > 0.0 && self.v_nom_mps <= self.v_cap_mps) {
            return Err(PlatoonError::Invalid(format!(
                "vehicle {}: needs 0 < v_nom <= v_cap",
                self.vehicle_id
            )));
        }
        if self.start_time_s + route_length / self.v_cap_mps > self.deadline_s + 1e-6 {
            return Err(PlatoonError::Invalid(format!(
                "vehicle {}: deadline unreachable even at v_cap",
                self.vehicle_id
            )));
        }
        Ok(())
    }
}

pub fn load_assignments(path: impl AsRef<std::path::Path>) -> Result<Vec<TransportAssignment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|source| PlatoonError::Parse { path: path.display().to_string(), source })
}

/// Drag-plus-idle fuel flows of the constant-speed abstraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowModel {
    pub params: VehicleParameters,
    pub env: Environment,
    pub tau_ref: f64,
}

impl FlowModel {
    pub fn new(params: VehicleParameters, env: Environment, tau_ref: f64) -> Self {
        Self { params, env, tau_ref }
    }

    fn rate(&self, cd: f64, v: f64) -> f64 {
        let p = &self.params;
        0.5 * p.p1 * cd * self.env.rho * p.frontal_area * v * v * v + p.p0
    }

    /// Flow of a vehicle driving alone [kg/s].
    pub fn solo(&self, v: f64) -> f64 {
        self.rate(self.params.cd0, v)
    }

    /// Flow of a vehicle drafting at the reference gap [kg/s].
    pub fn drafting(&self, v: f64) -> f64 {
        self.rate(drag_coefficient_at(&self.params, self.tau_ref), v)
    }
}

/// `(phi_1, phi_2, phi_p)`: solo flows at `v1`, `v2` and the flow of a
/// two-vehicle platoon at `vp`.
pub fn average_fuel_flows(
    params: &VehicleParameters,
    env: &Environment,
    tau_ref: f64,
    v1: f64,
    v2: f64,
    vp: f64,
) -> (f64, f64, f64) {
    let m = FlowModel::new(*params, *env, tau_ref);
    (m.solo(v1), m.solo(v2), m.solo(vp) + m.drafting(vp))
}

/// Position where vehicle 2 reaches vehicle 1, both at constant speed,
/// starting at `s1` and `s2` at the same instant.
pub fn catchup_merge_point(s1: f64, s2: f64, v1: f64, v2: f64) -> Result<f64> {
    if s1 == s2 {
        return Ok(s1);
    }
    if v1 == v2 {
        return Err(PlatoonError::NoMerge("equal speeds never close the gap".into()));
    }
    // the vehicle behind must be the faster one
    if (s2 < s1) != (v2 > v1) {
        return Err(PlatoonError::NoMerge("vehicles diverge".into()));
    }
    Ok((v2 * s1 - v1 * s2) / (v2 - v1))
}

/// Piece of a follower's speed plan along its own route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment {
    pub from_m: f64,
    pub to_m: f64,
    pub speed_mps: f64,
    pub drafting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwisePlan {
    pub leader: VehicleId,
    pub follower: VehicleId,
    pub segments: Vec<SpeedSegment>,
    /// Merge and split positions on the follower's route [m].
    pub merge_m: f64,
    pub split_m: f64,
    /// Merge and split positions on the leader's route [m].
    pub merge_on_leader_m: f64,
    pub split_on_leader_m: f64,
    pub merge_time_s: f64,
    pub split_time_s: f64,
    pub arrival_s: f64,
    pub follower_fuel_kg: f64,
    pub independent_fuel_kg: f64,
    pub saving_kg: f64,
}

/// An assignment with its route resolved.
#[derive(Debug, Clone)]
pub struct ResolvedAssignment {
    pub assignment: TransportAssignment,
    pub route: Route,
}

pub fn resolve_assignments(
    network: &RoadNetwork,
    assignments: &[TransportAssignment],
) -> Result<Vec<ResolvedAssignment>> {
    let mut seen = BTreeSet::new();
    assignments
        .iter()
        .map(|a| {
            if !seen.insert(a.vehicle_id) {
                return Err(PlatoonError::Invalid(format!("duplicate vehicle id {}", a.vehicle_id)));
            }
            let route = resolve_route(network, &a.route_nodes)?;
            a.validate(route.total_length)?;
            Ok(ResolvedAssignment { assignment: a.clone(), route })
        })
        .collect()
}

pub fn independent_fuel(model: &FlowModel, a: &ResolvedAssignment) -> f64 {
    let v = a.assignment.v_nom_mps;
    model.solo(v) * a.route.total_length / v
}

const SPEED_CANDIDATES: usize = 48;

/// Follower plan for one catch-up speed `u`, if it merges and keeps the
/// deadline.
fn plan_with_speed(
    model: &FlowModel,
    leader: &ResolvedAssignment,
    follower: &ResolvedAssignment,
    ov: &crate::road::Overlap,
    u: f64,
) -> Option<PairwisePlan> {
    let (la, fa) = (&leader.assignment, &follower.assignment);
    let v_l = la.v_nom_mps;
    if v_l > fa.v_cap_mps + 1e-9 {
        return None;
    }
    let len = ov.length();
    let t_lead_in = la.start_time_s + ov.start_on_a / v_l;
    let t_follow_in = fa.start_time_s + ov.start_on_b / u;
    let gap = t_follow_in - t_lead_in;
    let x_m = if gap.abs() <= 1e-6 {
        0.0
    } else if gap < 0.0 || u <= v_l {
        return None;
    } else {
        // leader at x = 0 and follower at x = -u * gap at time t_lead_in
        catchup_merge_point(0.0, -u * gap, v_l, u).ok()?
    };
    if x_m >= len {
        return None;
    }
    let merge_time = t_lead_in + x_m / v_l;
    let split_time = t_lead_in + len / v_l;
    let post = follower.route.total_length - ov.end_on_b;
    let (w, arrival) = if post > 0.0 {
        let available = fa.deadline_s - split_time;
        if available <= 0.0 {
            return None;
        }
        let w = fa.v_nom_mps.max(post / available);
        if w > fa.v_cap_mps + 1e-9 {
            return None;
        }
        (w, split_time + post / w)
    } else {
        (fa.v_nom_mps, split_time)
    };
    if arrival > fa.deadline_s + 1e-6 {
        return None;
    }
    let merge_m = ov.start_on_b + x_m;
    let mut segments = Vec::with_capacity(3);
    if merge_m > 0.0 {
        segments.push(SpeedSegment { from_m: 0.0, to_m: merge_m, speed_mps: u, drafting: false });
    }
    segments.push(SpeedSegment { from_m: merge_m, to_m: ov.end_on_b, speed_mps: v_l, drafting: true });
    if post > 0.0 {
        segments.push(SpeedSegment {
            from_m: ov.end_on_b,
            to_m: follower.route.total_length,
            speed_mps: w,
            drafting: false,
        });
    }
    let fuel = segment_fuel(model, &segments);
    let independent = independent_fuel(model, follower);
    Some(PairwisePlan {
        leader: la.vehicle_id,
        follower: fa.vehicle_id,
        segments,
        merge_m,
        split_m: ov.end_on_b,
        merge_on_leader_m: ov.start_on_a + x_m,
        split_on_leader_m: ov.end_on_a,
        merge_time_s: merge_time,
        split_time_s: split_time,
        arrival_s: arrival,
        follower_fuel_kg: fuel,
        independent_fuel_kg: independent,
        saving_kg: independent - fuel,
    })
}

/// Fuel of a piecewise-constant speed plan.
pub fn segment_fuel(model: &FlowModel, segments: &[SpeedSegment]) -> f64 {
    segments
        .iter()
        .map(|s| {
            let rate = if s.drafting { model.drafting(s.speed_mps) } else { model.solo(s.speed_mps) };
            rate * (s.to_m - s.from_m) / s.speed_mps
        })
        .sum()
}

/// Best catch-up plan of `follower` behind `leader`, whose speed is fixed.
/// Returns a plan only when it saves fuel against driving alone.
pub fn opportunistic_pair_plan(
    model: &FlowModel,
    leader: &ResolvedAssignment,
    follower: &ResolvedAssignment,
) -> Option<PairwisePlan> {
    if leader.assignment.vehicle_id == follower.assignment.vehicle_id {
        return None;
    }
    let ov = common_suffix_overlap(&leader.route, &follower.route)?;
    let fa = &follower.assignment;
    let (lo, hi) = (fa.v_nom_mps, fa.v_cap_mps);
    let eval = |u: f64| plan_with_speed(model, leader, follower, &ov, u);
    let better = |a: &Option<PairwisePlan>, b: &Option<PairwisePlan>| match (a, b) {
        (Some(x), Some(y)) => x.saving_kg > y.saving_kg,
        (Some(_), None) => true,
        _ => false,
    };
    let mut best: Option<PairwisePlan> = None;
    let mut best_u = lo;
    let consider = |u: f64, best: &mut Option<PairwisePlan>, best_u: &mut f64| {
        let p = eval(u);
        if better(&p, best) {
            *best = p;
            *best_u = u;
        }
    };
    for k in 0..SPEED_CANDIDATES {
        let u = lo + (hi - lo) * k as f64 / (SPEED_CANDIDATES - 1) as f64;
        consider(u, &mut best, &mut best_u);
    }
    // speed that reaches the overlap together with the leader
    let t_lead_in = leader.assignment.start_time_s + ov.start_on_a / leader.assignment.v_nom_mps;
    if t_lead_in > fa.start_time_s && ov.start_on_b > 0.0 {
        let u_star = ov.start_on_b / (t_lead_in - fa.start_time_s);
        if (lo..=hi).contains(&u_star) {
            consider(u_star, &mut best, &mut best_u);
        }
    }
    if best.is_some() && hi > lo {
        let step = (hi - lo) / (SPEED_CANDIDATES - 1) as f64;
        let (mut a, mut b) = ((best_u - step).max(lo), (best_u + step).min(hi));
        let score = |u: f64| eval(u).map_or(f64::NEG_INFINITY, |p| p.saving_kg);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if score(c) >= score(d) {
                b = d;
            } else {
                a = c;
            }
        }
        consider(0.5 * (a + b), &mut best, &mut best_u);
    }
    best.filter(|p| p.saving_kg > 0.0)
}

/// Directed savings graph; edge `(f, l)` means `f` gains by following `l`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SavingsGraph {
    pub vehicles: Vec<VehicleId>,
    pub edges: BTreeMap<(VehicleId, VehicleId), f64>,
}

impl SavingsGraph {
    pub fn new(vehicles: Vec<VehicleId>) -> Self {
        let mut vehicles = vehicles;
        vehicles.sort_unstable();
        vehicles.dedup();
        Self { vehicles, edges: BTreeMap::new() }
    }

    /// Adds an edge; non-positive weights and self-loops are ignored.
    pub fn add_edge(&mut self, follower: VehicleId, leader: VehicleId, saving: f64) {
        if follower != leader && saving > 0.0 {
            self.edges.insert((follower, leader), saving);
        }
    }

    pub fn weight(&self, follower: VehicleId, leader: VehicleId) -> Option<f64> {
        self.edges.get(&(follower, leader)).copied()
    }

    /// Best leader of `f` within `leaders` (lowest id on ties).
    pub fn best_leader(&self, f: VehicleId, leaders: &BTreeSet<VehicleId>) -> Option<(VehicleId, f64)> {
        let mut best: Option<(VehicleId, f64)> = None;
        for &l in leaders {
            if let Some(w) = self.weight(f, l) {
                if best.is_none_or(|b| w > b.1) {
                    best = Some((l, w));
                }
            }
        }
        best
    }

    /// Saving when `leaders` lead and everyone else follows their best leader.
    pub fn total_saving(&self, leaders: &BTreeSet<VehicleId>) -> f64 {
        self.vehicles
            .iter()
            .filter(|v| !leaders.contains(v))
            .filter_map(|&f| self.best_leader(f, leaders).map(|b| b.1))
            .sum()
    }
}

/// Evaluates every ordered pair of vehicles and keeps the beneficial ones.
pub fn build_savings_graph(
    model: &FlowModel,
    assignments: &[ResolvedAssignment],
) -> (SavingsGraph, BTreeMap<(VehicleId, VehicleId), PairwisePlan>) {
    let n = assignments.len();
    let plans: Vec<PairwisePlan> = (0..n * n)
        .into_par_iter()
        .filter_map(|k| {
            let (li, fi) = (k / n, k % n);
            if li == fi {
                return None;
            }
            opportunistic_pair_plan(model, &assignments[li], &assignments[fi])
        })
        .collect();
    let mut graph = SavingsGraph::new(assignments.iter().map(|a| a.assignment.vehicle_id).collect());
    let mut by_pair = BTreeMap::new();
    for p in plans {
        graph.add_edge(p.follower, p.leader, p.saving_kg);
        by_pair.insert((p.follower, p.leader), p);
    }
    (graph, by_pair)
}

/// Leader set plus follower assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderSelection {
    pub leaders: BTreeSet<VehicleId>,
    pub follows: BTreeMap<VehicleId, VehicleId>,
    pub total_saving: f64,
    /// Total saving after each accepted flip.
    pub history: Vec<f64>,
}

fn selection_from(graph: &SavingsGraph, leaders: BTreeSet<VehicleId>, history: Vec<f64>) -> LeaderSelection {
    let follows = graph
        .vehicles
        .iter()
        .filter(|v| !leaders.contains(v))
        .filter_map(|&f| graph.best_leader(f, &leaders).map(|(l, _)| (f, l)))
        .collect();
    let total_saving = graph.total_saving(&leaders);
    LeaderSelection { leaders, follows, total_saving, history }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyStart {
    #[default]
    Empty,
    AllLeaders,
}

/// Local search over leader sets: repeatedly flips the single vehicle whose
/// leader status change raises the total saving most, until none does.
pub fn select_leaders_greedy(graph: &SavingsGraph, start: GreedyStart) -> LeaderSelection {
    let mut leaders: BTreeSet<VehicleId> = match start {
        GreedyStart::Empty => BTreeSet::new(),
        GreedyStart::AllLeaders => graph.vehicles.iter().copied().collect(),
    };
    let mut current = graph.total_saving(&leaders);
    let mut history = vec![current];
    loop {
        let mut best: Option<(VehicleId, f64)> = None;
        for &v in &graph.vehicles {
            let mut trial = leaders.clone();
            if !trial.remove(&v) {
                trial.insert(v);
            }
            let total = graph.total_saving(&trial);
            if total > current + 1e-12 && best.is_none_or(|b| total > b.1) {
                best = Some((v, total));
            }
        }
        let Some((v, total)) = best else { break };
        if !leaders.remove(&v) {
            leaders.insert(v);
        }
        current = total;
        history.push(current);
    }
    selection_from(graph, leaders, history)
}

/// Best leader set by enumeration; for small instances only.
pub fn select_leaders_exhaustive(graph: &SavingsGraph) -> Result<LeaderSelection> {
    let n = graph.vehicles.len();
    if n > 20 {
        return Err(PlatoonError::Invalid("exhaustive selection limited to 20 vehicles".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0u32);
    for mask in 0u32..(1 << n) {
        let set = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| graph.vehicles[i]).collect();
        let total = graph.total_saving(&set);
        if total > best.0 + 1e-12 {
            best = (total, mask);
        }
    }
    let leaders = (0..n).filter(|&i| best.1 >> i & 1 == 1).map(|i| graph.vehicles[i]).collect();
    Ok(selection_from(graph, leaders, Vec::new()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Role {
    Leader { followers: Vec<VehicleId> },
    Follower { leader: VehicleId },
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehiclePlan {
    pub vehicle_id: VehicleId,
    pub role: Role,
    pub segments: Vec<SpeedSegment>,
    pub merge_m: Option<f64>,
    pub split_m: Option<f64>,
    pub planned_fuel_kg: f64,
    pub independent_fuel_kg: f64,
}

/// Traffic on one road segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub from: NodeId,
    pub to: NodeId,
    pub vehicles: usize,
    pub platoons: usize,
    pub average_platoon_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationPlan {
    pub leaders: Vec<VehicleId>,
    pub follows: BTreeMap<VehicleId, VehicleId>,
    pub vehicles: Vec<VehiclePlan>,
    pub total_fuel_kg: f64,
    pub baseline_fuel_kg: f64,
    pub saving_kg: f64,
    pub saving_percent: f64,
    pub saving_litres: f64,
    pub saving_co2_kg: f64,
    pub leaders_with_followers: usize,
    pub followers: usize,
    pub non_platooning: usize,
    pub median_followers_per_leader: f64,
    pub max_followers_per_leader: usize,
    pub segment_stats: Vec<SegmentStats>,
    /// Saving if every vehicle drove its whole route in a two-vehicle
    /// platoon at its nominal speed.
    pub all_platooned_bound_percent: f64,
}

pub fn litres_from_kg(kg: f64) -> f64 {
    kg / DIESEL_DENSITY
}

pub fn co2_from_litres(litres: f64) -> f64 {
    litres * CO2_PER_LITRE
}

/// Checks a plan kinematically: contiguous segments covering the route,
/// speeds within the cap and arrival by the deadline.
pub fn verify_pair_plan(plan: &PairwisePlan, follower: &ResolvedAssignment) -> bool {
    let a = &follower.assignment;
    let mut t = a.start_time_s;
    let mut x = 0.0;
    for s in &plan.segments {
        if (s.from_m - x).abs() > 1e-6 || s.speed_mps > a.v_cap_mps + 1e-9 || s.speed_mps <= 0.0 {
            return false;
        }
        t += (s.to_m - s.from_m) / s.speed_mps;
        x = s.to_m;
    }
    (x - follower.route.total_length).abs() < 1e-6 && t <= a.deadline_s + 1e-6
}

fn median(mut xs: Vec<usize>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2] as f64
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2]) as f64
    }
}

/// Materializes the leader selection into per-vehicle plans and statistics.
pub fn assemble_plan(
    model: &FlowModel,
    network: &RoadNetwork,
    assignments: &[ResolvedAssignment],
    selection: &LeaderSelection,
    pair_plans: &BTreeMap<(VehicleId, VehicleId), PairwisePlan>,
) -> CoordinationPlan {
    let by_id: BTreeMap<VehicleId, &ResolvedAssignment> =
        assignments.iter().map(|a| (a.assignment.vehicle_id, a)).collect();
    let mut follows = BTreeMap::new();
    for (&f, &l) in &selection.follows {
        if let (Some(p), Some(ra)) = (pair_plans.get(&(f, l)), by_id.get(&f)) {
            if verify_pair_plan(p, ra) {
                follows.insert(f, l);
            }
        }
    }
    let mut followers_of: BTreeMap<VehicleId, Vec<VehicleId>> = BTreeMap::new();
    for (&f, &l) in &follows {
        followers_of.entry(l).or_default().push(f);
    }
    let mut vehicles = Vec::with_capacity(assignments.len());
    for ra in assignments {
        let id = ra.assignment.vehicle_id;
        let independent = independent_fuel(model, ra);
        let solo = vec![SpeedSegment {
            from_m: 0.0,
            to_m: ra.route.total_length,
            speed_mps: ra.assignment.v_nom_mps,
            drafting: false,
        }];
        let vp = if let Some(&l) = follows.get(&id) {
            let p = &pair_plans[&(id, l)];
            VehiclePlan {
                vehicle_id: id,
                role: Role::Follower { leader: l },
                segments: p.segments.clone(),
                merge_m: Some(p.merge_m),
                split_m: Some(p.split_m),
                planned_fuel_kg: p.follower_fuel_kg,
                independent_fuel_kg: independent,
            }
        } else {
            let role = match followers_of.get(&id) {
                Some(fs) => Role::Leader { followers: fs.clone() },
                None => Role::Independent,
            };
            VehiclePlan {
                vehicle_id: id,
                role,
                segments: solo,
                merge_m: None,
                split_m: None,
                planned_fuel_kg: independent,
                independent_fuel_kg: independent,
            }
        };
        vehicles.push(vp);
    }
    let total: f64 = vehicles.iter().map(|v| v.planned_fuel_kg).sum();
    let baseline: f64 = vehicles.iter().map(|v| v.independent_fuel_kg).sum();
    let saving = baseline - total;
    let saving_litres = litres_from_kg(saving);
    let counts: Vec<usize> = followers_of.values().map(Vec::len).collect();
    let non_platooning = vehicles.iter().filter(|v| matches!(v.role, Role::Independent)).count();
    let bound: f64 = assignments
        .iter()
        .map(|ra| {
            let v = ra.assignment.v_nom_mps;
            0.5 * (model.solo(v) - model.drafting(v)) * ra.route.total_length / v
        })
        .sum();
    CoordinationPlan {
        leaders: followers_of.keys().copied().collect(),
        follows: follows.clone(),
        segment_stats: segment_stats(network, assignments, &follows, pair_plans),
        total_fuel_kg: total,
        baseline_fuel_kg: baseline,
        saving_kg: saving,
        saving_percent: if baseline > 0.0 { 100.0 * (1.0 - total / baseline) } else { 0.0 },
        saving_litres,
        saving_co2_kg: co2_from_litres(saving_litres),
        leaders_with_followers: followers_of.len(),
        followers: follows.len(),
        non_platooning,
        median_followers_per_leader: median(counts.clone()),
        max_followers_per_leader: counts.iter().copied().max().unwrap_or(0),
        all_platooned_bound_percent: if baseline > 0.0 { 100.0 * bound / baseline } else { 0.0 },
        vehicles,
    }
}

fn segment_stats(
    network: &RoadNetwork,
    assignments: &[ResolvedAssignment],
    follows: &BTreeMap<VehicleId, VehicleId>,
    pair_plans: &BTreeMap<(VehicleId, VehicleId), PairwisePlan>,
) -> Vec<SegmentStats> {
    let mut traffic: BTreeMap<(NodeId, NodeId), (usize, usize)> = BTreeMap::new();
    for ra in assignments {
        let id = ra.assignment.vehicle_id;
        for (k, w) in ra.route.nodes.windows(2).enumerate() {
            let mid = 0.5 * (ra.route.node_offsets[k] + ra.route.node_offsets[k + 1]);
            let drafting = follows.get(&id).is_some_and(|&l| {
                let p = &pair_plans[&(id, l)];
                p.merge_m <= mid && mid <= p.split_m
            });
            let e = traffic.entry((w[0], w[1])).or_default();
            e.0 += 1;
            if !drafting {
                e.1 += 1;
            }
        }
    }
    network
        .segments()
        .iter()
        .filter_map(|s| {
            let &(vehicles, platoons) = traffic.get(&(s.from, s.to))?;
            Some(SegmentStats {
                from: s.from,
                to: s.to,
                vehicles,
                platoons,
                average_platoon_size: vehicles as f64 / platoons.max(1) as f64,
            })
        })
        .collect()
}

/// Time gap of a follower to its leader along the follower's route,
/// `t_follower(x) - t_leader(x)`, with the leader's schedule extended
/// backwards before the shared part. Zero from merge to split.
pub fn gap_curve(
    plan: &PairwisePlan,
    leader: &ResolvedAssignment,
    follower: &ResolvedAssignment,
    step_m: f64,
) -> Vec<(f64, f64)> {
    let la = &leader.assignment;
    let offset = plan.merge_on_leader_m - plan.merge_m;
    let t_lead = |x: f64| la.start_time_s + (x + offset) / la.v_nom_mps;
    let mut t = follower.assignment.start_time_s;
    let mut out = Vec::new();
    for seg in plan.segments.iter().filter(|s| s.from_m < plan.split_m) {
        let end = seg.to_m.min(plan.split_m);
        let n = ((end - seg.from_m) / step_m).ceil().max(1.0) as usize;
        for k in 0..n {
            let x = seg.from_m + (end - seg.from_m) * k as f64 / n as f64;
            let tf = t + (x - seg.from_m) / seg.speed_mps;
            out.push((x, if seg.drafting { 0.0 } else { tf - t_lead(x) }));
        }
        t += (end - seg.from_m) / seg.speed_mps;
    }
    out.push((plan.split_m, 0.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const KMH: f64 = 1.0 / 3.6;

    #[test]
    fn catchup_point_example() {
        let s = catchup_merge_point(0.0, -10_000.0, 80.0 * KMH, 90.0 * KMH).unwrap();
        assert_relative_eq!(s, 80_000.0, max_relative = 1e-12);
        assert_eq!(catchup_merge_point(5.0, 5.0, 20.0, 25.0).unwrap(), 5.0);
        assert!(catchup_merge_point(0.0, -10.0, 20.0, 20.0).is_err());
        assert!(catchup_merge_point(0.0, -10.0, 25.0, 20.0).is_err());
    }

    #[test]
    fn solo_flow_hand_value() {
        let p = VehicleParameters::default();
        let v = 80.0 * KMH;
        let (f1, _, _) = average_fuel_flows(&p, &Environment::default(), 1.0, v, v, v);
        let expected = 0.5 * 5.15e-8 * 0.6 * 1.29 * 10.0 * v.powi(3) + 5.36e-4;
        assert_relative_eq!(f1, expected, max_relative = 1e-12);
    }

    #[test]
    fn no_drag_benefit_without_coupling() {
        let p = VehicleParameters { alpha1: 0.0, ..Default::default() };
        let v = 22.0;
        let (f1, f2, fp) = average_fuel_flows(&p, &Environment::default(), 1.0, v, v, v);
        assert_relative_eq!(fp, f1 + f2, max_relative = 1e-12);
    }

    #[test]
    fn empty_graph_has_no_leaders() {
        let g = SavingsGraph::new(vec![1, 2, 3]);
        let sel = select_leaders_greedy(&g, GreedyStart::Empty);
        assert!(sel.leaders.is_empty());
        assert_eq!(sel.total_saving, 0.0);
    }

    #[test]
    fn star_center_becomes_leader() {
        let mut g = SavingsGraph::new(vec![0, 1, 2, 3, 4]);
        for f in 1..5 {
            g.add_edge(f, 0, 1.0);
            g.add_edge(0, f, 0.5);
        }
        let sel = select_leaders_greedy(&g, GreedyStart::Empty);
        assert!(sel.leaders.contains(&0));
        assert_relative_eq!(sel.total_saving, 4.0);
        assert!(sel.history.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn conversions() {
        assert_relative_eq!(co2_from_litres(1045.0), 2770.3, max_relative = 1e-4);
        assert_relative_eq!(litres_from_kg(0.832), 1.0);
    }
}
