//! Cooperative look-ahead control: one common velocity profile for a platoon,
//! minimizing the platoon's total fuel over a spatial horizon by dynamic
//! programming on a velocity grid.
//!
//! The average-speed request is handled through a Lagrange multiplier on
//! travel time, found by bisection, so the DP state stays one-dimensional.

use serde::{Deserialize, Serialize};

use crate::error::{PlatoonError, Result};
use crate::road::AltitudeProfile;
use crate::vehicle::{drag_coefficient_at, Environment, VehicleParameters};

/// Tolerance on the mean pace `1/v` against the requested `1/v_bar` [s/m].
pub const PACE_TOLERANCE: f64 = 1e-4;

const BISECTION_ITERATIONS: usize = 80;

/// Where followers evaluate the road grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FollowerGrade {
    /// Follower `i` sits `i * tau_ref * v` behind the leader.
    #[default]
    Offset,
    /// Every vehicle sees the leader's grade.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Free,
    Speed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClacProblem {
    /// One entry per vehicle; index 0 leads.
    pub vehicles: Vec<VehicleParameters>,
    pub env: Environment,
    /// Altitude along the route; the road is flat outside its range.
    pub road: AltitudeProfile,
    /// Window start in route coordinates.
    pub start: f64,
    pub horizon: f64,
    pub tau_ref: f64,
    pub v_bar: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Stage length [m].
    pub ds: f64,
    /// Velocity grid step [m/s].
    pub dv: f64,
    /// Grid levels are `anchor + k * dv`; defaults to `v_bar`.
    pub grid_anchor: Option<f64>,
    pub initial: Boundary,
    pub terminal: Boundary,
    pub follower_grade: FollowerGrade,
    /// Largest service-brake deceleration the planner may use [m/s^2].
    pub max_brake_decel: f64,
}

pub const KMH: f64 = 1.0 / 3.6;

impl ClacProblem {
    /// Problem with the default discretization: 50 m stages, 0.5 km/h
    /// velocity steps, 2500 m horizon.
    pub fn new(
        vehicles: Vec<VehicleParameters>,
        env: Environment,
        road: AltitudeProfile,
        v_bar: f64,
        v_min: f64,
        v_max: f64,
    ) -> Self {
        Self {
            vehicles,
            env,
            road,
            start: 0.0,
            horizon: 2500.0,
            tau_ref: 1.0,
            v_bar,
            v_min,
            v_max,
            ds: 50.0,
            dv: 0.5 * KMH,
            grid_anchor: None,
            initial: Boundary::Speed(v_bar),
            terminal: Boundary::Speed(v_bar),
            follower_grade: FollowerGrade::Offset,
            max_brake_decel: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PlatoonError::Invalid(format!("look-ahead problem: {m}")));
        if self.vehicles.is_empty() {
            return bad("needs at least one vehicle");
        }
        for p in &self.vehicles {
            p.validate()?;
        }
        if !(self.horizon >= 0.0) || !(self.ds > 0.0) || !(self.dv > 0.0) {
            return bad("horizon, ds and dv must be positive");
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_bar && self.v_bar <= self.v_max) {
            return bad("requires 0 < v_min <= v_bar <= v_max");
        }
        if !(self.tau_ref >= 0.0) || !(self.max_brake_decel >= 0.0) {
            return bad("tau_ref and max_brake_decel must be non-negative");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Velocity levels of the grid, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let anchor = self.grid_anchor.unwrap_or(self.v_bar);
        let eps = 1e-9;
        let k_lo = ((self.v_min - anchor) / self.dv - eps).ceil() as i64;
        let k_hi = ((self.v_max - anchor) / self.dv + eps).floor() as i64;
        (k_lo..=k_hi).map(|k| anchor + k as f64 * self.dv).collect()
    }

    /// Stage cells `(start, length)` in route coordinates.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let mut cells = Vec::new();
        let mut x = 0.0;
        while self.horizon - x > 1e-9 {
            let len = self.ds.min(self.horizon - x);
            cells.push((self.start + x, len));
            x += len;
        }
        cells
    }
}

/// Fuel, time and brake energy of one transition for the whole platoon.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageCost {
    pub fuel: f64,
    pub time: f64,
    pub brake_energy: f64,
}

impl StageCost {
    pub fn infeasible() -> Self {
        Self { fuel: f64::INFINITY, time: f64::INFINITY, brake_energy: 0.0 }
    }

    pub fn is_feasible(&self) -> bool {
        self.fuel.is_finite()
    }
}

/// Lagrangian stage objective; the DP and any oracle must combine cost
/// terms through this function to agree bit for bit.
#[inline]
pub fn stage_objective(c: &StageCost, lambda: f64) -> f64 {
    c.fuel + lambda * c.time
}

/// Per-vehicle traction and brake force on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellForce {
    pub traction: f64,
    pub brake: f64,
}

fn cell_force(
    problem: &ClacProblem,
    i: usize,
    cell: (f64, f64),
    v0: f64,
    v1: f64,
) -> Option<(CellForce, f64, f64)> {
    let p = &problem.vehicles[i];
    let env = &problem.env;
    let (start, len) = cell;
    let v_mid = 0.5 * (v0 + v1);
    let offset = match problem.follower_grade {
        FollowerGrade::Offset => i as f64 * problem.tau_ref * v_mid,
        FollowerGrade::Same => 0.0,
    };
    let a = start - offset;
    let sin = ((problem.road.altitude_at(a + len) - problem.road.altitude_at(a)) / len).clamp(-1.0, 1.0);
    let cos = (1.0 - sin * sin).sqrt();
    let cd = if i == 0 { p.cd0 } else { drag_coefficient_at(p, problem.tau_ref) };
    let v2_mean = 0.5 * (v0 * v0 + v1 * v1);
    let force = p.mass * (v1 * v1 - v0 * v0) / (2.0 * len)
        + p.c_r * p.mass * env.g * cos
        + p.mass * env.g * sin
        + 0.5 * cd * env.rho * p.frontal_area * v2_mean;
    let dt = 2.0 * len / (v0 + v1);
    let v_hi = v0.max(v1);
    if force > 0.0 {
        if force * v_hi > p.p_max {
            return None;
        }
        let fuel = p.p1 * force * len + p.p0 * dt;
        Some((CellForce { traction: force, brake: 0.0 }, fuel, dt))
    } else {
        let engine_drag = p.p_min / v_hi;
        if force >= engine_drag {
            Some((CellForce { traction: force, brake: 0.0 }, p.p0 * dt, dt))
        } else {
            let brake = engine_drag - force;
            if brake > p.mass * problem.max_brake_decel {
                return None;
            }
            Some((CellForce { traction: engine_drag, brake }, p.p0 * dt, dt))
        }
    }
}

/// Platoon fuel over stage `k` when moving from `v0` to `v1` with constant
/// acceleration; infeasible transitions cost infinity.
pub fn stage_cost(problem: &ClacProblem, k: usize, v0: f64, v1: f64) -> StageCost {
    let cells = problem.cells();
    stage_cost_on(problem, cells[k], v0, v1)
}

pub(crate) fn stage_cost_on(problem: &ClacProblem, cell: (f64, f64), v0: f64, v1: f64) -> StageCost {
    let mut total = StageCost::default();
    for i in 0..problem.vehicles.len() {
        match cell_force(problem, i, cell, v0, v1) {
            Some((f, fuel, dt)) => {
                total.fuel += fuel;
                total.time = dt;
                total.brake_energy += f.brake * cell.1;
            }
            None => return StageCost::infeasible(),
        }
    }
    total
}

/// Velocity as a function of route position; `v^2` is linear between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub knots: Vec<(f64, f64)>,
}

impl VelocityProfile {
    pub fn constant(start: f64, end: f64, v: f64) -> Self {
        Self { knots: vec![(start, v), (end, v)] }
    }

    pub fn start(&self) -> f64 {
        self.knots[0].0
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    fn locate(&self, s: f64) -> Option<usize> {
        if self.knots.len() < 2 || s <= self.start() || s >= self.end() {
            return None;
        }
        Some(self.knots.partition_point(|k| k.0 <= s) - 1)
    }

    /// Reference velocity at `s`, held constant beyond the ends.
    pub fn eval(&self, s: f64) -> f64 {
        match self.locate(s) {
            Some(k) => {
                let (s0, v0) = self.knots[k];
                let (s1, v1) = self.knots[k + 1];
                let frac = (s - s0) / (s1 - s0);
                (v0 * v0 + frac * (v1 * v1 - v0 * v0)).sqrt()
            }
            None if s <= self.start() => self.knots[0].1,
            None => self.knots[self.knots.len() - 1].1,
        }
    }

    /// `dv/ds` at `s`; zero beyond the ends.
    pub fn slope(&self, s: f64) -> f64 {
        match self.locate(s) {
            Some(k) => {
                let (s0, v0) = self.knots[k];
                let (s1, v1) = self.knots[k + 1];
                let v = self.eval(s).max(1e-6);
                (v1 * v1 - v0 * v0) / (2.0 * (s1 - s0) * v)
            }
            None => 0.0,
        }
    }

    /// Travel time over the profile.
    pub fn travel_time(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| 2.0 * (w[1].0 - w[0].0) / (w[0].1 + w[1].1))
            .sum()
    }

    pub fn truncated(&self, end: f64) -> Self {
        let mut knots: Vec<_> = self.knots.iter().copied().filter(|k| k.0 < end).collect();
        if knots.is_empty() || end > knots[knots.len() - 1].0 {
            knots.push((end, self.eval(end)));
        }
        Self { knots }
    }

    /// Appends `other`, which must start where this profile ends.
    pub fn extend(&mut self, other: &VelocityProfile) {
        let skip = usize::from(
            !self.knots.is_empty() && (other.start() - self.end()).abs() < 1e-9,
        );
        self.knots.extend(other.knots.iter().skip(skip));
    }

    pub fn min_speed(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min)
    }

    pub fn max_speed(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Transition {
    to: u32,
    cost: StageCost,
}

/// Precomputed transition costs of a problem, reusable across multipliers.
#[derive(Debug, Clone)]
pub struct StageTable {
    pub levels: Vec<f64>,
    pub cells: Vec<(f64, f64)>,
    // stages[k][j] = feasible transitions out of level j at stage k
    stages: Vec<Vec<Vec<Transition>>>,
}

/// One DP path with its totals.
#[derive(Debug, Clone, PartialEq)]
pub struct DpPath {
    pub levels: Vec<usize>,
    pub objective: f64,
    pub fuel: f64,
    pub time: f64,
    pub brake_energy: f64,
}

/// Totals of the best path into (or out of) each level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelValue {
    pub objective: f64,
    pub fuel: f64,
    pub time: f64,
}

impl LevelValue {
    const NONE: LevelValue =
        LevelValue { objective: f64::INFINITY, fuel: f64::INFINITY, time: f64::INFINITY };
    const ZERO: LevelValue = LevelValue { objective: 0.0, fuel: 0.0, time: 0.0 };

    pub fn is_feasible(&self) -> bool {
        self.objective.is_finite()
    }
}

impl StageTable {
    pub fn build(problem: &ClacProblem) -> Self {
        let levels = problem.levels();
        let cells = problem.cells();
        let (a_down, a_up) = acceleration_bounds(problem, &levels);
        let stages = cells
            .iter()
            .map(|&cell| {
                levels
                    .iter()
                    .map(|&v0| {
                        let lo = v0 * v0 + 2.0 * cell.1 * a_down;
                        let hi = v0 * v0 + 2.0 * cell.1 * a_up;
                        levels
                            .iter()
                            .enumerate()
                            .filter(|(_, &v1)| v1 * v1 >= lo && v1 * v1 <= hi)
                            .filter_map(|(j1, &v1)| {
                                let cost = stage_cost_on(problem, cell, v0, v1);
                                cost.is_feasible().then_some(Transition { to: j1 as u32, cost })
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { levels, cells, stages }
    }

    pub fn num_stages(&self) -> usize {
        self.cells.len()
    }

    pub fn level_of(&self, v: f64) -> usize {
        nearest_level(&self.levels, v)
    }

    /// Backward values `V[0][j]` of the best path from each start level to an
    /// admissible end, with decisions for path recovery.
    fn backward(&self, lambda: f64, end: Option<usize>) -> (Vec<Vec<LevelValue>>, Vec<Vec<u32>>) {
        let m = self.levels.len();
        let k_n = self.num_stages();
        let mut values = vec![vec![LevelValue::NONE; m]; k_n + 1];
        let mut choice = vec![vec![u32::MAX; m]; k_n];
        for (j, v) in values[k_n].iter_mut().enumerate() {
            if end.is_none_or(|e| e == j) {
                *v = LevelValue::ZERO;
            }
        }
        for k in (0..k_n).rev() {
            let (head, tail) = values.split_at_mut(k + 1);
            let next = &tail[0];
            for j in 0..m {
                let mut best = LevelValue::NONE;
                let mut best_to = u32::MAX;
                for t in &self.stages[k][j] {
                    let nv = &next[t.to as usize];
                    if !nv.is_feasible() {
                        continue;
                    }
                    let obj = stage_objective(&t.cost, lambda) + nv.objective;
                    // ascending `to`, so `<=` keeps the higher velocity on ties
                    if obj <= best.objective {
                        best = LevelValue {
                            objective: obj,
                            fuel: t.cost.fuel + nv.fuel,
                            time: t.cost.time + nv.time,
                        };
                        best_to = t.to;
                    }
                }
                head[k][j] = best;
                choice[k][j] = best_to;
            }
        }
        (values, choice)
    }

    /// Best path for multiplier `lambda` between the given boundaries.
    pub fn solve(&self, lambda: f64, start: Option<usize>, end: Option<usize>) -> Option<DpPath> {
        let m = self.levels.len();
        if self.num_stages() == 0 {
            let j = match (start, end) {
                (Some(a), Some(b)) if a != b => return None,
                (Some(a), _) | (None, Some(a)) => a,
                (None, None) => m - 1,
            };
            return Some(DpPath {
                levels: vec![j],
                objective: 0.0,
                fuel: 0.0,
                time: 0.0,
                brake_energy: 0.0,
            });
        }
        let (values, choice) = self.backward(lambda, end);
        let j0 = match start {
            Some(j) => j,
            None => {
                let mut best = None;
                for (j, v) in values[0].iter().enumerate() {
                    if v.is_feasible()
                        && best.is_none_or(|b: usize| v.objective <= values[0][b].objective)
                    {
                        best = Some(j);
                    }
                }
                best?
            }
        };
        if !values[0][j0].is_feasible() {
            return None;
        }
        let mut levels = vec![j0];
        let mut brake = 0.0;
        let mut fuel = 0.0;
        let mut time = 0.0;
        let mut j = j0;
        for (k, row) in choice.iter().enumerate().take(self.num_stages()) {
            let to = row[j];
            let t = self.stages[k][j].iter().find(|t| t.to == to).expect("recorded choice");
            brake += t.cost.brake_energy;
            fuel += t.cost.fuel;
            time += t.cost.time;
            j = to as usize;
            levels.push(j);
        }
        Some(DpPath { levels, objective: values[0][j0].objective, fuel, time, brake_energy: brake })
    }

    /// Best totals from every start level into a fixed end level.
    pub fn values_to_end(&self, lambda: f64, end: usize) -> Vec<LevelValue> {
        if self.num_stages() == 0 {
            let mut out = vec![LevelValue::NONE; self.levels.len()];
            out[end] = LevelValue::ZERO;
            return out;
        }
        self.backward(lambda, Some(end)).0.swap_remove(0)
    }

    /// Best totals from a fixed start level into every end level.
    pub fn values_from_start(&self, lambda: f64, start: usize) -> Vec<LevelValue> {
        let m = self.levels.len();
        let mut cur = vec![LevelValue::NONE; m];
        cur[start] = LevelValue::ZERO;
        for k in 0..self.num_stages() {
            let mut next = vec![LevelValue::NONE; m];
            for (j, v) in cur.iter().enumerate() {
                if !v.is_feasible() {
                    continue;
                }
                for t in &self.stages[k][j] {
                    let obj = v.objective + stage_objective(&t.cost, lambda);
                    let slot = &mut next[t.to as usize];
                    if obj < slot.objective {
                        *slot = LevelValue {
                            objective: obj,
                            fuel: v.fuel + t.cost.fuel,
                            time: v.time + t.cost.time,
                        };
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// All feasible successors of level `j` at stage `k` with their costs.
    pub fn transitions(&self, k: usize, j: usize) -> impl Iterator<Item = (usize, StageCost)> + '_ {
        self.stages[k][j].iter().map(|t| (t.to as usize, t.cost))
    }

    pub fn profile_of(&self, path: &DpPath) -> VelocityProfile {
        let mut knots = Vec::with_capacity(path.levels.len());
        match self.cells.first() {
            None => {}
            Some(&(s0, _)) => knots.push((s0, self.levels[path.levels[0]])),
        }
        for (k, &(s, len)) in self.cells.iter().enumerate() {
            knots.push((s + len, self.levels[path.levels[k + 1]]));
        }
        VelocityProfile { knots }
    }
}

fn nearest_level(levels: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (j, &l) in levels.iter().enumerate() {
        if (l - v).abs() < (levels[best] - v).abs() - 1e-12 {
            best = j;
        }
    }
    best
}

/// Loose bounds on achievable acceleration; transitions outside them are
/// infeasible for every vehicle, so pruning them does not change the DP.
fn acceleration_bounds(problem: &ClacProblem, levels: &[f64]) -> (f64, f64) {
    let v_lo = levels.first().copied().unwrap_or(problem.v_min).max(1e-3);
    let v_hi = levels.last().copied().unwrap_or(problem.v_max);
    let max_sin = problem
        .road
        .knots()
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
        .min(1.0);
    let g = problem.env.g;
    let mut up = f64::NEG_INFINITY;
    let mut down = f64::INFINITY;
    for p in &problem.vehicles {
        let drag_max = 0.5 * p.cd0 * problem.env.rho * p.frontal_area * v_hi * v_hi;
        up = up.max(p.p_max / (p.mass * v_lo) + g * max_sin);
        down = down.min(
            p.p_min / (p.mass * v_lo)
                - problem.max_brake_decel
                - p.c_r * g
                - g * max_sin
                - drag_max / p.mass,
        );
    }
    (down * 1.01 - 1e-9, up * 1.01 + 1e-9)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClacSolution {
    pub profile: VelocityProfile,
    /// Total platoon fuel over the window [kg].
    pub fuel: f64,
    /// Fuel per vehicle and metre [kg/m].
    pub j_clac: f64,
    pub time: f64,
    /// Lagrangian value `fuel + lambda * time` of the chosen grid path.
    pub objective: f64,
    pub lambda: f64,
    pub achieved_avg_speed: f64,
    /// `|mean(1/v) - 1/v_bar|` [s/m].
    pub pace_residual: f64,
    pub brake_energy: f64,
    /// `forces[i][k]`: force plan of vehicle `i` on stage `k`.
    pub forces: Vec<Vec<CellForce>>,
    pub path: Vec<usize>,
}

fn boundary_level(table: &StageTable, b: Boundary) -> Option<usize> {
    match b {
        Boundary::Free => None,
        Boundary::Speed(v) => Some(table.level_of(v)),
    }
}

/// Result of the multiplier search: the grid paths on either side of the
/// time target.
#[derive(Debug, Clone)]
pub struct Bracket {
    pub slow: (f64, DpPath),
    pub fast: (f64, DpPath),
}

impl Bracket {
    /// Fuel at exactly `target_time` on the segment joining the two paths in
    /// the (time, fuel) plane.
    pub fn interpolated_fuel(&self, target_time: f64) -> f64 {
        let (a, b) = (&self.slow.1, &self.fast.1);
        if (a.time - b.time).abs() < 1e-12 {
            return a.fuel.min(b.fuel);
        }
        let w = ((a.time - target_time) / (a.time - b.time)).clamp(0.0, 1.0);
        a.fuel + w * (b.fuel - a.fuel)
    }

    /// The side closer to `target_time` (faster side on ties).
    pub fn closest(&self, target_time: f64) -> (f64, &DpPath) {
        let ds = (self.slow.1.time - target_time).abs();
        let df = (self.fast.1.time - target_time).abs();
        if ds < df {
            (self.slow.0, &self.slow.1)
        } else {
            (self.fast.0, &self.fast.1)
        }
    }
}

/// Finds multipliers whose grid optima bracket `target_time`.
pub fn bracket_time(
    table: &StageTable,
    start: Option<usize>,
    end: Option<usize>,
    target_time: f64,
    tolerance: f64,
) -> Result<Bracket> {
    let eval = |l: f64| table.solve(l, start, end);
    let Some(p0) = eval(0.0) else {
        return Err(PlatoonError::Infeasible("no feasible velocity profile".into()));
    };
    if (p0.time - target_time).abs() <= tolerance {
        return Ok(Bracket { slow: (0.0, p0.clone()), fast: (0.0, p0) });
    }
    let (mut lo, mut hi);
    if p0.time > target_time {
        // too slow: raise the price of time
        lo = (0.0, p0);
        let mut l = 1e-4;
        loop {
            let p = eval(l).expect("feasibility does not depend on lambda");
            if p.time <= target_time + tolerance {
                hi = (l, p);
                break;
            }
            lo = (l, p);
            l *= 2.0;
            if l > 1e3 {
                return Err(PlatoonError::Infeasible(format!(
                    "average speed unreachable: fastest grid profile takes {:.2} s > {:.2} s (lambda bracket [{:.3e}, inf))",
                    lo.1.time, target_time, lo.0
                )));
            }
        }
    } else {
        hi = (0.0, p0);
        let mut l = -1e-4;
        loop {
            let p = eval(l).expect("feasibility does not depend on lambda");
            if p.time >= target_time - tolerance {
                lo = (l, p);
                break;
            }
            hi = (l, p);
            l *= 2.0;
            if l < -1e3 {
                return Err(PlatoonError::Infeasible(format!(
                    "average speed unreachable: slowest grid profile takes {:.2} s < {:.2} s (lambda bracket (-inf, {:.3e}])",
                    hi.1.time, target_time, hi.0
                )));
            }
        }
    }
    for _ in 0..BISECTION_ITERATIONS {
        if (lo.1.time - target_time).abs() <= tolerance || (hi.1.time - target_time).abs() <= tolerance {
            break;
        }
        let mid = 0.5 * (lo.0 + hi.0);
        if mid <= lo.0 || mid >= hi.0 {
            break;
        }
        let p = eval(mid).expect("feasibility does not depend on lambda");
        if p.time > target_time {
            lo = (mid, p);
        } else {
            hi = (mid, p);
        }
    }
    Ok(Bracket { slow: lo, fast: hi })
}

fn forces_along(problem: &ClacProblem, table: &StageTable, path: &[usize]) -> Vec<Vec<CellForce>> {
    (0..problem.vehicles.len())
        .map(|i| {
            table
                .cells
                .iter()
                .enumerate()
                .map(|(k, &cell)| {
                    let v0 = table.levels[path[k]];
                    let v1 = table.levels[path[k + 1]];
                    cell_force(problem, i, cell, v0, v1).map(|f| f.0).unwrap_or_default()
                })
                .collect()
        })
        .collect()
}

/// Solves the look-ahead problem on a prebuilt table.
pub fn solve_clac_with_table(problem: &ClacProblem, table: &StageTable) -> Result<ClacSolution> {
    let horizon: f64 = table.cells.iter().map(|c| c.1).sum();
    let start = boundary_level(table, problem.initial);
    let end = boundary_level(table, problem.terminal);
    if horizon <= 0.0 {
        let path = table
            .solve(0.0, start, end)
            .ok_or_else(|| PlatoonError::Infeasible("boundary speeds differ on empty window".into()))?;
        let v = table.levels[path.levels[0]];
        return Ok(ClacSolution {
            profile: VelocityProfile { knots: vec![(problem.start, v)] },
            fuel: 0.0,
            j_clac: 0.0,
            time: 0.0,
            objective: 0.0,
            lambda: 0.0,
            achieved_avg_speed: v,
            pace_residual: 0.0,
            brake_energy: 0.0,
            forces: vec![Vec::new(); problem.vehicles.len()],
            path: path.levels,
        });
    }
    let target_time = horizon / problem.v_bar;
    let bracket = bracket_time(table, start, end, target_time, PACE_TOLERANCE * horizon * 0.5)?;
    let (lambda, path) = bracket.closest(target_time);
    let path = path.clone();
    let pace = path.time / horizon;
    Ok(ClacSolution {
        profile: table.profile_of(&path),
        fuel: path.fuel,
        j_clac: path.fuel / (problem.vehicles.len() as f64 * horizon),
        time: path.time,
        objective: path.objective,
        lambda,
        achieved_avg_speed: horizon / path.time,
        pace_residual: (pace - 1.0 / problem.v_bar).abs(),
        brake_energy: path.brake_energy,
        forces: forces_along(problem, table, &path.levels),
        path: path.levels,
    })
}

/// Minimizes platoon fuel over the window subject to the average-speed
/// request, speed bounds and power limits.
pub fn solve_clac(problem: &ClacProblem) -> Result<ClacSolution> {
    problem.validate()?;
    let table = StageTable::build(problem);
    if table.levels.is_empty() {
        return Err(PlatoonError::Infeasible("velocity grid is empty".into()));
    }
    solve_clac_with_table(problem, &table)
}

/// Receding-horizon settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecedingHorizon {
    pub horizon: f64,
    pub commit: f64,
}

impl Default for RecedingHorizon {
    fn default() -> Self {
        Self { horizon: 2500.0, commit: 500.0 }
    }
}

/// Solves the window starting at `position` with the platoon at `speed` and
/// returns the first `commit` metres of the optimal profile.
pub fn receding_horizon_step(
    template: &ClacProblem,
    rh: &RecedingHorizon,
    position: f64,
    speed: f64,
    route_end: f64,
) -> Result<VelocityProfile> {
    let horizon = rh.horizon.min(route_end - position).max(0.0);
    let problem = ClacProblem {
        start: position,
        horizon,
        initial: Boundary::Speed(speed),
        ..template.clone()
    };
    let sol = solve_clac(&problem)?;
    Ok(sol.profile.truncated((position + rh.commit).min(position + horizon)))
}

/// Plans `[from, to]` by repeated receding-horizon steps, assuming the
/// platoon tracks each committed piece.
pub fn plan_receding(
    template: &ClacProblem,
    rh: &RecedingHorizon,
    from: f64,
    to: f64,
    initial_speed: f64,
) -> Result<VelocityProfile> {
    if !(rh.commit > 0.0 && rh.horizon >= rh.commit) {
        return Err(PlatoonError::Invalid("receding horizon needs 0 < commit <= horizon".into()));
    }
    let mut profile = VelocityProfile { knots: vec![(from, initial_speed)] };
    let mut pos = from;
    let mut speed = initial_speed;
    while to - pos > 1e-6 {
        let piece = receding_horizon_step(template, rh, pos, speed, to)?;
        pos = piece.end();
        speed = piece.knots[piece.knots.len() - 1].1;
        profile.extend(&piece);
    }
    Ok(profile)
}
