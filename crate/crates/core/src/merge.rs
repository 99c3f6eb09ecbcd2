//! Merge optimization: vehicles approach a junction on their own legs, meet
//! at a merge time and drive the remaining leg as one platoon.
//!
//! For a fixed merge time every leg is an independent fixed-time look-ahead
//! problem; the merge time itself is found by a scalar search on top.

use serde::{Deserialize, Serialize};

use crate::clac::{
    bracket_time, ClacProblem, FollowerGrade, StageTable, VelocityProfile, KMH,
};
use crate::error::{PlatoonError, Result};
use crate::road::AltitudeProfile;
use crate::vehicle::{Environment, VehicleParameters};

/// Grid and model settings shared by every leg of a merge problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LegSettings {
    pub env: Environment,
    pub tau_ref: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub ds: f64,
    pub dv: f64,
    pub max_brake_decel: f64,
    pub follower_grade: FollowerGrade,
}

impl Default for LegSettings {
    fn default() -> Self {
        Self {
            env: Environment::default(),
            tau_ref: 1.0,
            v_min: 60.0 * KMH,
            v_max: 90.0 * KMH,
            ds: 50.0,
            dv: 0.5 * KMH,
            max_brake_decel: 1.0,
            follower_grade: FollowerGrade::Offset,
        }
    }
}

impl LegSettings {
    /// Look-ahead problem for `vehicles` on `road`; the grid is anchored at
    /// `anchor` so that speed is representable exactly.
    fn problem(&self, vehicles: Vec<VehicleParameters>, road: &AltitudeProfile, anchor: f64) -> ClacProblem {
        let v_bar = anchor.clamp(self.v_min, self.v_max);
        let mut p = ClacProblem::new(vehicles, self.env, road.clone(), v_bar, self.v_min, self.v_max);
        p.horizon = road.length();
        p.tau_ref = self.tau_ref;
        p.ds = self.ds;
        p.dv = self.dv;
        p.grid_anchor = Some(anchor);
        p.follower_grade = self.follower_grade;
        p.max_brake_decel = self.max_brake_decel;
        p
    }
}

/// Lower convex hull of achievable `(time, fuel)` pairs per boundary level.
#[derive(Debug, Clone)]
pub struct TimeFrontier {
    hulls: Vec<Vec<(f64, f64)>>,
}

const TIME_EPS: f64 = 1e-6;

fn multipliers() -> Vec<f64> {
    let mut out = vec![0.0];
    for k in 0..48 {
        let l = 1e-6 * 10f64.powf(k as f64 / 8.0);
        out.push(l);
        out.push(-l);
    }
    out
}

fn lower_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.retain(|p| p.0.is_finite() && p.1.is_finite());
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

impl TimeFrontier {
    fn from_sweeps(levels: usize, sweep: impl Fn(f64) -> Vec<(f64, f64)>) -> Self {
        let mut pts = vec![Vec::new(); levels];
        for l in multipliers() {
            for (j, p) in sweep(l).into_iter().enumerate() {
                pts[j].push(p);
            }
        }
        Self { hulls: pts.into_iter().map(lower_hull).collect() }
    }

    /// Frontier over end levels with the start level fixed.
    pub fn from_start(table: &StageTable, start: usize) -> Self {
        Self::from_sweeps(table.levels.len(), |l| {
            table.values_from_start(l, start).iter().map(|v| (v.time, v.fuel)).collect()
        })
    }

    /// Frontier over start levels with the end level fixed.
    pub fn to_end(table: &StageTable, end: usize) -> Self {
        Self::from_sweeps(table.levels.len(), |l| {
            table.values_to_end(l, end).iter().map(|v| (v.time, v.fuel)).collect()
        })
    }

    /// Least fuel to traverse in exactly `time`, interpolating between
    /// Lagrangian optima; infinite outside the achievable range.
    pub fn fuel_at(&self, level: usize, time: f64) -> f64 {
        let hull = &self.hulls[level];
        match hull.len() {
            0 => f64::INFINITY,
            _ if time < hull[0].0 - TIME_EPS || time > hull[hull.len() - 1].0 + TIME_EPS => {
                f64::INFINITY
            }
            1 => hull[0].1,
            _ => {
                let k = hull.partition_point(|p| p.0 <= time).clamp(1, hull.len() - 1);
                let (a, b) = (hull[k - 1], hull[k]);
                let w = ((time - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
                a.1 + w * (b.1 - a.1)
            }
        }
    }

    /// Achievable time range for a level.
    pub fn time_range(&self, level: usize) -> Option<(f64, f64)> {
        let hull = &self.hulls[level];
        Some((hull.first()?.0, hull.last()?.0))
    }

    pub fn num_levels(&self) -> usize {
        self.hulls.len()
    }
}

/// Minimum-fuel traversal of one leg between fixed boundary speeds and times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSolution {
    /// Profile of the grid path closest to the requested duration.
    pub profile: VelocityProfile,
    /// Fuel at exactly the requested duration [kg].
    pub fuel: f64,
    pub duration: f64,
    /// Duration of the returned grid profile.
    pub profile_time: f64,
}

/// Fuel-optimal traversal of `road` by `vehicles` (solo for one vehicle,
/// platoon drag otherwise) from `v_start` to `v_end` in `duration` seconds.
pub fn segment_fuel_optimal(
    vehicles: Vec<VehicleParameters>,
    settings: &LegSettings,
    road: &AltitudeProfile,
    v_start: f64,
    v_end: f64,
    duration: f64,
) -> Result<SegmentSolution> {
    let problem = settings.problem(vehicles, road, v_end);
    problem.validate()?;
    let table = StageTable::build(&problem);
    let start = table.level_of(v_start);
    let end = table.level_of(v_end);
    if table.num_stages() == 0 {
        if start != end || duration.abs() > TIME_EPS {
            return Err(PlatoonError::Infeasible("zero-length leg needs equal speeds and zero time".into()));
        }
        return Ok(SegmentSolution {
            profile: VelocityProfile { knots: vec![(0.0, table.levels[start])] },
            fuel: 0.0,
            duration: 0.0,
            profile_time: 0.0,
        });
    }
    let length = road.length();
    let bracket = bracket_time(&table, Some(start), Some(end), duration, 1e-6 * length)?;
    let (_, path) = bracket.closest(duration);
    Ok(SegmentSolution {
        profile: table.profile_of(path),
        fuel: bracket.interpolated_fuel(duration),
        duration,
        profile_time: path.time,
    })
}

/// One vehicle approaching the merge point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeVehicle {
    pub params: VehicleParameters,
    pub start_time: f64,
    pub start_speed: f64,
    /// Altitude from the start position to the merge point.
    pub leg: AltitudeProfile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergingProblem {
    /// Platoon order after the merge: index 0 leads.
    pub vehicles: Vec<MergeVehicle>,
    /// Altitude from the merge point to the common final position.
    pub post_leg: AltitudeProfile,
    pub final_time: f64,
    pub final_speed: f64,
    /// Required speed at the merge point, if any.
    pub merge_speed: Option<f64>,
    pub settings: LegSettings,
}

impl MergingProblem {
    pub fn validate(&self) -> Result<()> {
        if self.vehicles.len() < 2 {
            return Err(PlatoonError::Invalid("merging needs at least two vehicles".into()));
        }
        for v in &self.vehicles {
            v.params.validate()?;
            if !(v.start_time < self.final_time) {
                return Err(PlatoonError::Invalid("start times must precede the final time".into()));
            }
        }
        Ok(())
    }

    fn post_params(&self) -> Vec<VehicleParameters> {
        self.vehicles.iter().map(|v| v.params).collect()
    }
}

/// Leg frontiers of a merging problem; independent of the merge time.
#[derive(Debug, Clone)]
pub struct MergeFrontiers {
    pub levels: Vec<f64>,
    pre: Vec<TimeFrontier>,
    post: TimeFrontier,
    merge_levels: Vec<usize>,
    start_times: Vec<f64>,
    final_time: f64,
}

impl MergeFrontiers {
    pub fn build(problem: &MergingProblem) -> Result<Self> {
        problem.validate()?;
        let s = &problem.settings;
        let post_problem = s.problem(problem.post_params(), &problem.post_leg, problem.final_speed);
        post_problem.validate()?;
        let post_table = StageTable::build(&post_problem);
        let levels = post_table.levels.clone();
        let post = TimeFrontier::to_end(&post_table, post_table.level_of(problem.final_speed));
        let pre = problem
            .vehicles
            .iter()
            .map(|v| {
                let p = s.problem(vec![v.params], &v.leg, problem.final_speed);
                let table = StageTable::build(&p);
                TimeFrontier::from_start(&table, table.level_of(v.start_speed))
            })
            .collect();
        let merge_levels = match problem.merge_speed {
            Some(v) => vec![post_table.level_of(v)],
            None => (0..levels.len()).collect(),
        };
        Ok(Self {
            levels,
            pre,
            post,
            merge_levels,
            start_times: problem.vehicles.iter().map(|v| v.start_time).collect(),
            final_time: problem.final_time,
        })
    }

    /// Total fuel and best merge level at merge time `t_m`.
    pub fn cost(&self, t_m: f64) -> (f64, Option<usize>) {
        let mut best = (f64::INFINITY, None);
        for &j in &self.merge_levels {
            let mut total = self.post.fuel_at(j, self.final_time - t_m);
            for (f, &t0) in self.pre.iter().zip(&self.start_times) {
                if !total.is_finite() {
                    break;
                }
                total += f.fuel_at(j, t_m - t0);
            }
            if total < best.0 {
                best = (total, Some(j));
            }
        }
        best
    }

    /// Interval of merge times outside which the cost is surely infinite.
    pub fn time_bounds(&self) -> Option<(f64, f64)> {
        let range = |f: &TimeFrontier| -> Option<(f64, f64)> {
            let rs: Vec<_> = self.merge_levels.iter().filter_map(|&j| f.time_range(j)).collect();
            if rs.is_empty() {
                return None;
            }
            Some((
                rs.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
                rs.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max),
            ))
        };
        let (post_lo, post_hi) = range(&self.post)?;
        let mut lo = self.final_time - post_hi;
        let mut hi = self.final_time - post_lo;
        for (f, &t0) in self.pre.iter().zip(&self.start_times) {
            let (a, b) = range(f)?;
            lo = lo.max(t0 + a);
            hi = hi.min(t0 + b);
        }
        (lo <= hi + TIME_EPS).then_some((lo, hi.max(lo)))
    }
}

/// Total fuel of the merge operation at merge time `t_m`: solo legs to the
/// merge point plus the platoon leg, with the merge speed optimized.
pub fn total_merge_cost(problem: &MergingProblem, t_m: f64) -> Result<f64> {
    Ok(MergeFrontiers::build(problem)?.cost(t_m).0)
}

/// Each vehicle driving its whole route alone, arriving at the final time.
pub fn no_merge_cost(problem: &MergingProblem) -> Result<f64> {
    let mut total = 0.0;
    for v in &problem.vehicles {
        let road = v.leg.concat(&problem.post_leg);
        match segment_fuel_optimal(
            vec![v.params],
            &problem.settings,
            &road,
            v.start_speed,
            problem.final_speed,
            problem.final_time - v.start_time,
        ) {
            Ok(s) => total += s.fuel,
            Err(PlatoonError::Infeasible(_)) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergingSolution {
    pub merge_time: f64,
    pub merge_speed: f64,
    /// Fuel of the merge operation at the optimal merge time [kg].
    pub merge_cost: f64,
    pub no_merge_cost: f64,
    /// `min(merge_cost, no_merge_cost)`.
    pub cost: f64,
    pub merged: bool,
    /// Pre-merge profile of each vehicle in its own leg coordinates.
    pub pre_profiles: Vec<VelocityProfile>,
    /// Common post-merge profile, in coordinates from the merge point.
    pub post_profile: VelocityProfile,
    /// Coarse scan of the merge cost curve `(t_m, fuel)`.
    pub curve: Vec<(f64, f64)>,
}

const SCAN_POINTS: usize = 41;

/// Minimizes the merge cost over the merge time: coarse scan, then golden
/// section around the best scan point.
pub fn solve_merge(problem: &MergingProblem) -> Result<MergingSolution> {
    let fr = MergeFrontiers::build(problem)?;
    let no_merge = no_merge_cost(problem)?;
    let (lo, hi) = fr
        .time_bounds()
        .ok_or_else(|| PlatoonError::Infeasible("no admissible merge time".into()))?;
    let curve: Vec<(f64, f64)> = (0..SCAN_POINTS)
        .map(|k| {
            let t = if SCAN_POINTS == 1 { lo } else { lo + (hi - lo) * k as f64 / (SCAN_POINTS - 1) as f64 };
            (t, fr.cost(t).0)
        })
        .collect();
    let best_k = (0..curve.len())
        .filter(|&k| curve[k].1.is_finite())
        .min_by(|&a, &b| curve[a].1.total_cmp(&curve[b].1))
        .ok_or_else(|| PlatoonError::Infeasible("merge cost infinite on the whole scan".into()))?;
    let mut best = curve[best_k];
    if hi > lo {
        let mut a = curve[best_k.saturating_sub(1)].0;
        let mut b = curve[(best_k + 1).min(curve.len() - 1)].0;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (fr.cost(c).0, fr.cost(d).0);
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = fr.cost(c).0;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = fr.cost(d).0;
            }
        }
        for (t, f) in [(c, fc), (d, fd)] {
            if f < best.1 {
                best = (t, f);
            }
        }
    }
    let (t_m, cost) = best;
    let level = fr.cost(t_m).1.expect("finite cost has a level");
    let v_m = fr.levels[level];
    let s = &problem.settings;
    let mut pre_profiles = Vec::with_capacity(problem.vehicles.len());
    for v in &problem.vehicles {
        let sol = segment_fuel_optimal(vec![v.params], s, &v.leg, v.start_speed, v_m, t_m - v.start_time)?;
        pre_profiles.push(sol.profile);
    }
    let post = segment_fuel_optimal(
        problem.post_params(),
        s,
        &problem.post_leg,
        v_m,
        problem.final_speed,
        problem.final_time - t_m,
    )?;
    Ok(MergingSolution {
        merge_time: t_m,
        merge_speed: v_m,
        merge_cost: cost,
        no_merge_cost: no_merge,
        cost: cost.min(no_merge),
        merged: cost <= no_merge,
        pre_profiles,
        post_profile: post.profile,
        curve,
    })
}
