//! Vehicle-layer platoon control under a delay-based spacing policy.
//!
//! Follower `i` should pass every road point `tau_ref` seconds after its
//! predecessor, so all vehicles trace the same velocity profile in space.
//! Position is the independent variable of the reference, time of the
//! simulation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clac::VelocityProfile;
use crate::error::{PlatoonError, Result};
use crate::road::AltitudeProfile;
use crate::vehicle::{
    drag_coefficient_at, resistive_force, rk4_step, ControlInput, Environment, VehicleParameters,
    VehicleState, DEFAULT_DT,
};

const MIN_CONTROL_SPEED: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacingConfig {
    /// Reference time gap [s].
    pub tau_ref: f64,
    /// Weight of the gap to the lead vehicle, in `[0, 1)`.
    pub h0: f64,
    /// Weight of the velocity error [s].
    pub h: f64,
}

impl Default for SpacingConfig {
    fn default() -> Self {
        Self { tau_ref: 1.0, h0: 0.0, h: 2.0 }
    }
}

impl SpacingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_ref > 0.0) || !(0.0..1.0).contains(&self.h0) || !(self.h > 0.0) {
            return Err(PlatoonError::Invalid(format!(
                "spacing config needs tau_ref > 0, 0 <= h0 < 1, h > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Feedback gains of the platoon controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    /// Decay rate imposed on the spacing surface [1/s].
    pub k: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self { k: 0.5 }
    }
}

/// Times at which one vehicle passed road positions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassageLog {
    s: Vec<f64>,
    t: Vec<f64>,
    v: Vec<f64>,
    /// Speed assumed before the first sample.
    pre_speed: Option<f64>,
}

impl PassageLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Log whose vehicle is taken to have driven at `speed` before the first
    /// sample.
    pub fn with_history(speed: f64) -> Self {
        Self { pre_speed: Some(speed), ..Self::default() }
    }

    /// Appends a sample; samples with no forward progress are dropped.
    pub fn push(&mut self, s: f64, t: f64, v: f64) {
        if let (Some(&ls), Some(&lt)) = (self.s.last(), self.t.last()) {
            if !(s > ls && t > lt) {
                return;
            }
        }
        self.s.push(s);
        self.t.push(t);
        self.v.push(v);
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn last_position(&self) -> Option<f64> {
        self.s.last().copied()
    }

    fn covers(&self, s: f64) -> Result<()> {
        let ok = match (self.s.first(), self.s.last()) {
            (Some(&a), Some(&b)) => s <= b && (s >= a || self.pre_speed.is_some()),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(PlatoonError::InsufficientHistory { s })
        }
    }

    /// Interval index `k` with `s[k] <= s < s[k+1]`.
    fn interval(&self, s: f64) -> usize {
        let n = self.s.len();
        self.s.partition_point(|&x| x <= s).saturating_sub(1).min(n.saturating_sub(2))
    }

    /// Passage time `t(s)`: monotone cubic Hermite with slopes `1/v`, linear
    /// where speed data is missing.
    pub fn time_at(&self, s: f64) -> Result<f64> {
        self.covers(s)?;
        if s < self.s[0] {
            return Ok(self.t[0] - (self.s[0] - s) / self.pre_speed.unwrap_or(1.0));
        }
        if self.s.len() == 1 {
            return Ok(self.t[0]);
        }
        let k = self.interval(s);
        let (s0, s1) = (self.s[k], self.s[k + 1]);
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let hlen = s1 - s0;
        let secant = (t1 - t0) / hlen;
        let (v0, v1) = (self.v[k], self.v[k + 1]);
        if !(v0 > 0.0 && v1 > 0.0) {
            return Ok(t0 + secant * (s - s0));
        }
        // Fritsch-Carlson limiting keeps the interpolant monotone
        let limit = 3.0 * secant;
        let m0 = (1.0 / v0).min(limit);
        let m1 = (1.0 / v1).min(limit);
        let x = (s - s0) / hlen;
        let x2 = x * x;
        let x3 = x2 * x;
        Ok((2.0 * x3 - 3.0 * x2 + 1.0) * t0
            + (x3 - 2.0 * x2 + x) * hlen * m0
            + (-2.0 * x3 + 3.0 * x2) * t1
            + (x3 - x2) * hlen * m1)
    }

    /// Speed when passing `s`, linear between samples.
    pub fn speed_at(&self, s: f64) -> Result<f64> {
        self.covers(s)?;
        if s < self.s[0] {
            return Ok(self.pre_speed.unwrap_or(self.v[0]));
        }
        if self.s.len() == 1 {
            return Ok(self.v[0]);
        }
        let k = self.interval(s);
        let x = (s - self.s[k]) / (self.s[k + 1] - self.s[k]);
        Ok(self.v[k] + x * (self.v[k + 1] - self.v[k]))
    }
}

/// Error signals of one vehicle at one road position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSignals {
    /// Gap error to the predecessor [s].
    pub delta_i: f64,
    /// Gap error to the lead vehicle [s].
    pub delta_i0: f64,
    /// Velocity tracking error [m/s].
    pub e_i: f64,
    /// `(1 - h0) * delta_i + h0 * delta_i0 + h * e_i`.
    pub weighted: f64,
    /// Surface the controller drives to zero, with the velocity error
    /// expressed as a pace ratio: `h * (v_ref / v - 1)`.
    pub surface: f64,
}

/// Vehicles of one platoon, index 0 leading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatoonConfigurationState {
    pub params: Vec<VehicleParameters>,
    pub states: Vec<VehicleState>,
    pub logs: Vec<PassageLog>,
    pub reference: VelocityProfile,
    pub time: f64,
}

impl PlatoonConfigurationState {
    /// Platoon on the spacing policy: all at `v0`, vehicle `i` placed
    /// `i * tau_ref * v0` behind a lead at `s0`, with matching history.
    pub fn on_policy(
        params: Vec<VehicleParameters>,
        reference: VelocityProfile,
        s0: f64,
        v0: f64,
        tau_ref: f64,
    ) -> Self {
        let n = params.len();
        let mut states = Vec::with_capacity(n);
        let mut logs = Vec::with_capacity(n);
        for i in 0..n {
            let s = s0 - i as f64 * tau_ref * v0;
            states.push(VehicleState { s, v: v0 });
            let mut log = PassageLog::with_history(v0);
            log.push(s, 0.0, v0);
            logs.push(log);
        }
        Self { params, states, logs, reference, time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Current time gap of vehicle `i` to its predecessor.
    pub fn time_gap(&self, i: usize) -> Result<Option<f64>> {
        if i == 0 {
            return Ok(None);
        }
        let t_pred = self.logs[i - 1].time_at(self.states[i].s)?;
        Ok(Some((self.time - t_pred).max(0.0)))
    }
}

/// Spacing and tracking errors of vehicle `i` at position `s`.
pub fn compute_errors(
    state: &PlatoonConfigurationState,
    cfg: &SpacingConfig,
    i: usize,
    s: f64,
) -> Result<ErrorSignals> {
    let log = state
        .logs
        .get(i)
        .ok_or_else(|| PlatoonError::Invalid(format!("no vehicle {i} in platoon")))?;
    let t_i = log.time_at(s)?;
    let v_i = log.speed_at(s)?;
    let v_ref = state.reference.eval(s);
    let e_i = v_i - v_ref;
    let surface_v = cfg.h * (v_ref / v_i.max(MIN_CONTROL_SPEED) - 1.0);
    if i == 0 {
        return Ok(ErrorSignals {
            delta_i: 0.0,
            delta_i0: 0.0,
            e_i,
            weighted: cfg.h * e_i,
            surface: surface_v,
        });
    }
    let delta_i = t_i - state.logs[i - 1].time_at(s)? - cfg.tau_ref;
    let delta_i0 = t_i - state.logs[0].time_at(s)? - i as f64 * cfg.tau_ref;
    let gap = (1.0 - cfg.h0) * delta_i + cfg.h0 * delta_i0;
    Ok(ErrorSignals {
        delta_i,
        delta_i0,
        e_i,
        weighted: gap + cfg.h * e_i,
        surface: gap + surface_v,
    })
}

/// Control input plus the acceleration it was meant to realize.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlOutput {
    pub input: ControlInput,
    pub commanded_accel: f64,
    pub saturated: bool,
}

/// Realizes `accel` by inverting the vehicle model at the current state:
/// traction up to `P_max / v`, engine drag down to `P_min / v`, service
/// brake beyond.
pub fn invert_dynamics(
    params: &VehicleParameters,
    env: &Environment,
    alpha: f64,
    cd: f64,
    v: f64,
    accel: f64,
) -> ControlOutput {
    let v_c = v.max(MIN_CONTROL_SPEED);
    let force = params.mass * accel + resistive_force(params, env, alpha, cd, v);
    let max_traction = params.p_max / v_c;
    let engine_drag = params.p_min / v_c;
    let (input, saturated) = if force > max_traction {
        (ControlInput::traction(max_traction), true)
    } else if force >= engine_drag {
        (ControlInput::traction(force), false)
    } else {
        (ControlInput { traction: engine_drag, brake: engine_drag - force }, false)
    };
    ControlOutput { input, commanded_accel: accel, saturated }
}

/// Feedback-linearizing law for vehicle `i`.
///
/// The surface `sigma = (1-h0) d_i + h0 d_i0 + h (v_ref/v - 1)` is driven by
/// `d sigma/dt = -k sigma`. Along the vehicle's motion the gap errors change
/// at `v (1/v - 1/v_pred(s))`, which is solved for the acceleration.
pub fn platoon_control_law(
    state: &PlatoonConfigurationState,
    cfg: &SpacingConfig,
    env: &Environment,
    road: &AltitudeProfile,
    i: usize,
    gains: &ControlGains,
) -> Result<ControlOutput> {
    let x = state.states[i];
    let v = x.v.max(MIN_CONTROL_SPEED);
    let err = compute_errors(state, cfg, i, x.s)?;
    let v_ref = state.reference.eval(x.s).max(MIN_CONTROL_SPEED);
    let dv_ref = state.reference.slope(x.s);
    let pace_rate = if i == 0 {
        0.0
    } else {
        let inv_pred = 1.0 / state.logs[i - 1].speed_at(x.s)?.max(MIN_CONTROL_SPEED);
        let inv_lead = 1.0 / state.logs[0].speed_at(x.s)?.max(MIN_CONTROL_SPEED);
        (1.0 - cfg.h0) * (1.0 / v - inv_pred) + cfg.h0 * (1.0 / v - inv_lead)
    };
    let accel =
        v * v / (cfg.h * v_ref) * (v * pace_rate + cfg.h * dv_ref + gains.k * err.surface);
    let cd = match state.time_gap(i)? {
        None => state.params[i].cd0,
        Some(tau) => drag_coefficient_at(&state.params[i], tau),
    };
    let alpha = road.grade_clamped(x.s);
    Ok(invert_dynamics(&state.params[i], env, alpha, cd, x.v, accel))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub traction: f64,
    pub brake: f64,
    /// Cumulative fuel [kg].
    pub fuel: f64,
    /// Cumulative service-brake energy [J].
    pub brake_energy: f64,
}

/// Time-stamped log of one vehicle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
    /// Number of steps where the traction limit was hit.
    pub saturated_steps: usize,
}

impl TrajectoryRecord {
    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// First index with `s >= x`.
    fn crossing(&self, x: f64) -> Option<usize> {
        let k = self.samples.partition_point(|p| p.s < x);
        (k < self.samples.len()).then_some(k)
    }

    fn interp(&self, x: f64, field: impl Fn(&TrajectorySample) -> f64) -> Option<f64> {
        let k = self.crossing(x)?;
        if k == 0 {
            return (self.samples[0].s == x).then(|| field(&self.samples[0]));
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let w = (x - a.s) / (b.s - a.s);
        Some(field(a) + w * (field(b) - field(a)))
    }

    /// Speed at position `s` (linear between samples).
    pub fn speed_at(&self, s: f64) -> Option<f64> {
        self.interp(s, |p| p.v)
    }

    pub fn time_at(&self, s: f64) -> Option<f64> {
        self.interp(s, |p| p.t)
    }

    /// Fuel burnt between two road positions.
    pub fn fuel_between(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.interp(b, |p| p.fuel)? - self.interp(a, |p| p.fuel)?)
    }

    pub fn brake_energy_between(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.interp(b, |p| p.brake_energy)? - self.interp(a, |p| p.brake_energy)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "s_m", "v_mps", "F_e_N", "F_b_N", "fuel_kg"])?;
        for p in &self.samples {
            w.write_record(&[
                format!("{:.3}", p.t),
                format!("{:.4}", p.s),
                format!("{:.6}", p.v),
                format!("{:.3}", p.traction),
                format!("{:.3}", p.brake),
                format!("{:.9}", p.fuel),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// When a platoon simulation stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopCondition {
    Duration(f64),
    /// Stop once the last vehicle has passed this position.
    LastPasses(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub dt: f64,
    /// Adds `dv` to the lead vehicle's speed at time `t`.
    pub lead_kick: Option<(f64, f64)>,
    /// Hard cap on simulated time.
    pub max_time: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, lead_kick: None, max_time: 36_000.0 }
    }
}

/// Closed-loop fixed-step simulation of a platoon. All controllers read the
/// logs of the previous instant, then all vehicles advance together.
pub fn simulate_platoon(
    state: &mut PlatoonConfigurationState,
    cfg: &SpacingConfig,
    gains: &ControlGains,
    env: &Environment,
    road: &AltitudeProfile,
    stop: StopCondition,
    opts: &SimulationOptions,
) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate()?;
    let n = state.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut records: Vec<TrajectoryRecord> = vec![TrajectoryRecord::default(); n];
    let mut fuel = vec![0.0; n];
    let mut brake_energy = vec![0.0; n];
    let mut kicked = false;
    let t_end = match stop {
        StopCondition::Duration(d) => state.time + d,
        StopCondition::LastPasses(_) => state.time + opts.max_time,
    };
    loop {
        if let Some((tk, dv)) = opts.lead_kick {
            if !kicked && state.time >= tk - 1e-9 {
                state.states[0].v += dv;
                let (s, t, v) = (state.states[0].s, state.time, state.states[0].v);
                // keep the log's speed consistent with the kicked state
                if state.logs[0].last_position() == Some(s) {
                    if let Some(last) = state.logs[0].v.last_mut() {
                        *last = v;
                    }
                } else {
                    state.logs[0].push(s, t, v);
                }
                kicked = true;
            }
        }
        let mut outputs = Vec::with_capacity(n);
        let mut cds = Vec::with_capacity(n);
        for i in 0..n {
            outputs.push(platoon_control_law(state, cfg, env, road, i, gains)?);
            cds.push(match state.time_gap(i)? {
                None => state.params[i].cd0,
                Some(tau) => drag_coefficient_at(&state.params[i], tau),
            });
        }
        for i in 0..n {
            let x = state.states[i];
            let u = outputs[i].input;
            records[i].samples.push(TrajectorySample {
                t: state.time,
                s: x.s,
                v: x.v,
                traction: u.traction,
                brake: u.brake,
                fuel: fuel[i],
                brake_energy: brake_energy[i],
            });
            if outputs[i].saturated {
                records[i].saturated_steps += 1;
            }
        }
        let done = match stop {
            StopCondition::Duration(_) => state.time >= t_end - 1e-9,
            StopCondition::LastPasses(x) => state.states[n - 1].s >= x,
        };
        if done {
            break;
        }
        if state.time >= t_end - 1e-9 {
            return Err(PlatoonError::Invalid(format!(
                "simulation did not reach its stop condition within {} s",
                opts.max_time
            )));
        }
        let t_next = state.time + opts.dt;
        for i in 0..n {
            let out = rk4_step(
                &state.params[i],
                env,
                road,
                &state.states[i],
                cds[i],
                &outputs[i].input,
                opts.dt,
            );
            fuel[i] += out.fuel;
            brake_energy[i] += out.brake_energy;
            state.states[i] = out.state;
            state.logs[i].push(out.state.s, t_next, out.state.v);
        }
        state.time = t_next;
        for i in 1..n {
            let spacing = state.states[i - 1].s - state.states[i].s;
            if spacing <= 0.0 {
                return Err(PlatoonError::SafetyViolation { index: i, spacing, time: state.time });
            }
        }
    }
    Ok(records)
}

/// `integral |v_i(s) - v_ref(s)|^2 ds` over `[0, distance]` per vehicle,
/// by the trapezoidal rule on a grid of spacing `ds`.
pub fn string_stability_metric(
    records: &[TrajectoryRecord],
    v_ref: &VelocityProfile,
    distance: f64,
    ds: f64,
) -> Result<Vec<f64>> {
    if !(ds > 0.0) || !(distance > 0.0) {
        return Err(PlatoonError::Window("distance and grid step must be positive".into()));
    }
    let steps = (distance / ds).ceil() as usize;
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let err2 = |s: f64| -> Result<f64> {
                let v = rec.speed_at(s).ok_or_else(|| {
                    PlatoonError::Window(format!("vehicle {i} record does not cover {s:.1} m"))
                })?;
                let e = v - v_ref.eval(s);
                Ok(e * e)
            };
            let mut total = 0.0;
            let mut prev = err2(0.0)?;
            for k in 1..=steps {
                let s = (k as f64 * ds).min(distance);
                let s_prev = ((k - 1) as f64 * ds).min(distance);
                let cur = err2(s)?;
                total += 0.5 * (prev + cur) * (s - s_prev);
                prev = cur;
            }
            Ok(total)
        })
        .collect()
}
