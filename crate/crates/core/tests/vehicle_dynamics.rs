use platoon_core::road::AltitudeProfile;
use platoon_core::vehicle::{
    air_drag, drag_coefficient, fuel_flow, step_time, ControlInput, Environment, VehicleParameters, VehicleState,
};
use proptest::prelude::*;

fn hill() -> AltitudeProfile {
    AltitudeProfile::new(&[(0.0, 0.0), (400.0, 12.0), (900.0, 2.0), (2000.0, 20.0), (5000.0, 0.0)]).unwrap()
}

fn run(
    params: &VehicleParameters,
    road: &AltitudeProfile,
    mut state: VehicleState,
    u: ControlInput,
    dt: f64,
    steps: usize,
) -> (VehicleState, f64) {
    let env = Environment::default();
    let mut work = 0.0;
    for _ in 0..steps {
        let out = step_time(params, &env, road, &state, None, &u, dt).unwrap();
        work += out.traction_energy - out.brake_energy - out.resistive_energy;
        state = out.state;
    }
    (state, work)
}

#[test]
fn energy_audit_closes() {
    let p = VehicleParameters::default();
    let g = Environment::default().g;
    let road = hill();
    for (traction, brake) in [(12_000.0, 0.0), (4_000.0, 0.0), (0.0, 3_000.0)] {
        let start = VehicleState { s: 100.0, v: 22.0 };
        let (end, work) = run(&p, &road, start, ControlInput { traction, brake }, 0.1, 600);
        let kinetic = 0.5 * p.mass * (end.v * end.v - start.v * start.v);
        let potential = p.mass * g * (road.altitude_at(end.s) - road.altitude_at(start.s));
        let balance = kinetic + potential;
        let scale = work.abs().max(balance.abs());
        assert!((balance - work).abs() <= 1e-3 * scale, "{balance} vs {work}");
    }
}

#[test]
fn halving_the_step_shrinks_error_sixteenfold() {
    // smooth inputs: flat road, constant traction, drag only
    let p = VehicleParameters::default();
    let road = AltitudeProfile::flat(1e5);
    let u = ControlInput::traction(20_000.0);
    let start = VehicleState { s: 0.0, v: 10.0 };
    let horizon = 40.0;
    let at = |dt: f64| run(&p, &road, start, u, dt, (horizon / dt).round() as usize).0;
    let reference = at(0.005);
    let err = |dt: f64| (at(dt).v - reference.v).abs();
    let ratio = err(2.0) / err(1.0);
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn free_roll_from_rest() {
    let p = VehicleParameters { c_r: 0.0, ..Default::default() };
    let g = Environment::default().g;
    let grade = 0.01f64;
    let road = AltitudeProfile::new(&[(0.0, 100.0), (1000.0, 100.0 - 1000.0 * grade)]).unwrap();
    let (end, _) = run(&p, &road, VehicleState { s: 10.0, v: 0.0 }, ControlInput::default(), 0.1, 100);
    let expected = g * grade * 10.0;
    assert!((end.v / expected - 1.0).abs() < 1e-3, "{} vs {expected}", end.v);
}

#[test]
fn uniform_motion_on_symmetric_hill_under_force_balance() {
    let p = VehicleParameters::default();
    let env = Environment::default();
    let road = AltitudeProfile::new(&[(0.0, 0.0), (500.0, 10.0), (1000.0, 0.0), (2000.0, 0.0)]).unwrap();
    let mut state = VehicleState { s: 0.0, v: 20.0 };
    while state.s < 1200.0 {
        let alpha = road.grade_clamped(state.s);
        let hold = platoon_core::vehicle::steady_traction(&p, &env, alpha, p.cd0, state.v);
        let u = if hold >= 0.0 { ControlInput::traction(hold) } else { ControlInput { traction: 0.0, brake: -hold } };
        state = step_time(&p, &env, &road, &state, None, &u, 0.1).unwrap().state;
    }
    assert!((state.v - 20.0).abs() < 1e-3, "{}", state.v);
}

proptest! {
    #[test]
    fn drag_coefficient_increases_and_stays_bounded(a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let p = VehicleParameters::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let c_lo = drag_coefficient(&p, Some(lo)).unwrap();
        let c_hi = drag_coefficient(&p, Some(hi)).unwrap();
        prop_assert!(c_lo <= c_hi);
        prop_assert!(c_lo >= p.cd0 * (1.0 - p.alpha1) - 1e-15 && c_hi < p.cd0);
    }

    #[test]
    fn follower_drag_below_lone_vehicle(tau in 0.0f64..20.0, v in 1.0f64..35.0) {
        let p = VehicleParameters::default();
        let env = Environment::default();
        let follower = air_drag(&p, &env, drag_coefficient(&p, Some(tau)).unwrap(), v);
        let lone = air_drag(&p, &env, drag_coefficient(&p, None).unwrap(), v);
        prop_assert!(follower < lone);
    }

    #[test]
    fn fuel_flow_is_affine_in_power(power in 0.0f64..300_000.0, v in 5.0f64..30.0) {
        let p = VehicleParameters::default();
        let phi = fuel_flow(&p, power / v, v).unwrap();
        prop_assert!((phi - (p.p1 * power + p.p0)).abs() <= 1e-15);
    }
}
