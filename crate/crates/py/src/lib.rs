//! Python bindings. Results with many fields come back as plain dicts built
//! from the same JSON the command-line tool writes.

use std::path::PathBuf;

use platoon_core::case_study::FleetConfig;
use platoon_core::clac::{self, ClacProblem, KMH};
use platoon_core::merge;
use platoon_core::road;
use platoon_core::scenario::{self, HillDemoOptions, MergeSpec, RunMode};
use platoon_core::vehicle::{self, ModelParameters};
use platoon_core::PlatoonError;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(_native, InfeasibleError, PyException, "No feasible plan, profile or merge exists.");

fn err(e: PlatoonError) -> PyErr {
    match e {
        PlatoonError::Infeasible(_) | PlatoonError::NoMerge(_) | PlatoonError::SafetyViolation { .. } => {
            InfeasibleError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Truck parameters in SI units. Defaults are a 40 t truck.
#[pyclass(name = "VehicleParameters", from_py_object)]
#[derive(Clone)]
struct PyVehicleParameters {
    inner: vehicle::VehicleParameters,
}

#[pymethods]
impl PyVehicleParameters {
    #[new]
    #[pyo3(signature = (mass=None, frontal_area=None, cd0=None, alpha1=None, alpha2=None, c_r=None))]
    fn new(
        mass: Option<f64>,
        frontal_area: Option<f64>,
        cd0: Option<f64>,
        alpha1: Option<f64>,
        alpha2: Option<f64>,
        c_r: Option<f64>,
    ) -> PyResult<Self> {
        let mut p = vehicle::VehicleParameters::default();
        let fields = [
            (&mut p.mass, mass),
            (&mut p.frontal_area, frontal_area),
            (&mut p.cd0, cd0),
            (&mut p.alpha1, alpha1),
            (&mut p.alpha2, alpha2),
            (&mut p.c_r, c_r),
        ];
        for (field, value) in fields {
            if let Some(v) = value {
                *field = v;
            }
        }
        p.validate().map_err(err)?;
        Ok(Self { inner: p })
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }
    #[getter]
    fn cd0(&self) -> f64 {
        self.inner.cd0
    }
    #[getter]
    fn alpha1(&self) -> f64 {
        self.inner.alpha1
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("VehicleParameters({:?})", self.inner)
    }
}

fn params_or_default(p: Option<PyVehicleParameters>) -> vehicle::VehicleParameters {
    p.map(|p| p.inner).unwrap_or_default()
}

/// Piecewise-linear road altitude over route position.
#[pyclass(name = "AltitudeProfile", from_py_object)]
#[derive(Clone)]
struct PyAltitudeProfile {
    inner: road::AltitudeProfile,
}

#[pymethods]
impl PyAltitudeProfile {
    /// `points` are `(position_m, altitude_m)` starting at position 0.
    #[new]
    fn new(points: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self { inner: road::AltitudeProfile::new(&points).map_err(err)? })
    }

    #[staticmethod]
    fn flat(length: f64) -> Self {
        Self { inner: road::AltitudeProfile::flat(length) }
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.knots().collect()
    }

    fn altitude_at(&self, s: f64) -> f64 {
        self.inner.altitude_at(s)
    }

    fn grade_at(&self, s: f64) -> PyResult<f64> {
        self.inner.grade_at(s).map_err(err)
    }
}

/// Synthetic 2 % climb and 1.3 % descent used by the hill demonstration.
#[pyfunction]
fn demo_hill() -> PyAltitudeProfile {
    PyAltitudeProfile { inner: scenario::demo_hill() }
}

/// Drag coefficient at time gap `tau` [s] behind a predecessor; `None`
/// means driving alone.
#[pyfunction]
#[pyo3(signature = (tau=None, params=None))]
fn drag_coefficient(tau: Option<f64>, params: Option<PyVehicleParameters>) -> PyResult<f64> {
    vehicle::drag_coefficient(&params_or_default(params), tau).map_err(err)
}

/// Fuel flow [kg/s] at traction force [N] and speed [m/s].
#[pyfunction]
#[pyo3(signature = (traction, v, params=None))]
fn fuel_flow(traction: f64, v: f64, params: Option<PyVehicleParameters>) -> PyResult<f64> {
    vehicle::fuel_flow(&params_or_default(params), traction, v).map_err(err)
}

/// Cooperative look-ahead speed profile for `vehicles` trucks over the
/// whole road. Speeds in km/h, grid steps in m and km/h.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (road, vehicles=3, v_bar_kmh=80.0, v_min_kmh=60.0, v_max_kmh=90.0, ds=None, dv_kmh=None))]
fn solve_clac<'py>(
    py: Python<'py>,
    road: &PyAltitudeProfile,
    vehicles: usize,
    v_bar_kmh: f64,
    v_min_kmh: f64,
    v_max_kmh: f64,
    ds: Option<f64>,
    dv_kmh: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let model = ModelParameters::default();
    let mut p = ClacProblem::new(
        vec![model.vehicle; vehicles],
        model.env,
        road.inner.clone(),
        v_bar_kmh * KMH,
        v_min_kmh * KMH,
        v_max_kmh * KMH,
    );
    p.horizon = road.inner.length();
    p.ds = ds.unwrap_or(p.ds);
    p.dv = dv_kmh.map_or(p.dv, |dv| dv * KMH);
    let sol = py.detach(|| clac::solve_clac(&p)).map_err(err)?;
    #[derive(Serialize)]
    struct Out<'a> {
        profile: &'a [(f64, f64)],
        fuel_kg: f64,
        j_clac: f64,
        lambda: f64,
        time_s: f64,
        brake_energy_j: f64,
    }
    to_py(
        py,
        &Out {
            profile: &sol.profile.knots,
            fuel_kg: sol.fuel,
            j_clac: sol.j_clac,
            lambda: sol.lambda,
            time_s: sol.time,
            brake_energy_j: sol.brake_energy,
        },
    )
}

/// Optimal merge. `problem` is the JSON text of a merge problem file with
/// legs as node lists on the bundled network; `None` solves the synthetic
/// two-truck junction.
#[pyfunction]
#[pyo3(signature = (problem=None))]
fn solve_merge<'py>(py: Python<'py>, problem: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let s = scenario::Scenario::bundled().map_err(err)?;
    let p = match problem {
        Some(text) => {
            let spec: MergeSpec = serde_json::from_str(text).map_err(|e| err(e.into()))?;
            spec.to_problem(&s.network, &s.model).map_err(err)?
        }
        None => scenario::demo_merge_problem(&s.model),
    };
    let sol = py.detach(|| merge::solve_merge(&p)).map_err(err)?;
    to_py(py, &sol)
}

/// Solo, gap-keeping and cooperative arms over the demo hill.
#[pyfunction]
#[pyo3(signature = (vehicles=3, v_bar_kmh=80.0))]
fn run_hill_demo<'py>(py: Python<'py>, vehicles: usize, v_bar_kmh: f64) -> PyResult<Bound<'py, PyAny>> {
    let opts = HillDemoOptions { vehicles, v_bar: v_bar_kmh * KMH, ..HillDemoOptions::default() };
    let r = py
        .detach(|| scenario::run_hill_demo(&scenario::demo_hill(), &ModelParameters::default(), &opts))
        .map_err(err)?;
    to_py(py, &r)
}

/// Fleet scenario: road network, transport assignments and parameters.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Bundled 200-truck corridor scenario.
    #[staticmethod]
    fn bundled() -> PyResult<Self> {
        Ok(Self { inner: scenario::Scenario::bundled().map_err(err)? })
    }

    /// Corridor network with a seeded random fleet.
    #[staticmethod]
    #[pyo3(signature = (size, seed, include_trio=true))]
    fn generated(size: usize, seed: u64, include_trio: bool) -> Self {
        Self { inner: scenario::Scenario::generated(&FleetConfig { size, seed, include_trio, ..FleetConfig::default() }) }
    }

    /// Files override the bundled network, fleet and parameters.
    #[staticmethod]
    #[pyo3(signature = (network=None, assignments=None, params=None))]
    fn load(network: Option<PathBuf>, assignments: Option<PathBuf>, params: Option<PathBuf>) -> PyResult<Self> {
        let s = scenario::Scenario::load(network.as_deref(), assignments.as_deref(), params.as_deref()).map_err(err)?;
        Ok(Self { inner: s })
    }

    #[getter]
    fn num_vehicles(&self) -> usize {
        self.inner.assignments.len()
    }

    /// Coordination plan: leaders, who follows whom and planned fuel.
    fn plan<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let outcome = py.detach(|| scenario::plan_fleet(&self.inner)).map_err(err)?;
        to_py(py, &outcome.plan)
    }

    /// Runs the scenario; `mode` is "plan-only" or "plan-simulate".
    #[pyo3(signature = (mode="plan-only"))]
    fn run(&self, py: Python<'_>, mode: &str) -> PyResult<PyRunReport> {
        let mode = match mode {
            "plan-only" => RunMode::PlanOnly,
            "plan-simulate" => RunMode::PlanSimulate,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let report = py.detach(|| scenario::run_scenario(&self.inner, mode)).map_err(err)?;
        Ok(PyRunReport { inner: report })
    }
}

#[pyclass(name = "RunReport")]
struct PyRunReport {
    inner: scenario::RunReport,
}

#[pymethods]
impl PyRunReport {
    #[getter]
    fn total_fuel_kg(&self) -> f64 {
        self.inner.total_fuel_kg
    }
    #[getter]
    fn baseline_fuel_kg(&self) -> f64 {
        self.inner.baseline_fuel_kg
    }
    #[getter]
    fn saving_percent(&self) -> f64 {
        self.inner.saving_percent
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_class::<PyVehicleParameters>()?;
    m.add_class::<PyAltitudeProfile>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunReport>()?;
    m.add_function(wrap_pyfunction!(demo_hill, m)?)?;
    m.add_function(wrap_pyfunction!(drag_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(fuel_flow, m)?)?;
    m.add_function(wrap_pyfunction!(solve_clac, m)?)?;
    m.add_function(wrap_pyfunction!(solve_merge, m)?)?;
    m.add_function(wrap_pyfunction!(run_hill_demo, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_split_into_input_and_infeasible() {
        Python::initialize();
        Python::attach(|py| {
            assert!(err(PlatoonError::Infeasible("x".into())).is_instance_of::<InfeasibleError>(py));
            assert!(err(PlatoonError::Invalid("x".into())).is_instance_of::<PyValueError>(py));
        });
    }

    #[test]
    fn clac_result_comes_back_as_a_dict() {
        Python::initialize();
        Python::attach(|py| {
            let d = solve_clac(py, &demo_hill(), 2, 80.0, 60.0, 90.0, Some(100.0), Some(1.0)).unwrap();
            let profile: Vec<Vec<f64>> = d.get_item("profile").unwrap().extract().unwrap();
            assert_eq!(profile.first().unwrap()[0], 0.0);
            assert_eq!(profile.last().unwrap()[0], 5800.0);
        });
    }
}
