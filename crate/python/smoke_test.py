"""Smoke test for the Python bindings.

Install first:  pip install -e crates/py --no-build-isolation
"""

import json

import platoon


def main():
    assert abs(platoon.drag_coefficient() - 0.6) < 1e-12
    assert abs(platoon.drag_coefficient(0.0) - 0.282) < 1e-9
    assert abs(platoon.fuel_flow(300e3 / 20.0, 20.0) - 0.015986) < 1e-9

    trailer = platoon.VehicleParameters(mass=30_000.0)
    assert trailer.mass == 30_000.0

    hill = platoon.demo_hill()
    clac = platoon.solve_clac(hill, vehicles=3, ds=100.0, dv_kmh=1.0)
    low = min(v for _, v in clac["profile"]) * 3.6
    print(f"look-ahead: {clac['fuel_kg']:.3f} kg, lowest {low:.1f} km/h")
    assert 60.0 <= low < 80.0

    merge = platoon.solve_merge()
    print(f"merge at {merge['merge_time']:.1f} s: {merge['cost']:.3f} kg vs {merge['no_merge_cost']:.3f} kg alone")
    assert merge["cost"] <= merge["no_merge_cost"]

    demo = platoon.run_hill_demo()
    print(f"hill demo: cooperative saves {demo['saving_vs_solo_percent']:.2f} % vs solo")

    scenario = platoon.Scenario.generated(20, 3, include_trio=False)
    report = scenario.run()
    assert json.loads(report.to_json())["vehicles"] and report.total_fuel_kg <= report.baseline_fuel_kg
    print(f"20 trucks plan-only: saving {report.saving_percent:.2f} %")

    try:
        platoon.AltitudeProfile([(5.0, 0.0), (10.0, 1.0)])
    except ValueError:
        pass
    else:
        raise AssertionError("profile not starting at 0 accepted")

    try:
        platoon.solve_clac(platoon.AltitudeProfile.flat(1000.0), v_bar_kmh=59.0, v_min_kmh=60.0)
    except ValueError:
        pass
    else:
        raise AssertionError("v_bar below v_min accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
