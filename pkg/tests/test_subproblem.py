import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bendersplan.detequiv import solve_closed
from bendersplan.instance import flat_demand_instance, generate_synthetic
from bendersplan.subproblem import (
    CapacityPoint,
    SubproblemProgram,
    build_subproblem,
    make_cut,
    solve_subproblem,
)


def point_for(inst, values):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return CapacityPoint(list(inst.years), inst.capacity_items(), values, values.copy())


def test_flat_value_and_subgradient():
    inst = flat_demand_instance()
    res = solve_subproblem(build_subproblem(inst, 2030, "s0", point_for(inst, [[10.0]])))
    assert res.value == pytest.approx(240.0, rel=1e-6)
    # any slope in [-(1000 - 1) * 24, 0] is a valid subgradient at the kink
    assert -999.0 * 24 - 1e-3 <= res.duals[0] <= 1e-6


def test_flat_slope_below_the_kink():
    inst = flat_demand_instance()
    res = solve_subproblem(build_subproblem(inst, 2030, "s0", point_for(inst, [[6.0]])))
    assert res.value == pytest.approx(24 * (6 * 1.0 + 4 * 1000.0), rel=1e-6)
    assert res.duals[0] == pytest.approx(-(1000.0 - 1.0) * 24, rel=1e-6)


def test_zero_capacity_sheds_everything():
    inst = flat_demand_instance()
    res = solve_subproblem(build_subproblem(inst, 2030, "s0", point_for(inst, [[0.0]])))
    assert res.value == pytest.approx(240_000.0, rel=1e-6)


def test_point_must_cover_year():
    inst = generate_synthetic(1, 1, 3, 1, 12, 2)
    bad = CapacityPoint([2030], inst.capacity_items(), np.zeros((1, 4)), np.zeros((1, 4)))
    with pytest.raises(ValueError, match="2040"):
        build_subproblem(inst, 2040, "s00", bad)


def test_set_point_reuse_matches_fresh_build():
    inst = generate_synthetic(3, 2, 3, 1, 24, 1)
    sp = SubproblemProgram(inst, 2030, "s01")
    rng = np.random.default_rng(0)
    for _ in range(3):
        cap = rng.uniform(0, 20, size=(1, 4))
        sp.set_point(cap[0])
        reused = solve_subproblem(sp).value
        fresh = solve_subproblem(build_subproblem(inst, 2030, "s01", point_for(inst, cap))).value
        assert reused == pytest.approx(fresh, rel=1e-7)


def test_closed_optimum_equals_sum_of_subproblems():
    inst = generate_synthetic(7, 2, 3, 1, 24, 2)
    sol = solve_closed(inst)
    pt = CapacityPoint(list(inst.years), sol.items, sol.capacities, sol.expansion)
    total = sol.expansion_cost
    for y in inst.years:
        for s in inst.scenarios:
            total += s.probability * solve_subproblem(build_subproblem(inst, y, s.id, pt)).value
    assert total == pytest.approx(sol.objective, rel=1e-6)


def test_rounding_clears_tiny_values():
    pt = CapacityPoint([2030], [("a", "power")], np.array([[5e-7]]), np.array([[-3e-8]])).rounded()
    assert pt.values[0, 0] == 0.0 and pt.expansion[0, 0] == 0.0


def test_cut_small_duals_rounded():
    inst = flat_demand_instance()
    res = solve_subproblem(build_subproblem(inst, 2030, "s0", point_for(inst, [[20.0]])))
    cut = make_cut(res, np.array([20.0]), 3)
    assert cut.gradient[0] == 0.0
    assert cut.iteration_created == 3 and cut.last_active == 3


@given(anchor=st.floats(0, 20), probe=st.floats(0, 20))
@settings(max_examples=30, deadline=None)
def test_cuts_underestimate_the_value_function(anchor, probe):
    inst = flat_demand_instance()
    sp = SubproblemProgram(inst, 2030, "s0")
    sp.set_point(np.array([anchor]))
    cut = make_cut(solve_subproblem(sp), np.array([anchor]), 1)
    sp.set_point(np.array([probe]))
    true = solve_subproblem(sp)
    slack = 1e-6 * max(1.0, abs(true.value))
    assert cut.evaluate(np.array([probe])) <= true.value + slack


def test_inexact_values_within_reported_slack():
    inst = generate_synthetic(2, 1, 4, 1, 168, 1)
    sp = SubproblemProgram(inst, 2030, "s00")
    sp.set_point(np.array([8.0, 5.0, 5.0, 2.0, 10.0]))
    exact = solve_subproblem(sp, 1e-10).value
    for tol in (1e-2, 1e-4, 1e-6):
        r = solve_subproblem(sp, tol)
        assert r.requested_tolerance == tol
        assert exact <= r.value + r.achieved_tolerance * max(1.0, abs(r.value))
