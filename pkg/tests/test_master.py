import numpy as np
import pytest

from bendersplan.instance import flat_demand_instance, generate_synthetic
from bendersplan.master import (
    ESTIMATOR_FLOOR,
    add_cuts,
    build_master,
    maintain_cuts,
    master_program,
    solve_master,
)
from bendersplan.subproblem import Cut, SubproblemProgram, make_cut, solve_subproblem


def cut_at(inst, cap, k=1):
    sp = SubproblemProgram(inst, 2030, "s0")
    sp.set_point(np.array([cap]))
    return make_cut(solve_subproblem(sp), np.array([cap]), k)


def test_fresh_master_builds_nothing():
    inst = generate_synthetic(1, 2, 3, 1, 24, 2)
    sol = solve_master(build_master(inst))
    assert np.all(sol.point.expansion == 0.0)
    assert sol.objective == pytest.approx(ESTIMATOR_FLOOR * 1.0, abs=1e-6)


def test_cuts_move_the_master():
    inst = flat_demand_instance()
    state = build_master(inst)
    add_cuts(state, [cut_at(inst, 0.0)], 1)
    sol = solve_master(state)
    # any slope <= -(1000 - 1) * 24 is a subgradient at zero, so the cut only says "build"
    assert sol.point.values[0, 0] > 0.0
    add_cuts(state, [cut_at(inst, sol.point.values[0, 0])], 2)
    add_cuts(state, [cut_at(inst, 10.0)], 3)
    add_cuts(state, [cut_at(inst, 15.0)], 4)  # the kink cut's slope alone lets the master overshoot
    sol = solve_master(state)
    assert sol.objective == pytest.approx(1240.0, rel=1e-6)
    assert sol.point.values[0, 0] == pytest.approx(10.0, rel=1e-6)


def test_master_objective_is_a_lower_bound():
    inst = flat_demand_instance()
    state = build_master(inst)
    for k, cap in enumerate([0.0, 3.0, 17.0], start=1):
        add_cuts(state, [cut_at(inst, cap)], k)
        assert solve_master(state).objective <= 1240.0 * (1 + 1e-7)


def test_add_cuts_requires_one_per_estimator():
    inst = generate_synthetic(1, 2, 3, 1, 12, 1)
    state = build_master(inst)
    c = Cut(1, 2030, "s00", np.zeros(4), 1.0, np.zeros(4), 1)
    with pytest.raises(ValueError, match="exactly one"):
        add_cuts(state, [c], 1)
    with pytest.raises(ValueError, match="duplicate"):
        add_cuts(state, [c, c], 1)


def test_cut_deleted_after_eta_idle_iterations():
    inst = flat_demand_instance()
    state = build_master(inst, eta=3)
    add_cuts(state, [cut_at(inst, 0.0)], 1)
    for k in range(2, 5):
        assert maintain_cuts(state, k, np.array([False])) == 0  # k - 1 <= 3
    assert maintain_cuts(state, 5, np.array([False])) == 1  # 5 - 1 > 3
    assert state.cuts == [] and state.deleted == 1


def test_binding_refreshes_activity():
    inst = flat_demand_instance()
    state = build_master(inst, eta=3)
    add_cuts(state, [cut_at(inst, 0.0)], 1)
    maintain_cuts(state, 4, np.array([True]))
    assert state.cuts[0].last_active == 4
    assert maintain_cuts(state, 7, np.array([False])) == 0
    assert maintain_cuts(state, 8, np.array([False])) == 1


def test_binding_flags_identify_active_cut():
    inst = flat_demand_instance()
    state = build_master(inst)
    add_cuts(state, [cut_at(inst, 5.0)], 1)
    add_cuts(state, [cut_at(inst, 10.0)], 2)
    add_cuts(state, [cut_at(inst, 15.0)], 3)
    sol = solve_master(state)
    assert sol.binding.tolist() == [True, True, True] or sol.binding[1]
    assert sol.binding.shape == (3,)


def test_valid_inequalities_tighten_first_bound():
    inst = flat_demand_instance()
    plain = solve_master(build_master(inst))
    vi = solve_master(build_master(inst, valid_inequalities=True))
    # 240 MWh over 24 h at cf 1 needs 10 MW, i.e. 1000 of investment
    assert plain.objective == pytest.approx(0.0, abs=1e-6)
    assert vi.objective == pytest.approx(1000.0, rel=1e-6)


def test_valid_inequality_rows_counted():
    inst = generate_synthetic(1, 2, 4, 1, 12, 2)
    mp = master_program(build_master(inst, valid_inequalities=True))
    n_gen = len(inst.generation)
    assert mp.vi_rows.size == 2 * 2 * (1 + n_gen)
