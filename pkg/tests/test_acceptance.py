"""Acceptance criteria 1-12. Each test prints one PASS/FAIL line.

The suite is fixed up front: 20 seeded instances with 2 years, 168 time
steps, 2-4 scenarios and 3-5 technologies, one of them storage. Runs are
shared between criteria through a session-scoped cache.
"""
import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from bendersplan.detequiv import solve_closed
from bendersplan.driver import RunConfig, run
from bendersplan.instance import flat_demand_instance, generate_synthetic
from bendersplan.master import add_cuts, build_master, solve_master
from bendersplan.scenred import compute_z_matrix, distance, kmedoid
from bendersplan.stabilization import StabilizationState, step, update_level
from bendersplan.subproblem import SubproblemProgram, make_cut, solve_subproblem

from conftest import ACCEPTANCE_REPORT

EPS = 0.01
METHODS = ("none", "proximal", "level", "trust_region")
STABILIZED = ("proximal", "level", "trust_region")
SUITE = [dict(seed=100 + i, n_scenarios=2 + i % 3, n_techs=3 + (i // 3) % 3) for i in range(20)]

pytestmark = pytest.mark.acceptance


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_REPORT.append(line)
    print(line)
    assert ok, line


@dataclass
class Record:
    result: object
    seconds: float
    stale_cuts: int = 0  # retained cuts idle for more than eta, summed over iterations
    ball_excess: float = 0.0  # worst distance beyond the trust radius
    psi_rule_breaks: int = 0
    views: int = 0
    psi_halvings: int = 0
    psi_before: float = 0.0


@dataclass
class Lab:
    instances: list = field(default_factory=list)
    closed: list = field(default_factory=list)
    runs: dict = field(default_factory=dict)
    programs: dict = field(default_factory=dict)

    def run(self, i, name, **kw):
        key = (i, name)
        if key not in self.runs:
            cfg = RunConfig(**kw)
            rec = Record(None, 0.0)

            def observe(view):
                rec.views += 1
                rec.stale_cuts += sum(view.k - c.last_active > cfg.eta for c in view.master.cuts)
                if view.radius is not None:
                    d = float(np.linalg.norm(view.iterate.point.expansion - view.center))
                    rec.ball_excess = max(rec.ball_excess, d - view.radius)
                if cfg.method == "trust_region" and view.center is not None:
                    u_std, u_qua = view.plain.expansion_cost, view.iterate.expansion_cost
                    nonbinding = abs(u_qua - u_std) <= 1e-6 * (1 + abs(u_std))
                    expect = rec.psi_before / 2 if (nonbinding and not view.serious) else rec.psi_before
                    if view.stabilization.psi != expect:
                        rec.psi_rule_breaks += 1
                    rec.psi_halvings += view.stabilization.psi < rec.psi_before
                rec.psi_before = view.stabilization.psi

            rec.psi_before = cfg.psi
            t0 = time.perf_counter()
            rec.result = run(self.instances[i], cfg, observer=observe)
            rec.seconds = time.perf_counter() - t0
            self.runs[key] = rec
        return self.runs[key]

    def sp(self, i, year, scenario):
        key = (i, year, scenario)
        if key not in self.programs:
            self.programs[key] = SubproblemProgram(self.instances[i], year, scenario)
        return self.programs[key]


@pytest.fixture(scope="session")
def lab():
    lab = Lab()
    for case in SUITE:
        inst = generate_synthetic(case["seed"], case["n_scenarios"], case["n_techs"], 1, 168, 2)
        lab.instances.append(inst)
        lab.closed.append(solve_closed(inst).objective)
    return lab


def method_runs(lab, method):
    return [lab.run(i, method, method=method) for i in range(len(SUITE))]


def test_criterion_01_oracle_equivalence(lab):
    worst_gap, worst_err, failures = 0.0, 0.0, []
    for method in METHODS:
        for i, rec in enumerate(method_runs(lab, method)):
            res = rec.result
            err = abs(res.objective - lab.closed[i]) / abs(lab.closed[i])
            worst_gap, worst_err = max(worst_gap, res.gap), max(worst_err, err)
            if not (res.converged and res.gap <= EPS and err <= EPS):
                failures.append((SUITE[i]["seed"], method))
    report(1, not failures,
           f"{len(SUITE)} instances x {len(METHODS)} methods, worst gap {worst_gap:.4f}, "
           f"worst deviation from closed optimum {worst_err:.4f}, failures {failures}")


def test_criterion_02_analytic_instance():
    inst = flat_demand_instance()
    closed = solve_closed(inst)
    errs = {"closed": (abs(closed.objective - 1240) / 1240, abs(closed.capacities[0, 0] - 10) / 10)}
    for method in METHODS:
        res = run(inst, RunConfig(method=method, epsilon=1e-6))
        errs[method] = (abs(res.objective - 1240) / 1240, abs(res.point.values[0, 0] - 10) / 10)
    worst = max(max(v) for v in errs.values())
    report(2, worst <= 1e-6, f"worst relative error {worst:.2e} over {sorted(errs)}")


def test_criterion_03_cut_validity(lab):
    rng = np.random.default_rng(0)
    violations, checked, runs = 0, 0, 0
    for method in METHODS:
        for i, rec in enumerate(method_runs(lab, method)):
            cuts = rec.result.cuts
            top = np.max([c.anchor for c in cuts], axis=0)
            for j in rng.integers(0, len(cuts), 100):
                cut = cuts[j]
                point = rng.uniform(0.0, 1.5 * top + 1.0)
                prog = lab.sp(i, cut.year, cut.scenario)
                prog.set_point(point)
                true = solve_subproblem(prog, 1e-8)
                slack = (cut.achieved_tolerance * max(1.0, abs(cut.value))
                         + true.achieved_tolerance * max(1.0, abs(true.value)) + 1e-6)
                violations += cut.evaluate(point) > true.value + slack
                checked += 1
            runs += 1
    report(3, violations == 0, f"{checked} (cut, point) pairs over {runs} runs, {violations} violations")


def test_criterion_04_stabilization_effect(lab):
    med = {m: float(np.median([r.result.iterations for r in method_runs(lab, m)])) for m in METHODS}
    trust, level = med["trust_region"] / med["none"], med["level"] / med["none"]
    report(4, trust <= 0.5 and level <= 0.7,
           f"median iterations {med}; trust/none {trust:.2f} (need <= 0.5), level/none {level:.2f} (need <= 0.7)")


def test_criterion_05_initialization_effect(lab):
    shares = {}
    for method in STABILIZED:
        wins = 0
        for i, rec in enumerate(method_runs(lab, method)):
            cap = rec.result.iterations
            cold = lab.run(i, method + "-cold", method=method, initialize=False, max_iterations=cap)
            # not converged within the warm run's iteration count means strictly more iterations
            wins += not cold.result.converged
        shares[method] = wins / len(SUITE)
    report(5, all(s >= 0.7 for s in shares.values()),
           f"share of instances where initialization needs strictly fewer iterations: {shares}")


def test_criterion_06_inexact_cut_safety(lab):
    log_runs = method_runs(lab, "trust_region")
    exact_runs = [lab.run(i, "trust_region-exact", method="trust_region", schedule="none") for i in range(len(SUITE))]
    diff = max(abs(a.result.objective - b.result.objective) / abs(b.result.objective)
               for a, b in zip(log_runs, exact_runs))
    t_log = float(np.median([r.result.sp_solve_time for r in log_runs]))
    t_exact = float(np.median([r.result.sp_solve_time for r in exact_runs]))
    report(6, diff <= EPS and t_log <= t_exact,
           f"max objective difference {diff:.4f} (need <= {EPS}); median SP solve time "
           f"log {t_log:.2f} s vs none {t_exact:.2f} s (need log <= none)")


def test_criterion_07_bookkeeping(lab):
    problems = []
    for method in METHODS:
        for i, rec in enumerate(method_runs(lab, method)):
            inst, tr = lab.instances[i], rec.result.trace
            per_iter = len(inst.years) * len(inst.scenarios)
            lb, ub = tr.column("lb"), tr.column("ub")
            if np.any(tr.column("cuts_added") != per_iter):
                problems.append((SUITE[i]["seed"], method, "cuts added"))
            if rec.stale_cuts or rec.views != len(tr):
                problems.append((SUITE[i]["seed"], method, "aging"))
            if np.any(np.diff(ub) > 0) or np.any(np.diff(lb) < 0):
                problems.append((SUITE[i]["seed"], method, "monotonicity"))
            if np.any(lb > ub + 1e-7 * np.abs(ub)):
                problems.append((SUITE[i]["seed"], method, "lb above ub"))
    report(7, not problems, f"{len(METHODS) * len(SUITE)} traces checked, problems {problems}")


def test_criterion_08_level_fallback():
    inst = flat_demand_instance()
    master = build_master(inst)
    prog = SubproblemProgram(inst, 2030, "s0")
    for k, cap in enumerate((0.0, 6.0, 10.0, 15.0), start=1):
        prog.set_point(np.array([cap]))
        add_cuts(master, [make_cut(solve_subproblem(prog), np.array([cap]), k)], k)
    model_min = solve_master(master).objective
    state = StabilizationState(method="level", beta=0.25, center=np.array([[15.0]]),
                               center_objective=1.5 * model_min)
    first_level = 0.25 * state.center_objective  # stale lower value 0
    level, sol = update_level(state, master, 0.0)
    feasible = sol.objective <= level * (1 + 1e-7)
    report(8, first_level < model_min and 1 <= state.level_rebuilds <= 10 and feasible,
           f"initial level {first_level:.1f} below model minimum {model_min:.1f}; feasible at "
           f"{level:.1f} after {state.level_rebuilds} rebuilds")


def test_criterion_09_proximal_t_strategy():
    s = StabilizationState(method="proximal", mu_start=0.1, mu_max=5.0)
    seq = []
    for _ in range(7):
        step(s, False, 0.0, 0.0)
        seq.append(s.mu)
    null_ok = np.allclose(seq, [0.2, 0.4, 0.8, 1.6, 3.2, 5.0, 0.1])
    s = StabilizationState(method="proximal", mu_start=1.0, mu_max=5.0)
    step(s, False, 0.0, 0.0)
    doubled = s.mu == 2.0
    step(s, True, 0.0, 0.0, np.ones((1, 1)), 1.0)
    halved = s.mu == 1.0
    s = StabilizationState(method="proximal", mu_start=4.0, mu_max=5.0)
    step(s, False, 0.0, 0.0)
    capped = s.mu == 5.0 and s.consecutive_at_cap == 1
    step(s, False, 0.0, 0.0)
    reset = s.mu == 4.0 and s.consecutive_at_cap == 0
    report(9, null_ok and doubled and halved and capped and reset,
           f"null sequence {seq}; doubling {doubled}, halving {halved}, cap {capped}, reset {reset}")


def test_criterion_10_trust_region_t_strategy(lab):
    s = StabilizationState(method="trust_region", psi=0.01, center=np.ones((1, 1)))
    step(s, False, 50.0, 50.0)
    unit = s.psi == 0.005
    step(s, False, 50.0, 60.0)
    step(s, True, 50.0, 50.0, np.ones((1, 1)), 1.0)
    unit = unit and s.psi == 0.005
    recs = method_runs(lab, "trust_region")
    breaks = sum(r.psi_rule_breaks for r in recs)
    excess = max(r.ball_excess for r in recs)
    halvings = sum(r.psi_halvings for r in recs)
    report(10, unit and breaks == 0 and excess <= 1e-6,
           f"unit rule {unit}; over {len(recs)} runs {halvings} halvings, {breaks} rule breaks, "
           f"worst excess over radius {excess:.2e}")


def brute_force_medoids(d, m):
    return min(sum(min(d[s][c] for c in combo) for s in range(len(d)))
               for combo in itertools.combinations(range(len(d)), m))


def test_criterion_11_scenario_reduction(lab):
    props = []
    for i in (2, 5):  # the 4-scenario instances of the suite
        z = compute_z_matrix(lab.instances[i])
        dm = distance(z)
        diag = np.diag(z)
        props.append(bool(np.array_equal(dm.d, dm.d.T) and np.all(np.diag(dm.d) == 0) and np.all(dm.d >= 0)
                          and np.all(z >= diag[:, None] - 1e-6 * np.abs(diag)[:, None])))
        props.append(abs(sum(kmedoid(dm, 2).weights.values()) - 1) < 1e-12)
    mismatches, cases = 0, 0
    rng = np.random.default_rng(11)
    for n in range(1, 9):
        for m in range(1, min(3, n) + 1):
            for _ in range(5):
                pts = rng.normal(size=(n, 2))
                d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
                red = kmedoid(d, m)
                mismatches += abs(red.objective - brute_force_medoids(d, m)) > 1e-9
                mismatches += abs(sum(red.weights.values()) - 1) > 1e-12
                cases += 1
    report(11, all(props) and mismatches == 0,
           f"distance/Z properties on 2 suite instances {props}; {cases} seeded matrices, {mismatches} mismatches")


def test_criterion_12_valid_inequalities(lab):
    base = method_runs(lab, "none")
    vi = [lab.run(i, "none-vi", method="none", use_valid_inequalities=True) for i in range(len(SUITE))]
    diff = max(abs(a.result.objective - b.result.objective) / abs(b.result.objective) for a, b in zip(vi, base))
    tighter = [a.result.first_lower_bound >= b.result.first_lower_bound - 1e-7 * abs(b.result.first_lower_bound)
               for a, b in zip(vi, base)]
    report(12, diff <= EPS and all(tighter),
           f"max objective change {diff:.4f} (need <= {EPS}); first bound tighter or equal on "
           f"{sum(tighter)}/{len(tighter)} instances")
