"""Iteration loop for plain and stabilised multi-cut Benders, plus the closed-vs-decomposed benchmark."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detequiv import build_closed, solution_from_x
from .formulation import invest_cost_matrix
from .instance import ProblemInstance, validate
from .master import MasterSolution, MasterState, add_cuts, build_master, maintain_cuts, solve_master
from .solver import SolverError, solve
from .stabilization import (
    StabilizationState,
    initialize_center,
    solve_stabilized,
    step,
    update_level,
)
from .subproblem import CapacityPoint, SubproblemProgram, SubproblemResult, make_cut, solve_subproblem

log = logging.getLogger(__name__)

SCHEDULES = ("none", "exponential", "linear", "logarithmic")
TRACE_COLUMNS = ["iter", "t_total_s", "t_master_s", "t_sps_s", "lb", "ub", "gap", "sp_tol",
                 "cuts_added", "cuts_deleted", "cuts_total", "serious", "mu", "level", "psi"]
BENCHMARK_COLUMNS = ["solver", "n_scenarios", "build_s", "solve_s", "objective", "iterations", "rel_diff"]


@dataclass
class RunConfig:
    method: str = "trust_region"
    epsilon: float = 0.01
    eta: int = 20
    schedule: str = "logarithmic"
    tol_max: float = 1e-2
    tol_min: float = 1e-8
    max_iterations: int = 300
    use_valid_inequalities: bool = False
    initialize: bool | None = None  # None: on for stabilised methods, off for none
    mu_start: float = 0.1
    mu_max: float = 5.0
    beta: float = 0.25
    psi: float = 0.01
    workers: int = 1
    seed: int = 0
    master_tolerance: float = 1e-8

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.tol_min < self.tol_max:
            raise ValueError("need 0 < tol_min < tol_max")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.max_iterations < 1 or self.eta < 0 or self.workers < 1:
            raise ValueError("max_iterations and workers must be >= 1, eta >= 0")
        if self.initialize is None:
            self.initialize = self.method != "none"
        elif self.initialize and self.method == "none":
            raise ValueError("initialization needs a stabilization method")
        # range checks for the stabilisation parameters live in StabilizationState
        self.stabilization()

    def stabilization(self) -> StabilizationState:
        return StabilizationState(method=self.method, mu_start=self.mu_start, mu_max=self.mu_max,
                                  beta=self.beta, psi=self.psi)


@dataclass
class TraceRow:
    iter: int
    t_total_s: float
    t_master_s: float
    t_sps_s: float
    lb: float
    ub: float
    gap: float
    sp_tol: float
    cuts_added: int
    cuts_deleted: int
    cuts_total: int
    serious: bool
    mu: float | None = None
    level: float | None = None
    psi: float | None = None
    sp_solve_time: float = 0.0  # summed solver time over all subproblems


@dataclass
class ConvergenceTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                vals = []
                for c in TRACE_COLUMNS:
                    v = getattr(r, c)
                    if v is None:
                        vals.append("")
                    elif isinstance(v, bool):
                        vals.append(int(v))
                    else:
                        vals.append(v)
                w.writerow(vals)


@dataclass
class IterationView:
    """What an observer of :func:`run` sees after iteration ``k``."""

    k: int
    master: MasterState
    iterate: MasterSolution
    plain: MasterSolution
    center: np.ndarray | None  # stability center the iterate was computed against
    radius: float | None  # trust-region radius used, trust_region only
    serious: bool
    stabilization: StabilizationState  # state after this iteration's update


@dataclass
class RunResult:
    objective: float
    lower_bound: float
    gap: float
    converged: bool
    iterations: int
    point: CapacityPoint
    sp_values: dict[tuple[int, str], float]
    trace: ConvergenceTrace
    initialization_time: float = 0.0
    total_time: float = 0.0
    sp_solve_time: float = 0.0
    first_lower_bound: float = float("nan")
    certified: bool = False
    cuts: list = field(default_factory=list, repr=False)  # every cut generated, deleted ones included

    def to_json(self) -> dict:
        years, items = self.point.years, self.point.items
        def flat(arr):
            return [{"year": y, "technology": it[0], "part": it[1], "value": float(arr[j, k])}
                    for j, y in enumerate(years) for k, it in enumerate(items)]
        return {
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "expansion": flat(self.point.expansion),
            "capacities": flat(self.point.values),
            "converged": self.converged,
            "iterations": self.iterations,
        }


def sp_tolerance(schedule: str, gap: float, epsilon: float, tol_max: float = 1e-2, tol_min: float = 1e-8) -> float:
    """Subproblem tolerance as a function of the current optimality gap.

    The gap is mapped to u in [0, 1] (u = 0 at ``epsilon``, u = 1 at a 100 %
    gap) and interpolated between ``tol_min`` and ``tol_max``.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}")
    if schedule == "none":
        return tol_min
    if not np.isfinite(gap):
        u = 1.0
    else:
        u = min(max((gap - epsilon) / (1.0 - epsilon), 0.0), 1.0)
    if schedule == "exponential":
        lo, hi = math.log10(tol_min), math.log10(tol_max)
        return 10.0 ** (lo + u * (hi - lo))
    if schedule == "linear":
        return tol_min + u * (tol_max - tol_min)
    return tol_min + (tol_max - tol_min) * math.log1p((math.e - 1.0) * u)


class _SubproblemPool:
    """Cached subproblem programs solved serially or on a thread pool."""

    def __init__(self, instance: ProblemInstance, workers: int):
        self.instance = instance
        self.keys = [(y, s.id) for y in instance.years for s in instance.scenarios]
        self.programs = {k: SubproblemProgram(instance, *k) for k in self.keys}
        self.executor = ThreadPoolExecutor(workers) if workers > 1 else None

    def solve_all(self, point: CapacityPoint, tol: float) -> list[SubproblemResult]:
        def one(key):
            y, _ = key
            prog = self.programs[key]
            prog.set_point(point.year_slice(y))
            return solve_subproblem(prog, tol)
        if self.executor is None:
            return [one(k) for k in self.keys]
        # results come back in key order regardless of completion order
        return list(self.executor.map(one, self.keys))

    def close(self):
        if self.executor is not None:
            self.executor.shutdown()


def _point_value(instance, point, results, with_slack: bool = False) -> float:
    """Expected cost at ``point``; ``with_slack`` pads each value by its achieved tolerance.

    The padded value stays an upper bound on the true cost when subproblems
    were solved inexactly.
    """
    u = float(np.sum(invest_cost_matrix(instance) * point.expansion))
    p = {s.id: s.probability for s in instance.scenarios}
    if with_slack:
        return u + sum(p[r.scenario] * (r.value + r.achieved_tolerance * max(1.0, abs(r.value))) for r in results)
    return u + sum(p[r.scenario] * r.value for r in results)


def run(instance: ProblemInstance, config: RunConfig | None = None, observer=None) -> RunResult:
    """Solve ``instance`` by multi-cut Benders with the configured stabilisation.

    ``observer``, if given, is called with an :class:`IterationView` after
    each iteration's cut maintenance. It must not modify what it is shown.
    """
    config = config or RunConfig()
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    t_start = time.perf_counter()
    master = build_master(instance, eta=config.eta, valid_inequalities=config.use_valid_inequalities)
    stab = config.stabilization()
    stabilized = stab.method != "none"
    pool = _SubproblemPool(instance, config.workers)
    probs = {s.id: s.probability for s in instance.scenarios}
    trace = ConvergenceTrace()

    ub = np.inf
    lb = -np.inf
    gap = np.inf
    incumbent: CapacityPoint | None = None
    incumbent_results: list[SubproblemResult] = []
    sp_time_total = 0.0
    init_time = 0.0
    first_lb = float("nan")
    all_cuts = []

    try:
        if config.initialize:
            t0 = time.perf_counter()
            tol = sp_tolerance(config.schedule, np.inf, config.epsilon, config.tol_max, config.tol_min)
            point0, results0, _ = initialize_center(instance, config.master_tolerance, tol)
            ub0 = _point_value(instance, point0, results0, with_slack=True)
            cuts0 = [make_cut(r, point0.year_slice(r.year), 0) for r in results0]
            add_cuts(master, cuts0, 0)
            all_cuts.extend(cuts0)
            ub = ub0
            incumbent, incumbent_results = point0, results0
            stab.center = point0.expansion.copy()
            stab.center_objective = ub0
            sp_time_total += sum(r.solve_time for r in results0)
            init_time = time.perf_counter() - t0

        converged = False
        certified = False
        final_value = None
        k = 0
        for k in range(1, config.max_iterations + 1):
            t_iter = time.perf_counter()
            tol = sp_tolerance(config.schedule, gap, config.epsilon, config.tol_max, config.tol_min)
            n_before = len(master.cuts)

            t0 = time.perf_counter()
            center_used = None if stab.center is None else stab.center.copy()
            radius_used = stab.radius if stab.method == "trust_region" and center_used is not None else None
            plain = solve_master(master, config.master_tolerance)
            if stabilized and stab.center is not None:
                if stab.method == "level":
                    _, iterate = update_level(stab, master, plain.objective, config.master_tolerance, plain)
                else:
                    iterate = solve_stabilized(stab, master, config.master_tolerance)
            else:
                iterate = plain
            t_master = time.perf_counter() - t0
            lb_k = plain.objective
            if k == 1:
                first_lb = lb_k

            t0 = time.perf_counter()
            results = pool.solve_all(iterate.point, tol)
            t_sps = time.perf_counter() - t0
            sp_time = sum(r.solve_time for r in results)
            sp_time_total += sp_time

            cuts = [make_cut(r, iterate.point.year_slice(r.year), k) for r in results]
            binding = iterate.binding
            add_cuts(master, cuts, k)
            all_cuts.extend(cuts)
            deleted = maintain_cuts(master, k, binding[:n_before])

            value = _point_value(instance, iterate.point, results, with_slack=True)
            improved = value < ub
            if improved:
                ub = value
                incumbent, incumbent_results = iterate.point, results
            lb = max(lb, lb_k)
            step(stab, improved, iterate.expansion_cost, plain.expansion_cost,
                 iterate.point.expansion if improved else None, value if improved else None)
            gap = _gap(lb, ub)

            if gap <= config.epsilon:
                value, bound, certified = _certify(pool, instance, incumbent, incumbent_results, lb, config)
                ub = min(ub, bound)
                gap = _gap(lb, ub)
                if certified:
                    converged = True
                    final_value = value

            tel = stab.telemetry()
            trace.rows.append(TraceRow(
                iter=k, t_total_s=time.perf_counter() - t_iter, t_master_s=t_master, t_sps_s=t_sps,
                lb=lb, ub=ub, gap=gap, sp_tol=tol, cuts_added=len(cuts), cuts_deleted=deleted,
                cuts_total=len(master.cuts), serious=improved, mu=tel["mu"], level=tel["level"],
                psi=tel["psi"], sp_solve_time=sp_time,
            ))
            log.debug("iter %d lb %.6g ub %.6g gap %.3g", k, lb, ub, gap)
            if observer is not None:
                observer(IterationView(k, master, iterate, plain, center_used, radius_used, improved, stab))
            if converged:
                break
    finally:
        pool.close()

    values = {(r.year, r.scenario): r.value for r in incumbent_results}
    objective = final_value if final_value is not None else ub
    return RunResult(
        objective=float(objective),
        lower_bound=float(lb),
        gap=float(_gap(lb, objective)),
        converged=converged,
        iterations=k,
        point=incumbent,
        sp_values=values,
        trace=trace,
        initialization_time=init_time,
        total_time=time.perf_counter() - t_start,
        sp_solve_time=sp_time_total,
        first_lower_bound=first_lb,
        certified=certified,
        cuts=all_cuts,
    )


def _gap(lb: float, ub: float) -> float:
    if not np.isfinite(ub) or not np.isfinite(lb):
        return np.inf
    if ub == 0:
        return 0.0 if lb >= 0 else np.inf
    return 1.0 - lb / ub


def _certify(pool, instance, incumbent, results, lb, config):
    """Re-solve the incumbent's subproblems at ``tol_min`` before declaring convergence.

    ``results`` is replaced in place by the fresh solves. Returns the
    certified value, its slack-padded upper bound and whether the gap
    against ``lb`` is within ``epsilon``.
    """
    if not all(r.requested_tolerance <= config.tol_min for r in results):
        results[:] = pool.solve_all(incumbent, config.tol_min)
    value = _point_value(instance, incumbent, results)
    bound = _point_value(instance, incumbent, results, with_slack=True)
    return value, bound, _gap(lb, bound) <= config.epsilon


def benchmark(instance: ProblemInstance, config: RunConfig | None = None) -> list[dict]:
    """Closed problem vs. decomposition on the same instance."""
    config = config or RunConfig()
    t0 = time.perf_counter()
    closed = build_closed(instance)
    build_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    out = solve(closed.program, config.tol_min)
    solve_s = time.perf_counter() - t0
    if not out.ok:
        raise SolverError(out.status, "closed problem failed in benchmark")
    closed_obj = solution_from_x(closed, out.x, out.objective).objective

    t0 = time.perf_counter()
    res = run(instance, config)
    bd_s = time.perf_counter() - t0
    n = len(instance.scenarios)
    return [
        {"solver": "closed", "n_scenarios": n, "build_s": build_s, "solve_s": solve_s,
         "objective": closed_obj, "iterations": out.iterations, "rel_diff": 0.0},
        {"solver": f"benders-{config.method}", "n_scenarios": n, "build_s": 0.0, "solve_s": bd_s,
         "objective": res.objective, "iterations": res.iterations,
         "rel_diff": abs(res.objective - closed_obj) / max(1.0, abs(closed_obj))},
    ]


def write_benchmark_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCHMARK_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r)
