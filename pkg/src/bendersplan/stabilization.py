"""Proximal, level and quadratic trust-region stabilisation of the master problem.

The stability center lives in expansion space. A serious step happens on any
improvement of the best known upper bound; everything else is a null step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detequiv import solve_closed
from .formulation import invest_cost_matrix
from .instance import ProblemInstance
from .master import MasterSolution, MasterState, master_program, solution_from
from .solver import LE, SolverError, Status, solve_with_fallback
from .subproblem import CapacityPoint, SubproblemResult, build_subproblem, solve_subproblem

METHODS = ("none", "proximal", "level", "trust_region")
NONBINDING_TOL = 1e-6
MAX_LEVEL_REBUILDS = 50
# the ball handed to the solver is this much (relative) smaller than the trust
# region; binding iterates overshoot the cone by up to ~1e-6 of the radius
BALL_BACKOFF = 1e-5


@dataclass
class StabilizationState:
    method: str = "none"
    center: np.ndarray | None = None  # expansion, (n_years, n_items)
    center_objective: float = np.inf
    mu: float = 0.1
    mu_start: float = 0.1
    mu_max: float = 5.0
    beta: float = 0.25
    level: float = np.nan
    psi: float = 0.01
    consecutive_at_cap: int = 0
    level_rebuilds: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown stabilization method {self.method!r}")
        if not 0 < self.mu_start <= self.mu_max:
            raise ValueError("need 0 < mu_start <= mu_max")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.psi > 0:
            raise ValueError("psi must be positive")
        self.mu = self.mu_start

    @property
    def mu_min(self) -> float:
        return self.mu_start / 16.0

    @property
    def radius(self) -> float:
        """Absolute trust-region radius; 1 MW when the center is all zero."""
        norm1 = float(np.sum(np.abs(self.center))) if self.center is not None else 0.0
        return self.psi * norm1 if norm1 > 0 else 1.0

    def telemetry(self) -> dict:
        return {
            "mu": self.mu if self.method == "proximal" else None,
            "level": self.level if self.method == "level" else None,
            "psi": self.psi if self.method == "trust_region" else None,
        }


def initialize_center(instance: ProblemInstance, rel_tolerance: float = 1e-8, sp_tolerance: float = 1e-8):
    """Heuristic start from the closed problem of the most probable scenario.

    Ties go to the smallest scenario id. Returns the capacity point, the
    subproblem results at that point in (year, scenario) order, and the
    resulting upper bound.
    """
    pmax = max(s.probability for s in instance.scenarios)
    chosen = min(s.id for s in instance.scenarios if s.probability == pmax)
    sol = solve_closed(instance, rel_tolerance, scenario_subset=[chosen])
    point = CapacityPoint(list(instance.years), sol.items, sol.capacities, sol.expansion).rounded()
    results = []
    for y in instance.years:
        for s in instance.scenarios:
            results.append(solve_subproblem(build_subproblem(instance, y, s.id, point), sp_tolerance))
    return point, results, upper_bound(instance, point, results)


def upper_bound(instance: ProblemInstance, point: CapacityPoint, results: list[SubproblemResult]) -> float:
    u = float(np.sum(invest_cost_matrix(instance) * point.expansion))
    p = {s.id: s.probability for s in instance.scenarios}
    return u + sum(p[r.scenario] * r.value for r in results)


def stabilized_master(state: StabilizationState, master: MasterState):
    """Master program with the active stabilisation term attached.

    Returns the :class:`~bendersplan.master.MasterProgram`; for the level
    method ``state.level`` must already be set.
    """
    mp = master_program(master)
    if state.method == "none" or state.center is None:
        return mp
    prog = mp.program
    idx = mp.expansion.exp.ravel()
    center = state.center.ravel()
    if state.method == "proximal":
        prog.add_squared_distance(idx, center, state.mu)
    elif state.method == "level":
        # min ||Exp - center||^2  s.t.  U + sum p alpha <= level
        cost = prog.cost
        cols = np.flatnonzero(cost)
        prog.add_row(cols, cost[cols], LE, state.level)
        prog.add_cost(cols, -cost[cols])
        prog.add_squared_distance(idx, center, 1.0)
    elif state.method == "trust_region":
        prog.set_ball(idx, center, state.radius * (1.0 - BALL_BACKOFF))
    return mp


def solve_stabilized(state: StabilizationState, master: MasterState, rel_tolerance: float = 1e-8):
    mp = stabilized_master(state, master)
    out = solve_with_fallback(mp.program, rel_tolerance)
    if not out.ok:
        raise SolverError(out.status, f"stabilized master ({state.method}): {out.status.value}")
    return solution_from(master, mp, out)


def update_level(state: StabilizationState, master: MasterState, lower: float,
                 rel_tolerance: float = 1e-8, fallback: MasterSolution | None = None) -> tuple[float, MasterSolution]:
    """Set the level from the center objective and the plain-master objective ``lower``.

    While the level program is infeasible the lower term is replaced by the
    current level. Any level at or above ``lower`` is feasible in exact
    arithmetic (the plain-master optimum satisfies it), so infeasibility here
    is numerical; when the rebuilds run out, ``fallback`` (the plain-master
    solution) is returned if given.
    """
    upper = state.center_objective
    low = lower
    state.level_rebuilds = 0
    for _ in range(MAX_LEVEL_REBUILDS):
        state.level = state.beta * upper + (1.0 - state.beta) * low
        mp = stabilized_master(state, master)
        out = solve_with_fallback(mp.program, rel_tolerance, feasible=False)
        if out.ok:
            return state.level, solution_from(master, mp, out)
        if out.status is not Status.INFEASIBLE:
            raise SolverError(out.status, f"level program: {out.status.value}")
        state.level_rebuilds += 1
        low = state.level
    if fallback is not None:
        return state.level, fallback
    raise SolverError(Status.INFEASIBLE, "level program stayed infeasible")


def step(state: StabilizationState, improved: bool, qmp_expansion_cost: float, mp_expansion_cost: float,
         new_best: np.ndarray | None = None, new_best_objective: float | None = None) -> None:
    """Serious/null step bookkeeping and t-strategy update after one iteration."""
    if improved:
        if new_best is not None:
            state.center = np.array(new_best, dtype=float)
        if new_best_objective is not None:
            state.center_objective = float(new_best_objective)
        if state.method == "proximal":
            state.mu = max(state.mu / 2.0, state.mu_min)
            state.consecutive_at_cap = 1 if state.mu >= state.mu_max else 0
        return
    if state.method == "proximal":
        state.mu = min(2.0 * state.mu, state.mu_max)
        if state.mu >= state.mu_max:
            state.consecutive_at_cap += 1
        else:
            state.consecutive_at_cap = 0
        if state.consecutive_at_cap >= 2:
            state.mu = state.mu_start
            state.consecutive_at_cap = 0
    elif state.method == "trust_region":
        if abs(qmp_expansion_cost - mp_expansion_cost) <= NONBINDING_TOL * (1.0 + abs(mp_expansion_cost)):
            state.psi /= 2.0
