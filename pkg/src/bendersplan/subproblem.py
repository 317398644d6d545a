"""Operational subproblems with fixed capacities and the optimality cuts built from them.

Sign convention: ``SubproblemResult.duals`` are shadow prices of the
capacity-fixing rows, i.e. the derivative of the operational cost with
respect to each fixed capacity. More capacity never raises operating cost,
so they are <= 0, and a cut reads

    alpha >= value + gradient . (capa - anchor)

exactly as stored.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .formulation import OperationBlock, add_operation
from .instance import ProblemInstance
from .solver import EQ, ConvexProgram, SolverError, Status, solve_with_fallback

ROUND_THRESHOLD = 1e-6
DUAL_ROUND_THRESHOLD = 1e-6


@dataclass
class CapacityPoint:
    years: list[int]
    items: list[tuple[str, str]]
    values: np.ndarray  # (n_years, n_items)
    expansion: np.ndarray  # (n_years, n_items)

    def rounded(self, threshold: float = ROUND_THRESHOLD) -> "CapacityPoint":
        vals = np.where(np.abs(self.values) < threshold, 0.0, np.maximum(self.values, 0.0))
        exp = np.where(np.abs(self.expansion) < threshold, 0.0, np.maximum(self.expansion, 0.0))
        return CapacityPoint(self.years, self.items, vals, exp)

    def year_slice(self, year: int) -> np.ndarray:
        return self.values[self.years.index(year)]


@dataclass
class SubproblemResult:
    year: int
    scenario: str
    value: float
    duals: np.ndarray
    achieved_tolerance: float
    requested_tolerance: float
    solve_time: float = 0.0
    iterations: int = 0


@dataclass
class Cut:
    iteration_created: int
    year: int
    scenario: str
    anchor: np.ndarray
    value: float
    gradient: np.ndarray
    last_active: int
    achieved_tolerance: float = 0.0  # of the solve it came from; the cut may overshoot by this share of |value|

    def evaluate(self, capa_year: np.ndarray) -> float:
        return float(self.value + self.gradient @ (np.asarray(capa_year) - self.anchor))

    @property
    def intercept(self) -> float:
        """Constant term of the cut written as ``alpha - gradient.capa >= intercept``."""
        return float(self.value - self.gradient @ self.anchor)


class SubproblemProgram:
    """One (year, scenario) operational LP; the fixed capacities are mutable right-hand sides."""

    def __init__(self, instance: ProblemInstance, year: int, scenario_id: str):
        self.year = year
        self.scenario = scenario_id
        scen = next(s for s in instance.scenarios if s.id == scenario_id)
        items = instance.capacity_items()
        prog = ConvexProgram()
        # free columns: a bound here would absorb part of the fixing-row dual
        self.capa = prog.add_variables(len(items), lb=-np.inf)
        self.fix_rows = prog.add_rows(np.arange(len(items)), self.capa, np.ones(len(items)), EQ,
                                      np.zeros(len(items)))
        self.operation: OperationBlock = add_operation(prog, instance, year, scen, self.capa, 1.0)
        self.program = prog

    def set_point(self, capa_year: np.ndarray) -> None:
        self.program.set_rhs(self.fix_rows, np.asarray(capa_year, dtype=float))


def build_subproblem(instance: ProblemInstance, year: int, scenario, point: CapacityPoint) -> SubproblemProgram:
    sid = scenario if isinstance(scenario, str) else scenario.id
    if point.values.shape[1] != len(instance.capacity_items()) or year not in point.years:
        raise ValueError(f"capacity point does not cover every capacity of year {year}")
    sp = SubproblemProgram(instance, year, sid)
    sp.set_point(point.year_slice(year))
    return sp


def solve_subproblem(sp: SubproblemProgram, rel_tolerance: float = 1e-8) -> SubproblemResult:
    """Solve at ``rel_tolerance``.

    Numerical failures go through the solver fallback settings first and are
    then retried once at a 10x looser tolerance.
    """
    out = solve_with_fallback(sp.program, rel_tolerance)
    used = rel_tolerance
    if out.status in (Status.NUMERICAL_FAILURE, Status.UNBOUNDED):
        used = min(10.0 * rel_tolerance, 1e-1)
        out = solve_with_fallback(sp.program, used)
    if not out.ok:
        raise SolverError(out.status, f"subproblem ({sp.year}, {sp.scenario}): {out.status.value}")
    return SubproblemResult(
        year=sp.year,
        scenario=sp.scenario,
        value=out.objective,
        duals=out.duals[sp.fix_rows].copy(),
        achieved_tolerance=max(out.achieved_tolerance, 0.0),
        requested_tolerance=used,
        solve_time=out.solve_time,
        iterations=out.iterations,
    )


def make_cut(result: SubproblemResult, anchor: np.ndarray, k: int,
             dual_threshold: float = DUAL_ROUND_THRESHOLD) -> Cut:
    """Optimality cut anchored at the year's capacities ``anchor``."""
    grad = np.where(np.abs(result.duals) < dual_threshold, 0.0, result.duals)
    return Cut(
        iteration_created=k,
        year=result.year,
        scenario=result.scenario,
        anchor=np.asarray(anchor, dtype=float).copy(),
        value=float(result.value),
        gradient=grad,
        last_active=k,
        achieved_tolerance=result.achieved_tolerance,
    )
