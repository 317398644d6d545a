"""Closed (deterministic-equivalent) formulation: builder, solver and LP oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .formulation import ExpansionBlock, OperationBlock, add_expansion, add_operation
from .instance import ProblemInstance, validate
from .solver import ConvexProgram, SolverError, solve

ORACLE_MAX_VARIABLES = 5000


@dataclass
class ClosedProgram:
    program: ConvexProgram
    instance: ProblemInstance
    expansion: ExpansionBlock
    operations: dict[tuple[int, str], OperationBlock] = field(default_factory=dict)


@dataclass
class ClosedSolution:
    items: list[tuple[str, str]]
    years: list[int]
    expansion: np.ndarray  # (n_years, n_items)
    capacities: np.ndarray  # (n_years, n_items)
    objective: float
    expansion_cost: float
    operational_cost: dict[tuple[int, str], float]
    loss_of_load_total: float
    achieved_tolerance: float = 0.0

    def expansion_map(self) -> dict:
        return {(y, *it): float(self.expansion[j, k])
                for j, y in enumerate(self.years) for k, it in enumerate(self.items)}

    def capacity_map(self) -> dict:
        return {(y, *it): float(self.capacities[j, k])
                for j, y in enumerate(self.years) for k, it in enumerate(self.items)}


def build_closed(instance: ProblemInstance, scenario_subset=None) -> ClosedProgram:
    """Assemble the closed problem, optionally over a renormalised scenario subset."""
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    if scenario_subset is not None:
        instance = instance.subset(scenario_subset)
    prog = ConvexProgram()
    exp = add_expansion(prog, instance)
    ops = {}
    for j, y in enumerate(instance.years):
        for scen in instance.scenarios:
            ops[(y, scen.id)] = add_operation(prog, instance, y, scen, exp.capa[j], scen.probability)
    return ClosedProgram(prog, instance, exp, ops)


def solution_from_x(closed: ClosedProgram, x: np.ndarray, objective: float, tol: float = 0.0) -> ClosedSolution:
    exp = closed.expansion
    ops = {key: float(x[blk.v]) for key, blk in closed.operations.items()}
    return ClosedSolution(
        items=exp.items,
        years=list(closed.instance.years),
        expansion=x[exp.exp].copy(),
        capacities=x[exp.capa].copy(),
        objective=objective,
        expansion_cost=float(x[exp.u]),
        operational_cost=ops,
        loss_of_load_total=float(sum(x[blk.lss].sum() for blk in closed.operations.values())),
        achieved_tolerance=tol,
    )


def solve_closed(instance: ProblemInstance, rel_tolerance: float = 1e-8, scenario_subset=None) -> ClosedSolution:
    closed = build_closed(instance, scenario_subset)
    out = solve(closed.program, rel_tolerance)
    if not out.ok:
        raise SolverError(out.status, f"closed problem: {out.status.value}")
    return solution_from_x(closed, out.x, out.objective, out.achieved_tolerance)


def program_to_standard(prog: ConvexProgram):
    """Dense (c, A, b, senses, shift) over shifted nonnegative variables.

    Lower bounds are shifted to zero and finite upper bounds become rows.
    Free variables are not supported.
    """
    lb, ub = prog.lb, prog.ub
    if np.any(~np.isfinite(lb)):
        raise ValueError("oracle requires finite lower bounds")
    A = prog.matrix().toarray()
    b = prog.rhs - A @ lb
    senses = prog.sense.copy()
    fin = np.flatnonzero(np.isfinite(ub))
    if fin.size:
        B = np.zeros((fin.size, prog.n))
        B[np.arange(fin.size), fin] = 1.0
        A = np.vstack([A, B])
        b = np.concatenate([b, ub[fin] - lb[fin]])
        senses = np.concatenate([senses, -np.ones(fin.size, dtype=senses.dtype)])
    return prog.cost, A, b, senses, lb


def brute_force_oracle(instance: ProblemInstance, use_numba=None) -> float:
    """Optimal closed objective from a dense two-phase simplex on the closed matrix.

    Used as an independent check of the interior-point path; refuses
    instances with more than ``ORACLE_MAX_VARIABLES`` columns.
    """
    closed = build_closed(instance)
    prog = closed.program
    if prog.n > ORACLE_MAX_VARIABLES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_VARIABLES} variables, instance has {prog.n}")
    c, A, b, senses, shift = program_to_standard(prog)
    status, x, obj = _kernels.dense_simplex(c, A, b, senses, use_numba=use_numba)
    if status != "optimal":
        raise RuntimeError(f"oracle simplex ended with status {status}")
    return float(obj + c @ shift + prog.constant)
