"""Master problem: expansion variables, per-(year, scenario) estimators and the multi-cut store."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .formulation import ExpansionBlock, add_expansion
from .instance import ProblemInstance
from .solver import GE, LE, ConvexProgram, SolveOutcome, SolverError, Status, solve_with_fallback
from .subproblem import CapacityPoint, Cut

ESTIMATOR_FLOOR = 0.0
BINDING_TOL = 1e-6


@dataclass
class MasterProgram:
    """A freshly assembled master program and where its pieces live."""
    program: ConvexProgram
    expansion: ExpansionBlock
    alpha: np.ndarray  # (n_years, n_scenarios)
    cut_rows: np.ndarray
    vi_rows: np.ndarray


@dataclass
class MasterSolution:
    point: CapacityPoint
    expansion_cost: float
    objective: float
    alpha: np.ndarray
    binding: np.ndarray  # one flag per stored cut, in store order
    outcome: SolveOutcome


@dataclass
class MasterState:
    instance: ProblemInstance
    eta: float = 20
    valid_inequalities: bool = False
    cuts: list[Cut] = field(default_factory=list)
    deleted: int = 0

    @property
    def n_estimators(self) -> int:
        return len(self.instance.years) * len(self.instance.scenarios)

    def cut_matrix(self, year_index: int, scen_index: int):
        """Gradients and intercepts of the stored cuts for one estimator."""
        y = self.instance.years[year_index]
        s = self.instance.scenarios[scen_index].id
        sel = [c for c in self.cuts if c.year == y and c.scenario == s]
        if not sel:
            return np.zeros((0, len(self.instance.capacity_items()))), np.zeros(0)
        return np.array([c.gradient for c in sel]), np.array([c.intercept for c in sel])


def build_master(instance: ProblemInstance, eta: float = 20, valid_inequalities: bool = False) -> MasterState:
    return MasterState(instance=instance, eta=eta, valid_inequalities=valid_inequalities)


def add_valid_inequalities(prog: ConvexProgram, instance: ProblemInstance, expansion: ExpansionBlock) -> np.ndarray:
    """Yearly energy-balance rows per (year, scenario) on auxiliary generation totals.

    sum_t demand <= sum_i gen_total[i] and gen_total[i] <= sum_t cf[i,t] * capa[i].
    """
    items = expansion.items
    rows = []
    for j, y in enumerate(instance.years):
        for scen in instance.scenarios:
            gens = prog.add_variables(len(instance.generation), lb=0.0)
            rows.append(prog.add_row(gens, np.ones(gens.size), GE, float(np.sum(scen.demand[y]))))
            for g, tech in zip(gens, instance.generation):
                k = items.index((tech.id, "power"))
                total_cf = float(np.sum(scen.capacity_factor[(y, tech.id)]))
                rows.append(prog.add_row([g, expansion.capa[j, k]], [1.0, -total_cf], LE, 0.0))
    return np.array(rows, dtype=np.int64)


def master_program(state: MasterState) -> MasterProgram:
    """Assemble min U + sum p_s alpha[y,s] with the stored cuts."""
    inst = state.instance
    prog = ConvexProgram()
    exp = add_expansion(prog, inst)
    p = inst.probabilities
    ny, ns = len(inst.years), len(inst.scenarios)
    alpha = prog.add_variables(ny * ns, lb=ESTIMATOR_FLOOR, cost=np.tile(p, ny)).reshape(ny, ns)
    vi_rows = add_valid_inequalities(prog, inst, exp) if state.valid_inequalities else np.zeros(0, dtype=np.int64)
    y_index = {y: j for j, y in enumerate(inst.years)}
    s_index = {s.id: i for i, s in enumerate(inst.scenarios)}
    cut_rows = []
    for cut in state.cuts:
        j, i = y_index[cut.year], s_index[cut.scenario]
        nz = np.flatnonzero(cut.gradient)
        cols = np.concatenate([[alpha[j, i]], exp.capa[j, nz]])
        vals = np.concatenate([[1.0], -cut.gradient[nz]])
        cut_rows.append(prog.add_row(cols, vals, GE, cut.intercept))
    return MasterProgram(prog, exp, alpha, np.array(cut_rows, dtype=np.int64), vi_rows)


def binding_flags(state: MasterState, mp: MasterProgram, x: np.ndarray) -> np.ndarray:
    """A cut binds when its row slack is at most 1e-6 * (1 + |rhs|)."""
    if not state.cuts:
        return np.zeros(0, dtype=bool)
    rhs = np.array([c.intercept for c in state.cuts])
    act = mp.program.matrix()[mp.cut_rows] @ x
    return (act - rhs) <= BINDING_TOL * (1.0 + np.abs(rhs))


def solution_from(state: MasterState, mp: MasterProgram, out: SolveOutcome) -> MasterSolution:
    inst = state.instance
    x = out.x
    point = CapacityPoint(list(inst.years), mp.expansion.items, x[mp.expansion.capa].copy(),
                          x[mp.expansion.exp].copy()).rounded()
    u = float(mp.expansion.invest_cost.ravel() @ point.expansion.ravel())
    plain = float(x[mp.expansion.u] + inst.probabilities @ x[mp.alpha].T.sum(axis=1)) \
        if mp.alpha.size else float(x[mp.expansion.u])
    return MasterSolution(
        point=point,
        expansion_cost=u,
        objective=plain,
        alpha=x[mp.alpha].copy(),
        binding=binding_flags(state, mp, x),
        outcome=out,
    )


def solve_master(state: MasterState, rel_tolerance: float = 1e-8) -> MasterSolution:
    mp = master_program(state)
    out = solve_with_fallback(mp.program, rel_tolerance)
    if out.status is Status.UNBOUNDED:
        raise SolverError(out.status, "master unbounded: a capacity bound is missing")
    if not out.ok:
        raise SolverError(out.status, f"master problem: {out.status.value}")
    return solution_from(state, mp, out)


def add_cuts(state: MasterState, cuts: list[Cut], k: int) -> None:
    """Append one cut per (year, scenario), all stamped active at iteration ``k``."""
    keys = [(c.year, c.scenario) for c in cuts]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate (year, scenario) in cut batch")
    expected = {(y, s.id) for y in state.instance.years for s in state.instance.scenarios}
    if set(keys) != expected:
        raise ValueError("cut batch must hold exactly one cut per (year, scenario)")
    for c in cuts:
        c.last_active = k
        state.cuts.append(c)


def maintain_cuts(state: MasterState, k: int, binding: np.ndarray | None) -> int:
    """Refresh activity of binding cuts and drop those idle for more than ``eta`` iterations.

    ``binding`` holds one flag per cut that existed when the deciding master
    solve ran (cuts appended afterwards are not covered and are kept).
    Returns the number of removed cuts.
    """
    n_flagged = 0 if binding is None else len(binding)
    keep = []
    removed = 0
    for pos, cut in enumerate(state.cuts):
        if pos < n_flagged and binding[pos]:
            cut.last_active = k
        if k - cut.last_active > state.eta:
            removed += 1
            continue
        keep.append(cut)
    state.cuts = keep
    state.deleted += removed
    return removed
