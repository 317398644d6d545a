"""Row/column builders shared by the closed problem, the master and the subproblems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import ENERGY, POWER, ProblemInstance, Scenario, default_capacity_bounds
from .solver import EQ, GE, LE, ConvexProgram


@dataclass
class ExpansionBlock:
    """Indices of the first-stage variables inside a program.

    ``exp`` and ``capa`` have shape (n_years, n_items) following
    ``instance.capacity_items()``.
    """
    items: list[tuple[str, str]]
    exp: np.ndarray
    capa: np.ndarray
    invest_cost: np.ndarray
    u: int
    linkage_rows: np.ndarray
    ratio_rows: np.ndarray


@dataclass
class OperationBlock:
    v: int
    gen: dict[str, np.ndarray]
    st_in: dict[str, np.ndarray]
    st_out: dict[str, np.ndarray]
    st_size: dict[str, np.ndarray]
    lss: np.ndarray
    capacity_rows: np.ndarray
    balance_rows: np.ndarray
    storage_rows: np.ndarray
    cost_row: int


def invest_cost_matrix(instance: ProblemInstance) -> np.ndarray:
    items = instance.capacity_items()
    out = np.zeros((len(instance.years), len(items)))
    for j, y in enumerate(instance.years):
        for k, (tid, part) in enumerate(items):
            tech = instance.tech(tid)
            out[j, k] = tech.invest_cost_energy[y] if part == ENERGY else tech.invest_cost[y]
    return out


def capacity_offsets(instance: ProblemInstance) -> np.ndarray:
    """Exogenous capacity per item (``fixed_capacity`` on the power side)."""
    items = instance.capacity_items()
    off = np.zeros(len(items))
    for k, (tid, part) in enumerate(items):
        tech = instance.tech(tid)
        if tech.fixed_capacity is not None and part == POWER:
            off[k] = tech.fixed_capacity
    return off


def expansion_upper_bounds(instance: ProblemInstance) -> np.ndarray:
    items = instance.capacity_items()
    ub = np.full(len(items), np.inf)
    for k, (tid, part) in enumerate(items):
        tech = instance.tech(tid)
        if tech.fixed_capacity is not None and part == POWER:
            ub[k] = 0.0
    return ub


def linkage_matrix(instance: ProblemInstance) -> np.ndarray:
    """``L[j, j'] = 1`` if expansion in year j' contributes to capacity in year j."""
    years = instance.years
    L = np.zeros((len(years), len(years)))
    for j, y in enumerate(years):
        for jj, yy in enumerate(years):
            if yy in instance.expansion_linkage[y]:
                L[j, jj] = 1.0
    return L


def add_expansion(prog: ConvexProgram, instance: ProblemInstance) -> ExpansionBlock:
    items = instance.capacity_items()
    ny, ni = len(instance.years), len(items)
    bounds = default_capacity_bounds(instance)
    cap_ub = np.array([bounds[it] for it in items])
    cost = invest_cost_matrix(instance)
    exp_ub = expansion_upper_bounds(instance)
    exp = prog.add_variables(ny * ni, lb=0.0, ub=np.tile(exp_ub, ny)).reshape(ny, ni)
    capa = prog.add_variables(ny * ni, lb=0.0, ub=np.tile(cap_ub, ny)).reshape(ny, ni)
    u = int(prog.add_variables(1, lb=0.0, cost=1.0)[0])

    # Capa[y,i] - sum_{y' in link(y)} Exp[y',i] = offset[i]
    L = linkage_matrix(instance)
    off = capacity_offsets(instance)
    rows, cols, vals = [], [], []
    r = 0
    for j in range(ny):
        for k in range(ni):
            rows.append(r); cols.append(capa[j, k]); vals.append(1.0)
            for jj in np.flatnonzero(L[j]):
                rows.append(r); cols.append(exp[jj, k]); vals.append(-1.0)
            r += 1
    linkage_rows = prog.add_rows(rows, cols, vals, EQ, np.tile(off, ny))

    # U - sum c_inv Exp = 0
    prog.add_row(np.concatenate([[u], exp.ravel()]), np.concatenate([[1.0], -cost.ravel()]), EQ, 0.0)

    ratio_rows = []
    for tech in instance.storage:
        if tech.energy_power_ratio_bounds is None:
            continue
        lo, hi = tech.energy_power_ratio_bounds
        kp = items.index((tech.id, POWER))
        ke = items.index((tech.id, ENERGY))
        for j in range(ny):
            ratio_rows.append(prog.add_row([capa[j, ke], capa[j, kp]], [1.0, -lo], GE, 0.0))
            ratio_rows.append(prog.add_row([capa[j, ke], capa[j, kp]], [1.0, -hi], LE, 0.0))
    return ExpansionBlock(items, exp, capa, cost, u, linkage_rows, np.array(ratio_rows, dtype=np.int64))


def add_operation(prog: ConvexProgram, instance: ProblemInstance, year: int, scenario: Scenario,
                  capa: np.ndarray, weight: float) -> OperationBlock:
    """Operational rows of one (year, scenario) linked to capacity columns ``capa``.

    ``weight`` is the objective coefficient placed on the operational cost
    variable (the scenario probability in the closed problem, 1 in a
    subproblem).
    """
    T = instance.time_steps
    items = instance.capacity_items()
    t = np.arange(T)
    v = int(prog.add_variables(1, lb=0.0, cost=weight)[0])
    gen, st_in, st_out, st_size = {}, {}, {}, {}
    for tech in instance.technologies:
        if tech.is_storage:
            st_in[tech.id] = prog.add_variables(T)
            st_out[tech.id] = prog.add_variables(T)
            st_size[tech.id] = prog.add_variables(T)
        else:
            gen[tech.id] = prog.add_variables(T)
    lss = prog.add_variables(T)

    cap_rows = []
    for tech in instance.technologies:
        kp = items.index((tech.id, POWER))
        if tech.is_storage:
            ke = items.index((tech.id, ENERGY))
            for var, k in ((st_out[tech.id], kp), (st_in[tech.id], kp), (st_size[tech.id], ke)):
                rows = np.concatenate([t, t])
                cols = np.concatenate([var, np.full(T, capa[k])])
                vals = np.concatenate([np.ones(T), -np.ones(T)])
                cap_rows.append(prog.add_rows(rows, cols, vals, LE, np.zeros(T)))
        else:
            cf = scenario.capacity_factor[(year, tech.id)]
            rows = np.concatenate([t, t])
            cols = np.concatenate([gen[tech.id], np.full(T, capa[kp])])
            vals = np.concatenate([np.ones(T), -cf])
            cap_rows.append(prog.add_rows(rows, cols, vals, LE, np.zeros(T)))

    # lss + sum gen - sum in + sum out = demand
    rows, cols, vals = [t], [lss], [np.ones(T)]
    for g in gen.values():
        rows.append(t); cols.append(g); vals.append(np.ones(T))
    for tid in st_in:
        rows += [t, t]; cols += [st_in[tid], st_out[tid]]; vals += [-np.ones(T), np.ones(T)]
    balance = prog.add_rows(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), EQ,
                            scenario.demand[year])

    # size[t] - size[t-1] - in[t] + out[t] = 0, circular within the year
    st_rows = []
    prev = np.roll(t, 1)
    for tid in st_in:
        size = st_size[tid]
        rows = np.concatenate([t, t, t, t])
        cols = np.concatenate([size, size[prev], st_in[tid], st_out[tid]])
        vals = np.concatenate([np.ones(T), -np.ones(T), -np.ones(T), np.ones(T)])
        st_rows.append(prog.add_rows(rows, cols, vals, EQ, np.zeros(T)))

    # V - c_lss sum lss - sum c_var gen = 0
    cols = [np.array([v]), lss]
    vals = [np.array([1.0]), np.full(T, -instance.loss_of_load_cost)]
    for tech in instance.generation:
        cols.append(gen[tech.id])
        vals.append(np.full(T, -tech.variable_cost[(year, scenario.id)]))
    cols = np.concatenate(cols)
    cost_row = prog.add_rows(np.zeros(cols.size, dtype=np.int64), cols, np.concatenate(vals), EQ, [0.0])[0]

    return OperationBlock(
        v=v, gen=gen, st_in=st_in, st_out=st_out, st_size=st_size, lss=lss,
        capacity_rows=np.concatenate(cap_rows) if cap_rows else np.zeros(0, dtype=np.int64),
        balance_rows=balance,
        storage_rows=np.concatenate(st_rows) if st_rows else np.zeros(0, dtype=np.int64),
        cost_row=int(cost_row),
    )
