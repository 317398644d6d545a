"""Problem-dependent scenario reduction by k-medoids on cross-evaluated system costs."""
from __future__ import annotations

import csv
import itertools
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .detequiv import solve_closed
from .formulation import invest_cost_matrix
from .instance import ProblemInstance
from .subproblem import CapacityPoint, SubproblemProgram, solve_subproblem

EXHAUSTIVE_MAX_N = 10
EXHAUSTIVE_MAX_M = 4
SIMILARITY_OFFSET = 1e-9
Z_TOLERANCE = 1e-8


@dataclass
class DistanceMatrix:
    d: np.ndarray
    z: np.ndarray | None = None
    ids: list[str] | None = None

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass
class Reduction:
    medoids: list[int]  # indices into the scenario list, ascending
    assignment: np.ndarray  # scenario index -> medoid index
    weights: dict[int, float]  # medoid index -> probability
    objective: float

    def groups(self) -> dict[int, list[int]]:
        return {m: [int(s) for s in np.flatnonzero(self.assignment == m)] for m in self.medoids}


def compute_z_matrix(instance: ProblemInstance, rel_tolerance: float = Z_TOLERANCE) -> np.ndarray:
    """Z[s, t]: total cost of scenario ``s`` run on the capacities built for scenario ``t`` alone.

    Each scenario's closed problem is solved once; the n^2 cross evaluations
    go through the operational subproblems, so Z[s, s] reproduces the
    closed optimum of ``s`` up to the solver tolerance. The plans are only
    clipped at zero, not rounded: dropping a 1e-8 MW plant can force load
    shedding worth far more than the solver tolerance.
    """
    ids = [s.id for s in instance.scenarios]
    cost = invest_cost_matrix(instance)
    plans = []
    for sid in ids:
        sol = solve_closed(instance, rel_tolerance, scenario_subset=[sid])
        point = CapacityPoint(list(instance.years), sol.items, np.maximum(sol.capacities, 0.0),
                              np.maximum(sol.expansion, 0.0))
        plans.append((point, float(np.sum(cost * point.expansion))))
    programs = {(y, sid): SubproblemProgram(instance, y, sid) for y in instance.years for sid in ids}
    n = len(ids)
    z = np.zeros((n, n))
    for t, (point, invest) in enumerate(plans):
        for s, sid in enumerate(ids):
            total = invest
            for y in instance.years:
                sp = programs[(y, sid)]
                sp.set_point(point.year_slice(y))
                total += solve_subproblem(sp, rel_tolerance).value
            z[s, t] = total
    return z


def distance(z: np.ndarray, ids: list[str] | None = None, clamp_tol: float | None = None) -> DistanceMatrix:
    """Symmetric distance d[s, t] = (Z[s,t] - Z[s,s] + Z[t,s] - Z[t,t]) / 2.

    Negative entries come only from solver noise and are clamped to zero.
    ``clamp_tol`` (default: 1e-6 of the largest |Z|) is the most negative
    value treated as noise; anything below raises.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValueError("Z must be square")
    diag = np.diag(z)
    d = 0.5 * (z - diag[:, None] + z.T - diag[None, :])
    if clamp_tol is None:
        clamp_tol = 1e-6 * max(1.0, float(np.max(np.abs(z))) if z.size else 1.0)
    if np.any(d < -clamp_tol):
        raise ValueError("Z has off-diagonal entries well below the diagonal; not a cost cross-evaluation")
    d = np.maximum(d, 0.0)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d=d, z=z, ids=ids)


def _assign(d: np.ndarray, medoids: list[int]) -> np.ndarray:
    # argmin returns the first minimum and medoids are ascending: ties go to the lower id
    med = np.array(sorted(medoids))
    return med[np.argmin(d[:, med], axis=1)]


def medoid_objective(d: np.ndarray, medoids) -> float:
    return float(d[:, list(medoids)].min(axis=1).sum())


def exhaustive_kmedoid(d: np.ndarray, m: int, use_numba=None) -> list[int]:
    """Best medoid set over all C(n, m) candidates; the first in lexicographic order wins ties."""
    n = d.shape[0]
    combos = np.array(list(itertools.combinations(range(n), m)), dtype=np.int64)
    costs = _kernels.medoid_costs(d, combos, use_numba=use_numba)
    return [int(i) for i in combos[int(np.argmin(costs))]]


def swap_kmedoid(d: np.ndarray, m: int, seed: int = 0) -> list[int]:
    """Greedy build followed by first-improvement single swaps in seeded order."""
    n = d.shape[0]
    medoids: list[int] = []
    for _ in range(m):
        best, best_cost = None, np.inf
        for c in range(n):
            if c in medoids:
                continue
            cost = medoid_objective(d, medoids + [c])
            if cost < best_cost:
                best, best_cost = c, cost
        medoids.append(best)
    rng = np.random.default_rng(seed)
    current = medoid_objective(d, medoids)
    improved = True
    while improved:
        improved = False
        pairs = [(i, c) for i in range(m) for c in range(n) if c not in medoids]
        for k in rng.permutation(len(pairs)):
            i, c = pairs[k]
            trial = medoids.copy()
            trial[i] = c
            cost = medoid_objective(d, trial)
            if cost < current - 1e-12 * max(1.0, abs(current)):
                medoids, current, improved = trial, cost, True
                break
    return sorted(medoids)


def kmedoid(dm: DistanceMatrix | np.ndarray, m: int, seed: int = 0, use_numba=None) -> Reduction:
    """Select ``m`` representative scenarios minimising the summed distance to their members.

    Exact enumeration for n <= 10 and m <= 4, swap local search beyond.
    Each medoid's weight is its group size over n.
    """
    d = dm.d if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=float)
    n = d.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if n <= EXHAUSTIVE_MAX_N and m <= EXHAUSTIVE_MAX_M:
        medoids = exhaustive_kmedoid(d, m, use_numba)
    else:
        medoids = swap_kmedoid(d, m, seed)
    assignment = _assign(d, medoids)
    assignment[medoids] = medoids  # a medoid always represents itself, even at zero distance ties
    weights = {int(k): float(np.sum(assignment == k)) / n for k in medoids}
    return Reduction(medoids=sorted(medoids), assignment=assignment, weights=weights,
                     objective=medoid_objective(d, medoids))


def reduce_instance(instance: ProblemInstance, reduction: Reduction) -> ProblemInstance:
    """Instance restricted to the medoid scenarios, reweighted by group size."""
    ids = [instance.scenarios[k].id for k in reduction.medoids]
    reduced = instance.subset(ids)
    for scen, k in zip(reduced.scenarios, reduction.medoids):
        scen.probability = reduction.weights[k]
    return reduced


def export_similarity_graph(dm: DistanceMatrix, reduction: Reduction, path) -> tuple[str, str]:
    """Write ``nodes.csv`` (scenario, group, weight) and ``edges.csv`` (a, b, distance, similarity).

    A node's weight is its group's probability on the medoid and zero on
    the other members, so the column sums to one.
    """
    os.makedirs(path, exist_ok=True)
    n = dm.n
    ids = dm.ids or [str(i) for i in range(n)]
    nodes = os.path.join(path, "nodes.csv")
    edges = os.path.join(path, "edges.csv")
    with open(nodes, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "group", "weight"])
        for s in range(n):
            g = int(reduction.assignment[s])
            w.writerow([ids[s], ids[g], reduction.weights[s] if s in reduction.weights else 0.0])
    with open(edges, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "distance", "similarity"])
        for a in range(n):
            for b in range(a + 1, n):
                dist = float(dm.d[a, b])
                w.writerow([ids[a], ids[b], dist, 1.0 / (dist + SIMILARITY_OFFSET)])
    return nodes, edges
