"""Continuous convex program container and its interior-point backend.

Every optimisation in the package (closed problem, master, stabilised
masters, subproblems) is expressed as a :class:`ConvexProgram` and solved via
:func:`solve`. The backend is Clarabel; only this module imports it.

Dual values are reported as shadow prices, i.e. the derivative of the optimal
objective with respect to each row's right-hand side. For ``x >= 3`` in a
minimisation that is ``+1``; for a ``<=`` row it is ``<= 0``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

LE, GE, EQ = -1, 1, 0


class Status(enum.Enum):
    OPTIMAL = "optimal_within_tol"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


class SolverError(RuntimeError):
    def __init__(self, status: Status, message: str = ""):
        super().__init__(message or status.value)
        self.status = status


@dataclass
class SolveOutcome:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float = float("nan")
    achieved_tolerance: float = float("nan")
    iterations: int = 0
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class ConvexProgram:
    """Minimise ``c'x + x'Qx + const`` over bounded variables and linear rows.

    At most one convex quadratic constraint of the form
    ``||x[idx] - center||_2 <= radius`` may be attached (encoded as a
    second-order cone).
    """

    def __init__(self):
        self.n = 0
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self.m = 0
        self._ri: list[np.ndarray] = []
        self._ci: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.constant = 0.0
        self.quad_idx = np.zeros(0, dtype=np.int64)
        self.quad_w = np.zeros(0)
        self.ball: tuple[np.ndarray, np.ndarray, float] | None = None

    # -- building -----------------------------------------------------------
    def add_variables(self, count: int, lb=0.0, ub=np.inf, cost=0.0) -> np.ndarray:
        idx = np.arange(self.n, self.n + count, dtype=np.int64)
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), (count,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), (count,)).copy())
        self._c.append(np.broadcast_to(np.asarray(cost, dtype=float), (count,)).copy())
        self.n += count
        return idx

    def add_rows(self, row, col, val, sense, rhs) -> np.ndarray:
        """Append rows given in local COO form (``row`` counts from 0)."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        k = rhs.size
        idx = np.arange(self.m, self.m + k, dtype=np.int64)
        row = np.asarray(row, dtype=np.int64)
        self._ri.append(row + self.m)
        self._ci.append(np.asarray(col, dtype=np.int64))
        self._v.append(np.asarray(val, dtype=float))
        self._sense.append(np.broadcast_to(np.asarray(sense, dtype=np.int64), (k,)).copy())
        self._rhs.append(rhs)
        self.m += k
        return idx

    def add_row(self, cols, vals, sense, rhs) -> int:
        cols = np.asarray(cols, dtype=np.int64)
        return int(self.add_rows(np.zeros(cols.size, dtype=np.int64), cols, vals, sense, [rhs])[0])

    def add_squared_distance(self, idx, center, weight: float) -> None:
        """Add ``weight * ||x[idx] - center||^2`` to the objective."""
        idx = np.asarray(idx, dtype=np.int64)
        center = np.asarray(center, dtype=float)
        self.quad_idx = np.concatenate([self.quad_idx, idx])
        self.quad_w = np.concatenate([self.quad_w, np.full(idx.size, float(weight))])
        self.add_cost(idx, -2.0 * weight * center)
        self.constant += weight * float(center @ center)

    def add_cost(self, idx, values) -> None:
        c = self.cost
        np.add.at(c, np.asarray(idx, dtype=np.int64), values)
        self._c = [c]

    def set_ball(self, idx, center, radius: float) -> None:
        """Constrain ``||x[idx] - center||_2 <= radius``."""
        self.ball = (np.asarray(idx, dtype=np.int64), np.asarray(center, dtype=float), float(radius))

    # -- views --------------------------------------------------------------
    @property
    def lb(self) -> np.ndarray:
        return np.concatenate(self._lb) if self._lb else np.zeros(0)

    @property
    def ub(self) -> np.ndarray:
        return np.concatenate(self._ub) if self._ub else np.zeros(0)

    @property
    def cost(self) -> np.ndarray:
        return np.concatenate(self._c) if self._c else np.zeros(0)

    @property
    def sense(self) -> np.ndarray:
        return np.concatenate(self._sense) if self._sense else np.zeros(0, dtype=np.int64)

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate(self._rhs) if self._rhs else np.zeros(0)

    def set_rhs(self, rows, values) -> None:
        r = self.rhs
        r[np.asarray(rows, dtype=np.int64)] = values
        self._rhs = [r]
        self._sense = [self.sense]

    def matrix(self) -> sp.csr_matrix:
        if self._ri:
            A = sp.coo_matrix(
                (np.concatenate(self._v), (np.concatenate(self._ri), np.concatenate(self._ci))),
                shape=(self.m, self.n),
            ).tocsr()
        else:
            A = sp.csr_matrix((0, self.n))
        A.sum_duplicates()
        return A

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self.cost @ x) + self.constant
        if self.quad_idx.size:
            val += float(np.sum(self.quad_w * x[self.quad_idx] ** 2))
        return val

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.matrix() @ x

    def copy(self) -> "ConvexProgram":
        other = ConvexProgram()
        other.n, other.m = self.n, self.m
        other._lb, other._ub, other._c = [self.lb], [self.ub], [self.cost]
        other._ri, other._ci, other._v = list(self._ri), list(self._ci), list(self._v)
        other._sense, other._rhs = [self.sense], [self.rhs]
        other.constant = self.constant
        other.quad_idx, other.quad_w = self.quad_idx.copy(), self.quad_w.copy()
        other.ball = self.ball
        return other


def _status_of(s) -> Status:
    S = clarabel.SolverStatus
    if s in (S.Solved, S.AlmostSolved):
        return Status.OPTIMAL
    if s in (S.PrimalInfeasible, S.AlmostPrimalInfeasible):
        return Status.INFEASIBLE
    if s in (S.DualInfeasible, S.AlmostDualInfeasible):
        return Status.UNBOUNDED
    return Status.NUMERICAL_FAILURE


def solve(program: ConvexProgram, rel_tolerance: float = 1e-8, scale: bool = False,
          feas_tolerance: float = 1e-8, overrides: dict | None = None) -> SolveOutcome:
    """Interior-point solve to a relative duality-gap tolerance.

    With ``scale=True`` rows are statically divided by their largest absolute
    coefficient before the call and duals are mapped back to the unscaled
    rows. Off by default: Clarabel equilibrates internally, and the static
    pass loosens the effective feasibility tolerance on rows with large
    cost coefficients. ``overrides`` sets further Clarabel settings by name.
    """
    if not 1e-10 <= rel_tolerance <= 1e-1:
        raise ValueError(f"rel_tolerance {rel_tolerance} outside [1e-10, 1e-1]")
    n = program.n
    A = program.matrix()
    sense = program.sense
    rhs = program.rhs
    lb, ub = program.lb, program.ub
    c = program.cost

    if scale and A.shape[0]:
        rmax = np.asarray(abs(A).max(axis=1).todense()).ravel()
        rscale = np.where(rmax > 0, 1.0 / np.where(rmax > 0, rmax, 1.0), 1.0)
    else:
        rscale = np.ones(A.shape[0])
    As = sp.diags(rscale) @ A
    bs = rhs * rscale

    eq = sense == EQ
    le = sense == LE
    ge = sense == GE
    # Clarabel form: A x + s = b, s in cone
    blocks_A = [As[eq], As[le], -As[ge]]
    blocks_b = [bs[eq], bs[le], -bs[ge]]
    fin_lb = np.isfinite(lb)
    fin_ub = np.isfinite(ub)
    fixed = fin_lb & fin_ub & (lb == ub)
    lo_only = fin_lb & ~fixed
    up_only = fin_ub & ~fixed
    eye = sp.identity(n, format="csr")
    zero_rows = [blocks_A[0], eye[fixed]]
    zero_b = [blocks_b[0], lb[fixed]]
    nonneg_rows = [blocks_A[1], blocks_A[2], -eye[lo_only], eye[up_only]]
    nonneg_b = [blocks_b[1], blocks_b[2], -lb[lo_only], ub[up_only]]
    parts = zero_rows + nonneg_rows
    bparts = zero_b + nonneg_b
    n_zero = sum(p.shape[0] for p in zero_rows)
    n_nonneg = sum(p.shape[0] for p in nonneg_rows)
    cones = []
    if n_zero:
        cones.append(clarabel.ZeroConeT(n_zero))
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    if program.ball is not None:
        idx, center, radius = program.ball
        k = idx.size
        G = sp.csr_matrix((-np.ones(k), (np.arange(1, k + 1), idx)), shape=(k + 1, n))
        parts.append(G)
        bparts.append(np.concatenate([[radius], -center]))
        cones.append(clarabel.SecondOrderConeT(k + 1))
    Afull = sp.vstack(parts, format="csc")
    bfull = np.concatenate(bparts)

    if program.quad_idx.size:
        P = sp.csc_matrix(
            (2.0 * program.quad_w, (program.quad_idx, program.quad_idx)), shape=(n, n)
        )
        P.sum_duplicates()
    else:
        P = sp.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_rel = rel_tolerance
    settings.tol_gap_abs = min(1e-8, rel_tolerance)
    settings.tol_feas = feas_tolerance
    settings.max_iter = 400
    settings.presolve_enable = False
    for key, val in (overrides or {}).items():
        setattr(settings, key, val)
    sol = clarabel.DefaultSolver(P, c, Afull, bfull, cones, settings).solve()
    status = _status_of(sol.status)
    if status is not Status.OPTIMAL:
        return SolveOutcome(status=status, iterations=sol.iterations, solve_time=sol.solve_time)

    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    m_eq, m_le, m_ge = int(eq.sum()), int(le.sum()), int(ge.sum())
    duals = np.zeros(program.m)
    z_eq = z[:m_eq]
    z_le = z[n_zero: n_zero + m_le]
    z_ge = z[n_zero + m_le: n_zero + m_le + m_ge]
    duals[eq] = -z_eq * rscale[eq]
    duals[le] = -z_le * rscale[le]
    duals[ge] = z_ge * rscale[ge]
    p_obj = float(sol.obj_val) + program.constant
    d_obj = float(sol.obj_val_dual) + program.constant
    # duality gap plus the first-order objective effect of primal residuals
    resid = Afull @ x + np.asarray(sol.s) - bfull
    err = abs(p_obj - d_obj) + float(np.abs(z) @ np.abs(resid))
    achieved = err / max(1.0, abs(p_obj))
    return SolveOutcome(
        status=Status.OPTIMAL,
        x=x,
        duals=duals,
        objective=p_obj,
        achieved_tolerance=achieved,
        iterations=sol.iterations,
        solve_time=sol.solve_time,
    )


# tried in order after the default solve fails; each rescued a master
# program that the previous ones could not. The first one stops Clarabel
# from accepting an early infeasibility certificate on badly scaled rows.
FALLBACKS = (
    {"overrides": {"tol_infeas_abs": 1e-14, "tol_infeas_rel": 1e-14, "tol_ktratio": 1e-12}},
    {"scale": True},
    {"overrides": {"max_step_fraction": 0.9}},
    {"overrides": {"iterative_refinement_reltol": 1e-15}},
    {"overrides": {"equilibrate_min_scaling": 1e-6}},
    {"scale": True, "overrides": {"max_step_fraction": 0.9}},
    {"overrides": {"direct_solve_method": "faer"}},
)


def solve_with_fallback(program: ConvexProgram, rel_tolerance: float = 1e-8,
                        feasible: bool = True) -> SolveOutcome:
    """Solve, retrying with row scaling and other solver settings after a failure.

    Meant for master programs and subproblems, which are bounded by
    construction, so an unbounded verdict is a numerical artefact as well.
    Cut rows with capacity coefficients near 1e8 next to unit estimator
    coefficients, or a subproblem shedding all load, can stall the
    interior-point method. With ``feasible=True`` (the program is feasible
    by construction) an infeasible verdict is retried too; otherwise it is
    returned as is.
    """
    retry = {Status.NUMERICAL_FAILURE, Status.UNBOUNDED}
    if feasible:
        retry.add(Status.INFEASIBLE)
    out = solve(program, rel_tolerance)
    for kw in FALLBACKS:
        if out.status not in retry:
            break
        try:
            out = solve(program, rel_tolerance, **kw)
        except (AttributeError, ValueError):
            continue  # setting not available in this Clarabel build
    return out
