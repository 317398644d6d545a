"""Hot numeric loops: dense tableau simplex and k-medoid cost evaluation.

Each kernel exists twice: a numba ``@njit`` version with explicit loops and a
vectorised numpy version. ``BENDERSPLAN_NUMBA=0`` (or a missing numba)
selects the numpy path; both follow the same pivoting and tie-breaking rules
so they return identical answers.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("BENDERSPLAN_NUMBA", "1").lower() not in ("0", "false", "no", "off")

OPTIMAL, UNBOUNDED, ITERATION_LIMIT = 0, 1, 2
BLAND_AFTER = 50


# ---------------------------------------------------------------------------
# simplex

def _simplex_numpy(tab, basis, allowed, max_iter, tol):
    m = tab.shape[0] - 1
    degenerate = 0
    for it in range(max_iter):
        red = tab[m, :-1]
        cand = allowed & (red < -tol)
        if not cand.any():
            return OPTIMAL, it
        if degenerate > BLAND_AFTER:
            q = int(np.flatnonzero(cand)[0])
        else:
            q = int(np.argmin(np.where(cand, red, np.inf)))
        col = tab[:m, q]
        pos = col > tol
        if not pos.any():
            return UNBOUNDED, it
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / col[pos]
        r = int(np.argmin(ratios))
        degenerate = degenerate + 1 if ratios[r] <= tol else 0
        piv = tab[r] / tab[r, q]
        tab -= np.outer(tab[:, q], piv)
        tab[r] = piv
        basis[r] = q
    return ITERATION_LIMIT, max_iter


def _simplex_loops(tab, basis, allowed, max_iter, tol):
    m = tab.shape[0] - 1
    ncol = tab.shape[1]
    degenerate = 0
    for it in range(max_iter):
        q = -1
        best = -tol
        for j in range(ncol - 1):
            if allowed[j] and tab[m, j] < -tol:
                if degenerate > BLAND_AFTER:
                    q = j
                    break
                if tab[m, j] < best:
                    best = tab[m, j]
                    q = j
        if q < 0:
            return OPTIMAL, it
        r = -1
        rmin = np.inf
        for i in range(m):
            a = tab[i, q]
            if a > tol:
                ratio = tab[i, ncol - 1] / a
                if ratio < rmin:
                    rmin = ratio
                    r = i
        if r < 0:
            return UNBOUNDED, it
        if rmin <= tol:
            degenerate += 1
        else:
            degenerate = 0
        p = tab[r, q]
        for j in range(ncol):
            tab[r, j] /= p
        for i in range(m + 1):
            if i != r:
                f = tab[i, q]
                if f != 0.0:
                    for j in range(ncol):
                        tab[i, j] -= f * tab[r, j]
        basis[r] = q
    return ITERATION_LIMIT, max_iter


if numba is not None:
    _simplex_numba = numba.njit(cache=True)(_simplex_loops)
else:  # pragma: no cover
    _simplex_numba = None


def simplex_iterate(tab, basis, allowed, max_iter=200_000, tol=1e-9, use_numba=None):
    """Run primal simplex pivots in place on a tableau in canonical form.

    ``tab`` is (m+1, ncol+1): constraint rows, then the reduced-cost row;
    the last column holds the right-hand side (negated objective in the
    last row). Returns (status, pivots).
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return _simplex_numba(tab, basis, allowed, max_iter, tol)
    return _simplex_numpy(tab, basis, allowed, max_iter, tol)


def dense_simplex(c, A, b, senses, use_numba=None, tol=1e-9):
    """Two-phase tableau simplex for ``min c'x, A x (<=,>=,=) b, x >= 0``.

    ``senses`` uses -1 for <=, +1 for >=, 0 for =. Returns
    (status, x, objective) with status one of "optimal", "infeasible",
    "unbounded", "iteration_limit".
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    senses = np.asarray(senses).copy()
    m, n = A.shape
    A = A.copy()
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    senses[neg] *= -1

    n_slack = int(np.sum(senses != 0))
    n_art = int(np.sum(senses != -1))
    ncol = n + n_slack + n_art
    tab = np.zeros((m + 1, ncol + 1))
    tab[:m, :n] = A
    tab[:m, -1] = b
    basis = np.empty(m, dtype=np.int64)
    s = n
    a = n + n_slack
    art_rows = []
    for i in range(m):
        if senses[i] == -1:
            tab[i, s] = 1.0
            basis[i] = s
            s += 1
        elif senses[i] == 1:
            tab[i, s] = -1.0
            s += 1
            tab[i, a] = 1.0
            basis[i] = a
            art_rows.append(i)
            a += 1
        else:
            tab[i, a] = 1.0
            basis[i] = a
            art_rows.append(i)
            a += 1
    allowed = np.ones(ncol, dtype=np.bool_)

    if art_rows:
        tab[m, :] = -tab[art_rows, :].sum(axis=0)
        tab[m, n + n_slack: ncol] = 0.0
        status, _ = simplex_iterate(tab, basis, allowed, tol=tol, use_numba=use_numba)
        if status != OPTIMAL:
            return "iteration_limit", None, np.nan
        if -tab[m, -1] > 1e-7 * max(1.0, np.abs(b).max()):
            return "infeasible", None, np.nan
        # drive zero-level artificials out where possible
        for i in range(m):
            if basis[i] >= n + n_slack:
                row = tab[i, : n + n_slack]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    q = int(nz[0])
                    tab[i] /= tab[i, q]
                    for k in range(m + 1):
                        if k != i:
                            tab[k] -= tab[k, q] * tab[i]
                    basis[i] = q
        allowed[n + n_slack:] = False

    cost = np.zeros(ncol)
    cost[:n] = c
    tab[m, :-1] = cost
    tab[m, -1] = 0.0
    cb = cost[basis]
    tab[m] -= cb @ tab[:m]
    status, _ = simplex_iterate(tab, basis, allowed, tol=tol, use_numba=use_numba)
    if status == UNBOUNDED:
        return "unbounded", None, -np.inf
    if status != OPTIMAL:
        return "iteration_limit", None, np.nan
    x = np.zeros(ncol)
    x[basis] = tab[:m, -1]
    return "optimal", x[:n], float(c @ x[:n])


# ---------------------------------------------------------------------------
# k-medoid

def _medoid_costs_numpy(d, combos):
    return d[:, combos].min(axis=2).sum(axis=0)


def _medoid_costs_loops(d, combos):
    n = d.shape[0]
    out = np.zeros(combos.shape[0])
    for c in range(combos.shape[0]):
        total = 0.0
        for i in range(n):
            best = np.inf
            for k in range(combos.shape[1]):
                v = d[i, combos[c, k]]
                if v < best:
                    best = v
            total += best
        out[c] = total
    return out


if numba is not None:
    _medoid_costs_numba = numba.njit(cache=True)(_medoid_costs_loops)
else:  # pragma: no cover
    _medoid_costs_numba = None


def medoid_costs(d, combos, use_numba=None):
    """Total nearest-medoid distance for each row of ``combos`` (k medoid ids)."""
    d = np.ascontiguousarray(d, dtype=float)
    combos = np.ascontiguousarray(combos, dtype=np.int64)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return _medoid_costs_numba(d, combos)
    return _medoid_costs_numpy(d, combos)
