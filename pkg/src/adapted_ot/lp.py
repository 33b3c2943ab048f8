"""Dense two-phase simplex for equality-form linear programs.

min c.x  s.t.  A x = b, x >= 0.

Redundant rows are eliminated up front by Gaussian row reduction so the
tableau carries an independent row system; phase-1 artificials then certify
feasibility.  Pivoting uses the most-negative reduced cost with first-index
tie-breaks and falls back to Bland's rule once the objective stalls, which
guarantees termination on the degenerate transport instances this package
produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-10
PIVOT_TOL = 1e-9
COST_TOL = 1e-10


class LPError(RuntimeError):
    """Numerical failure; carries the offending pivot for diagnosis."""

    def __init__(self, message, iteration=None, pivot=None):
        super().__init__(message)
        self.iteration = iteration
        self.pivot = pivot


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape != (self.b.size, self.c.size):
            raise ValueError("inconsistent LP dimensions")


@dataclass
class LPResult:
    status: str            # "optimal" | "infeasible" | "unbounded"
    value: float
    x: np.ndarray
    iterations: int
    rows_kept: int
    diagnostics: dict = field(default_factory=dict)


def _row_reduce(A, b, tol):
    """Select a maximal independent subset of rows via rank-revealing
    (column-pivoted) QR of the augmented transpose.

    Inconsistent systems keep the offending row (it is independent through
    its b-entry), so phase-1 flags them downstream.  Row dependencies in the
    transport systems built here are exact rational identities, far below
    the rank threshold.
    """
    from scipy.linalg import qr

    scale = np.maximum(np.max(np.abs(A), axis=1), np.abs(b))
    scale = np.where(scale == 0.0, 1.0, scale)
    aug = np.hstack([A / scale[:, None], (b / scale)[:, None]])
    _, R, perm = qr(aug.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(0, dtype=int)
    rank = int((diag > max(tol, 1e-12) * diag[0]).sum())
    return np.sort(perm[:rank])


def _pivot(T, basis, prow, pcol):
    piv = T[prow, pcol]
    T[prow] /= piv
    col = T[:, pcol].copy()
    col[prow] = 0.0
    T -= np.outer(col, T[prow])
    # keep the pivot column numerically exact
    T[:, pcol] = 0.0
    T[prow, pcol] = 1.0
    basis[prow] = pcol


def _ratio_test(T, basis, pcol, m, bland):
    col = T[:m, pcol]
    rhs = T[:m, -1]
    cand = np.nonzero(col > PIVOT_TOL)[0]
    if cand.size == 0:
        return None
    ratios = np.maximum(rhs[cand], 0.0) / col[cand]
    best = ratios.min()
    ties = cand[ratios <= best + 1e-12]
    if bland:
        # anti-cycling: smallest basis variable index among the ties
        return int(ties[np.argmin(basis[ties])])
    # stability: largest pivot element among the ties
    return int(ties[np.argmax(col[ties])])


class _Tableau:
    """Dense tableau with refactorization from the original row data.

    Columns j < n are the real variables, columns n..n+m-1 the phase-1
    artificials (unit columns).  Refactorization recomputes B^-1 [A | I | b]
    and the reduced-cost row exactly for the current basis, wiping the
    round-off that accumulates over long pivot sequences.
    """

    def __init__(self, A2, b2, cost, with_artificials):
        self.A2 = A2
        self.b2 = b2
        self.m, self.n = A2.shape
        self.with_art = with_artificials
        self.ncols = self.n + (self.m if with_artificials else 0)
        self.cost = cost  # length ncols
        self.T = None

    def refactor(self, basis):
        m, n = self.m, self.n
        B = np.empty((m, m))
        for k, j in enumerate(basis):
            if j < n:
                B[:, k] = self.A2[:, j]
            else:
                B[:, k] = 0.0
                B[j - n, k] = 1.0
        rhs = np.empty((m, self.ncols + 1))
        rhs[:, :n] = self.A2
        if self.with_art:
            rhs[:, n:self.ncols] = np.eye(m)
        rhs[:, -1] = self.b2
        try:
            body = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError as exc:
            raise LPError(f"singular basis during refactorization: {exc}") from exc
        T = np.empty((m + 1, self.ncols + 1))
        T[:m] = body
        cb = self.cost[basis]
        T[m, :self.ncols] = self.cost - cb @ body[:, :self.ncols]
        T[m, -1] = -(cb @ body[:, -1])
        self.T = T


def _run_simplex(tab, basis, max_iter, chunk=500):
    """Pivot until a refactor-verified optimum; returns (status, iterations).

    Dantzig pricing with first-index ties, switching to Bland's rule after
    an objective stall; every `chunk` pivots (and before accepting an
    optimum) the tableau is rebuilt from the original data.
    """
    m, ncols = tab.m, tab.ncols
    tab.refactor(basis)
    it = 0
    bland = False
    stall = 0
    since_refactor = 0
    last_obj = -tab.T[m, -1]
    while it <= max_iter:
        T = tab.T
        rc = T[m, :ncols]
        if bland:
            neg = np.nonzero(rc < -COST_TOL)[0]
            pcol = int(neg[0]) if neg.size else None
        else:
            pcol = int(np.argmin(rc))
            if rc[pcol] >= -COST_TOL:
                pcol = None
        if pcol is None:
            if since_refactor == 0:
                return "optimal", it
            tab.refactor(basis)
            since_refactor = 0
            continue
        prow = _ratio_test(T, basis, pcol, m, bland)
        if prow is None:
            if since_refactor == 0:
                return "unbounded", it
            tab.refactor(basis)
            since_refactor = 0
            continue
        _pivot(T, basis, prow, pcol)
        it += 1
        since_refactor += 1
        obj = -T[m, -1]
        if obj < last_obj - 1e-12:
            stall = 0
            last_obj = obj
        else:
            stall += 1
            if stall > m + ncols + 100:
                bland = True
        if since_refactor >= chunk:
            tab.refactor(basis)
            since_refactor = 0
            last_obj = min(last_obj, -tab.T[m, -1])
    raise LPError("simplex iteration limit exceeded", iteration=it)


def lp_solve(lp: LinearProgram, max_iter: int | None = None) -> LPResult:
    """Solve to an optimal basic solution; status optimal/infeasible/unbounded."""
    return _lp_solve(lp, max_iter, reduce_rows=True)


def _lp_solve(lp: LinearProgram, max_iter, reduce_rows: bool) -> LPResult:
    c, A, b = lp.c, lp.A, lp.b
    m0, n = A.shape
    if n == 0:
        return LPResult("optimal", 0.0, np.zeros(0), 0, 0)
    if m0 == 0:
        if np.all(c >= -COST_TOL):
            return LPResult("optimal", 0.0, np.zeros(n), 0, 0)
        return LPResult("unbounded", -np.inf, np.zeros(n), 0, 0)

    kept = _row_reduce(A, b, 1e-10) if reduce_rows else np.arange(m0)
    A2 = A[kept].copy()
    b2 = b[kept].copy()
    m = A2.shape[0]
    flip = b2 < 0
    A2[flip] *= -1.0
    b2[flip] *= -1.0
    if max_iter is None:
        max_iter = 100 * (m + n) + 20000

    # phase 1: feasibility via artificials
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab = _Tableau(A2, b2, cost1, with_artificials=True)
    basis = np.arange(n, n + m)
    status, it = _run_simplex(tab, basis, max_iter)
    if status != "optimal":
        raise LPError("phase-1 did not reach an optimum", iteration=it)
    if -tab.T[m, -1] > 1e-7:
        return LPResult("infeasible", np.nan, np.full(n, np.nan), it, m,
                        {"phase1": float(-tab.T[m, -1])})

    # drive surviving artificials out of the basis where possible
    T = tab.T
    for r in range(m):
        if basis[r] >= n:
            row = np.abs(T[r, :n])
            j = int(np.argmax(row))
            if row[j] > PIVOT_TOL:
                _pivot(T, basis, r, j)
                it += 1
    live = basis < n
    if not np.all(live):
        keep_rows = np.nonzero(live)[0]
        A2 = A2[keep_rows]
        b2 = b2[keep_rows]
        basis = basis[keep_rows]
        m = keep_rows.size

    # phase 2 on the real columns
    tab = _Tableau(A2, b2, c.copy(), with_artificials=False)
    status, it2 = _run_simplex(tab, basis, max_iter)
    it += it2
    if status == "unbounded":
        return LPResult("unbounded", -np.inf, np.full(n, np.nan), it, m)

    x = np.zeros(n)
    x[basis] = tab.T[:m, -1]
    try:
        xb = np.linalg.solve(A2[:, basis], b2)
        if np.all(xb > -1e-8):
            x = np.zeros(n)
            x[basis] = np.maximum(xb, 0.0)
    except np.linalg.LinAlgError:
        pass
    x[np.abs(x) < 1e-14] = 0.0
    resid = float(np.max(np.abs(A @ x - b))) if m else 0.0
    if resid > 1e-8:
        if reduce_rows:
            # a near-dependent row was dropped that actually mattered;
            # redo the solve with every row carried by phase-1 artificials
            return _lp_solve(lp, max_iter, reduce_rows=False)
        raise LPError(f"primal residual {resid:.3e} too large", iteration=it)
    return LPResult("optimal", float(c @ x), x, it, m, {"residual": resid})


def transport_lp(p: np.ndarray, q: np.ndarray, cost: np.ndarray,
                 extra_rows: np.ndarray | None = None,
                 extra_rhs: np.ndarray | None = None) -> LPResult:
    """Transport problem between weight vectors with optional extra equality
    rows over the flattened coupling matrix (row-major: cell (i,j) -> i*nq+j)."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    npp, nq = p.size, q.size
    nvar = npp * nq
    # fast paths: one-sided problems are forced
    if npp == 1 or nq == 1:
        x = np.outer(p, q).ravel()
        return LPResult("optimal", float(cost.ravel() @ x), x, 0, 0)
    rows = npp + nq
    extra = 0 if extra_rows is None else extra_rows.shape[0]
    A = np.zeros((rows + extra, nvar))
    b = np.empty(rows + extra)
    for i in range(npp):
        A[i, i * nq:(i + 1) * nq] = 1.0
        b[i] = p[i]
    for j in range(nq):
        A[npp + j, j::nq] = 1.0
        b[npp + j] = q[j]
    if extra:
        A[rows:] = extra_rows
        b[rows:] = extra_rhs if extra_rhs is not None else 0.0
    return lp_solve(LinearProgram(cost.ravel(), A, b))


def marginal_system(p: np.ndarray, q: np.ndarray):
    """Marginal equality rows for a coupling, as (A, b)."""
    npp, nq = p.size, q.size
    A = np.zeros((npp + nq, npp * nq))
    b = np.empty(npp + nq)
    for i in range(npp):
        A[i, i * nq:(i + 1) * nq] = 1.0
        b[i] = p[i]
    for j in range(nq):
        A[npp + j, j::nq] = 1.0
        b[npp + j] = q[j]
    return A, b
