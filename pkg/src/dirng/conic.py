"""Thin conic-programming contract on top of the Clarabel interior-point solver.

Problems are posed as

    minimize    c . x
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                svec(sum_k x_k M_k) in PSD       (one entry per PSD block)

where a PSD block is given by the sparse map ``x -> svec(Gamma(x))`` using
Clarabel's scaled upper-triangle, column-major ``svec`` convention.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

TOL_ENV = "DIRNG_SOLVER_TOL"
DEFAULT_TOL = 1e-9
SQRT2 = math.sqrt(2.0)


def solver_tolerance() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    tol = float(raw)
    if not 0 < tol < 1:
        raise ValueError(f"{TOL_ENV} must lie in (0, 1), got {raw!r}")
    return tol


def svec_index(n: int) -> np.ndarray:
    """``idx[i, j]`` = position of entry (i, j) in the svec of an n x n matrix."""
    idx = np.empty((n, n), dtype=np.int64)
    pos = 0
    for j in range(n):
        for i in range(j + 1):
            idx[i, j] = idx[j, i] = pos
            pos += 1
    return idx


def svec(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    out = np.empty(n * (n + 1) // 2)
    pos = 0
    for j in range(n):
        for i in range(j + 1):
            out[pos] = mat[i, j] if i == j else SQRT2 * mat[i, j]
            pos += 1
    return out


def smat(vec: np.ndarray) -> np.ndarray:
    n = int((math.isqrt(8 * len(vec) + 1) - 1) // 2)
    mat = np.empty((n, n))
    pos = 0
    for j in range(n):
        for i in range(j + 1):
            v = vec[pos] if i == j else vec[pos] / SQRT2
            mat[i, j] = mat[j, i] = v
            pos += 1
    return mat


@dataclass
class PSDBlock:
    """``svec(Gamma(x)) = G @ x`` must be positive semidefinite."""

    dim: int
    G: sp.csr_matrix


def svec_scale(dim: int) -> np.ndarray:
    """Per-entry factor of :func:`svec` (1 on the diagonal, sqrt 2 elsewhere)."""
    return np.array([1.0 if i == j else SQRT2 for j in range(dim) for i in range(j + 1)])


def lifted_psd(G: sp.spmatrix, dim: int, offset: int, n: int) -> tuple[sp.csr_matrix, "PSDBlock"]:
    """Split ``G x in PSD`` into link rows and a block on fresh variables.

    The fresh variables (columns ``offset`` onward of an ``n``-column
    program) hold the plain upper-triangle entries.  Returns the rows of
    ``diag(1/scale) G x - s = 0`` and the PSD block on ``s``.  Interior-point
    solvers stay accurate on this form when the feasible set has no interior.
    """
    ns = dim * (dim + 1) // 2
    scale = svec_scale(dim)
    link = sp.diags(1.0 / scale) @ sp.csr_matrix(G)
    link = sp.hstack([link, sp.csr_matrix((ns, n - link.shape[1]))]).tolil()
    link[:, offset:offset + ns] = -sp.identity(ns)
    sel = sp.csr_matrix((scale, (np.arange(ns), offset + np.arange(ns))), shape=(ns, n))
    return link.tocsr(), PSDBlock(dim, sel)


@dataclass
class ConeProgram:
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    psd: list[PSDBlock] = field(default_factory=list)
    nonneg_vars: np.ndarray | None = None  # indices constrained x_i >= 0


@dataclass
class ConeSolution:
    status: str  # optimal | infeasible | unbounded | failure
    raw_status: str
    x: np.ndarray | None
    primal_objective: float
    dual_objective: float
    eq_duals: np.ndarray | None = None
    in_duals: np.ndarray | None = None
    psd_duals: list[np.ndarray] = field(default_factory=list)
    iterations: int = 0


_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def solve(program: ConeProgram, tol: float | None = None, **overrides) -> ConeSolution:
    tol = solver_tolerance() if tol is None else tol
    n = program.c.size
    blocks = [sp.csr_matrix(program.A_eq), sp.csr_matrix(program.A_in)]
    rhs = [program.b_eq, program.b_in]
    cones = []
    if program.A_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(program.A_eq.shape[0]))
    if program.A_in.shape[0]:
        cones.append(clarabel.NonnegativeConeT(program.A_in.shape[0]))
    n_nonneg = 0
    if program.nonneg_vars is not None and len(program.nonneg_vars):
        idx = np.asarray(program.nonneg_vars)
        n_nonneg = idx.size
        blocks.append(sp.csr_matrix((-np.ones(n_nonneg), (np.arange(n_nonneg), idx)),
                                    shape=(n_nonneg, n)))
        rhs.append(np.zeros(n_nonneg))
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    for block in program.psd:
        blocks.append(-sp.csr_matrix(block.G))
        rhs.append(np.zeros(block.G.shape[0]))
        cones.append(clarabel.PSDTriangleConeT(block.dim))
    A = sp.vstack(blocks, format="csc")
    b = np.concatenate(rhs)
    P = sp.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol
    settings.max_iter = 500
    settings.max_threads = 1
    for key, value in overrides.items():
        setattr(settings, key, value)
    solver = clarabel.DefaultSolver(P, np.asarray(program.c, dtype=float), A, b, cones, settings)
    sol = solver.solve()
    raw = str(sol.status)
    status = _STATUS.get(raw, "failure")
    if status != "optimal":
        log.debug("conic solve ended with status %s", raw)
        return ConeSolution(status, raw, None, math.nan, math.nan, iterations=sol.iterations)

    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    m_eq, m_in = program.A_eq.shape[0], program.A_in.shape[0]
    eq_duals = z[:m_eq]
    in_duals = z[m_eq:m_eq + m_in]
    pos = m_eq + m_in + n_nonneg
    psd_duals = []
    for block in program.psd:
        size = block.G.shape[0]
        psd_duals.append(z[pos:pos + size])
        pos += size
    primal = float(program.c @ x)
    dual = float(-(b @ z))
    return ConeSolution(status, raw, x, primal, dual, eq_duals, in_duals, psd_duals,
                        iterations=sol.iterations)
