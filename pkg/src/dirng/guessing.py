"""Device-independent guessing probability programs.

The primal program is

    maximize    sum_b P_b . m_b
    subject to  sum_b m_b[0] = 1
                lower <= sum_b L_alpha . m_b <= upper        (alpha = 1..t)
                Gamma(m_b) PSD                                for every block b

with one block ``b = (a, x)`` per guessed output ``a`` and generating input
``x``.  ``P_b`` reads ``p~_b(a|x)`` (marginalized onto the guessed parties) and
``L_alpha`` is the embedded Bell expression.  Its dual is

    minimize    y0 + y+ . upper - y- . lower
    subject to  y0 u + (y+ - y-) . f - e_{a,x}  in the dual cone, for every b

and the reported ``g`` is always the dual value: an upper bound on the
relaxed optimum that stays valid when the solver stops early.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import conic
from .npa import NpaStructure, SolverError, embed_expression, relaxation, tsirelson_bound
from .scenario import (CHSH_SCENARIO, Behavior, BellExpression, InputDistribution, Scenario,
                       ScenarioMismatch, correlators, expression_from_correlators,
                       expression_set)

log = logging.getLogger(__name__)

INFEASIBLE_DUAL = -1e6
ALL_PARTIES = None


@dataclass(frozen=True, eq=False)
class GPQuery:
    """Bell expressions, an interval region for their values and the generating inputs.

    ``guess_parties`` selects whose outputs the adversary guesses; the default
    is every party (the joint output).
    """

    expressions: tuple[BellExpression, ...]
    lower: np.ndarray
    upper: np.ndarray
    gen_inputs: tuple[tuple[int, ...], ...]
    level: int = 2
    guess_parties: tuple[int, ...] | None = ALL_PARTIES

    def __post_init__(self):
        exprs = tuple(self.expressions)
        if not exprs:
            raise ValueError("at least one Bell expression is required")
        scenario = exprs[0].scenario
        if any(f.scenario != scenario for f in exprs):
            raise ScenarioMismatch("all expressions must share one scenario")
        lo = np.asarray(self.lower, dtype=float).reshape(-1).copy()
        hi = np.asarray(self.upper, dtype=float).reshape(-1).copy()
        if lo.shape != (len(exprs),) or hi.shape != (len(exprs),):
            raise ValueError("region bounds must have one entry per expression")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("region needs lower <= upper componentwise")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValueError("empty interval")
        gen = tuple(tuple(x) if not isinstance(x, int) else scenario.input_tuples()[x]
                    for x in self.gen_inputs)
        if not gen:
            raise ValueError("gen_inputs must be nonempty")
        for x in gen:
            scenario.input_index(x)
        parties = self.guess_parties
        if parties is not None:
            parties = tuple(sorted(set(int(i) for i in parties)))
            if not parties or parties[0] < 0 or parties[-1] >= scenario.parties:
                raise ValueError("guess_parties must name existing parties")
            if len(parties) == scenario.parties:
                parties = None
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "expressions", exprs)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "gen_inputs", tuple(dict.fromkeys(gen)))
        object.__setattr__(self, "guess_parties", parties)

    @classmethod
    def point(cls, expressions: Sequence[BellExpression], values, gen_inputs,
              level: int = 2, guess_parties=ALL_PARTIES) -> "GPQuery":
        v = np.asarray(values, dtype=float).reshape(-1)
        return cls(tuple(expressions), v, v, tuple(gen_inputs), level, guess_parties)

    @property
    def scenario(self) -> Scenario:
        return self.expressions[0].scenario

    @property
    def t(self) -> int:
        return len(self.expressions)

    @property
    def is_point(self) -> bool:
        return bool(np.all(self.lower == self.upper))

    def with_region(self, lower, upper) -> "GPQuery":
        return GPQuery(self.expressions, lower, upper, self.gen_inputs, self.level,
                       self.guess_parties)

    def guess_outcomes(self) -> int:
        parties = self.guess_parties or range(self.scenario.parties)
        return math.prod(self.scenario.outputs[i] for i in parties)

    def to_dict(self) -> dict:
        return {
            "expressions": [{"label": f.label, "coeffs": f.coeffs.tolist()}
                            for f in self.expressions],
            "inputs": list(self.scenario.inputs),
            "outputs": list(self.scenario.outputs),
            "lower": [_enc(v) for v in self.lower],
            "upper": [_enc(v) for v in self.upper],
            "gen_inputs": [list(x) for x in self.gen_inputs],
            "level": self.level,
            "guess_parties": None if self.guess_parties is None else list(self.guess_parties),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GPQuery":
        scenario = Scenario(tuple(doc["inputs"]), tuple(doc["outputs"]))
        exprs = tuple(BellExpression(scenario, np.asarray(e["coeffs"], dtype=float), e["label"])
                      for e in doc["expressions"])
        return cls(exprs, [_dec(v) for v in doc["lower"]], [_dec(v) for v in doc["upper"]],
                   tuple(tuple(x) for x in doc["gen_inputs"]), int(doc["level"]),
                   None if doc.get("guess_parties") is None else tuple(doc["guess_parties"]))


def _enc(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def _dec(v) -> float:
    return float(v)


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Affine witness ``y0 + y . f`` bounding every guessing functional on the relaxation.

    ``sos`` holds one positive semidefinite Gram matrix per block (in block
    order) proving the functional inequality; it may be empty when only the
    numbers were recorded.
    """

    y0: float
    y_plus: np.ndarray
    y_minus: np.ndarray
    sos: tuple[np.ndarray, ...] = field(default=(), repr=False)

    @property
    def y(self) -> np.ndarray:
        return self.y_plus - self.y_minus

    def value(self, lower, upper) -> float:
        """``y0 + y+ . upper - y- . lower`` with sentinel sides contributing nothing."""
        total = self.y0
        for yp, ym, lo, hi in zip(self.y_plus, self.y_minus, lower, upper):
            if yp > 0:
                total += yp * hi
            if ym > 0:
                total -= ym * lo
        return float(total)

    def expression(self, expressions: Sequence[BellExpression], x0=None) -> BellExpression:
        """The witness ``y0 u + sum_alpha y_alpha f_alpha`` as a Bell expression."""
        from .scenario import normalization_expression
        scenario = expressions[0].scenario
        coeffs = self.y0 * normalization_expression(scenario, x0).coeffs
        for yk, f in zip(self.y, expressions):
            coeffs = coeffs + yk * f.coeffs
        return BellExpression(scenario, coeffs, "witness")

    def to_dict(self) -> dict:
        return {"y0": float(self.y0), "y_plus": [float(v) for v in self.y_plus],
                "y_minus": [float(v) for v in self.y_minus],
                "sos": [m.tolist() for m in self.sos]}

    @classmethod
    def from_dict(cls, doc: dict) -> "DualCertificate":
        return cls(float(doc["y0"]), np.asarray(doc["y_plus"], dtype=float),
                   np.asarray(doc["y_minus"], dtype=float),
                   tuple(np.asarray(m, dtype=float) for m in doc.get("sos", [])))


@dataclass(frozen=True, eq=False)
class GPResult:
    g: float
    h: float
    status: str  # optimal | infeasible_primal | numerical_failure
    witness: DualCertificate | None
    duality_gap: float
    primal: float = math.nan
    raw_status: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "infeasible_primal")

    def to_dict(self) -> dict:
        return {"g": float(self.g), "h": float(self.h), "status": self.status,
                "primal": None if math.isnan(self.primal) else float(self.primal),
                "duality_gap": None if math.isnan(self.duality_gap) else float(self.duality_gap),
                "raw_status": self.raw_status,
                "witness": None if self.witness is None else self.witness.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "GPResult":
        w = doc.get("witness")
        return cls(float(doc["g"]), float(doc["h"]), doc["status"],
                   None if w is None else DualCertificate.from_dict(w),
                   math.nan if doc.get("duality_gap") is None else float(doc["duality_gap"]),
                   math.nan if doc.get("primal") is None else float(doc["primal"]),
                   doc.get("raw_status", ""))


def entropy(g: float) -> float:
    return max(0.0, -math.log2(g))


def _infeasible(raw: str) -> GPResult:
    return GPResult(1.0, 0.0, "infeasible_primal", None, math.nan, math.nan, raw)


def _failure(raw: str) -> GPResult:
    log.warning("guessing-probability solve failed with status %s", raw)
    return GPResult(1.0, 0.0, "numerical_failure", None, math.nan, math.nan, raw)


def _finish(g_dual: float, g_primal: float, witness: DualCertificate, raw: str,
            n_guess: int) -> GPResult:
    if not math.isfinite(g_dual) or g_dual < INFEASIBLE_DUAL:
        return _infeasible(raw)
    gap = g_dual - g_primal if math.isfinite(g_primal) else math.nan
    g = min(1.0, max(g_dual, 1.0 / n_guess))
    return GPResult(g, entropy(g), "optimal", witness, gap, g_primal, raw)


@dataclass
class _Layout:
    npa: NpaStructure
    blocks: list[tuple[tuple[int, ...], int]]  # (guessed output, flat input index)
    P: list[np.ndarray]
    L: np.ndarray  # t x n_vars
    eq_rows: np.ndarray
    up_rows: np.ndarray
    lo_rows: np.ndarray


def _layout(query: GPQuery) -> _Layout:
    scenario = query.scenario
    npa = relaxation(scenario, query.level)
    parties = query.guess_parties or tuple(range(scenario.parties))
    guesses = sorted({tuple(a[i] for i in parties) for a in scenario.output_tuples()})
    blocks, P = [], []
    for x in query.gen_inputs:
        xi = scenario.input_index(x)
        for g in guesses:
            rows = [ai * scenario.n_inputs + xi for ai, a in enumerate(scenario.output_tuples())
                    if tuple(a[i] for i in parties) == g]
            blocks.append((g, xi))
            P.append(npa.prob_map[rows].sum(axis=0))
    L = np.array([embed_expression(npa, f) for f in query.expressions])
    lo, hi = query.lower, query.upper
    eq = np.flatnonzero(lo == hi)
    up = np.flatnonzero((lo != hi) & np.isfinite(hi))
    low = np.flatnonzero((lo != hi) & np.isfinite(lo))
    return _Layout(npa, blocks, P, L, eq, up, low)


def guessing_probability_region(query: GPQuery, tol: float | None = None) -> GPResult:
    """Worst-case guessing probability over the interval region of ``query``.

    Each block carries its moment vector ``m_b`` and, as separate variables,
    the upper triangle ``s_b`` of its moment matrix linked by equalities.
    The lifted form keeps Clarabel accurate at points on the boundary of the
    quantum set, where the relaxation has no interior.
    """
    lay = _layout(query)
    npa, nb, nv = lay.npa, len(lay.blocks), lay.npa.n_vars
    ns = npa.svec_map.shape[0]
    per = nv + ns
    n = nb * per
    moment_cols = np.concatenate([b * per + np.arange(nv) for b in range(nb)])

    def spread(row: np.ndarray) -> sp.csr_matrix:
        vals = np.tile(row, nb)
        return sp.csr_matrix((vals, (np.zeros(vals.size, dtype=int), moment_cols)), shape=(1, n))

    c = np.zeros(n)
    c[moment_cols] = -np.concatenate(lay.P)
    e0 = np.zeros(nv)
    e0[0] = 1.0
    A_eq = [spread(e0)]
    b_eq = [np.ones(1)]
    for k in lay.eq_rows:
        A_eq.append(spread(lay.L[k]))
        b_eq.append(np.array([query.lower[k]]))
    psd = []
    for b in range(nb):
        link, block = conic.lifted_psd(npa.svec_map, npa.dim, nv, per)
        A_eq.append(sp.hstack([sp.csr_matrix((ns, b * per)), link,
                               sp.csr_matrix((ns, n - (b + 1) * per))]))
        b_eq.append(np.zeros(ns))
        psd.append(conic.PSDBlock(npa.dim, sp.hstack([
            sp.csr_matrix((ns, b * per)), block.G, sp.csr_matrix((ns, n - (b + 1) * per))]).tocsr()))
    A_in, b_in = [], []
    for k in lay.up_rows:
        A_in.append(spread(lay.L[k]))
        b_in.append(query.upper[k])
    for k in lay.lo_rows:
        A_in.append(-spread(lay.L[k]))
        b_in.append(-query.lower[k])
    program = conic.ConeProgram(
        c=c, A_eq=sp.vstack(A_eq).tocsr(), b_eq=np.concatenate(b_eq),
        A_in=sp.vstack(A_in).tocsr() if A_in else sp.csr_matrix((0, n)),
        b_in=np.array(b_in, dtype=float), psd=psd)
    sol = conic.solve(program, tol)
    if sol.status == "infeasible":
        return _infeasible(sol.raw_status)
    if sol.status != "optimal":
        return _failure(sol.raw_status)

    t = query.t
    y_plus, y_minus = np.zeros(t), np.zeros(t)
    z_eq = sol.eq_duals[1:1 + len(lay.eq_rows)]
    for k, z in zip(lay.eq_rows, z_eq):
        y_plus[k], y_minus[k] = max(z, 0.0), max(-z, 0.0)
    m_up = len(lay.up_rows)
    for k, z in zip(lay.up_rows, sol.in_duals[:m_up]):
        y_plus[k] = max(z, 0.0)
    for k, z in zip(lay.lo_rows, sol.in_duals[m_up:]):
        y_minus[k] = max(z, 0.0)
    witness = DualCertificate(float(sol.eq_duals[0]), y_plus, y_minus,
                              tuple(conic.smat(z) for z in sol.psd_duals))
    g_dual = -sol.dual_objective
    return _finish(g_dual, -sol.primal_objective, witness, sol.raw_status,
                   query.guess_outcomes())


def guessing_probability_point(f_values, query: GPQuery, tol: float | None = None) -> GPResult:
    """Concave-hull guessing probability at the exact values ``f_values``."""
    v = np.asarray(f_values, dtype=float).reshape(-1)
    return guessing_probability_region(query.with_region(v, v), tol)


def solve_dual(query: GPQuery, tol: float | None = None) -> GPResult:
    """Solve the dual program directly, with explicit sum-of-squares blocks.

    Variables are ``y0``, the free multipliers of equality rows, ``y+`` and
    ``y-`` for the finite sides of proper intervals, and one svec-encoded
    positive semidefinite matrix per block.
    """
    lay = _layout(query)
    npa, nb, nv = lay.npa, len(lay.blocks), lay.npa.n_vars
    ns = npa.svec_map.shape[0]
    n_eq, n_up, n_lo = len(lay.eq_rows), len(lay.up_rows), len(lay.lo_rows)
    n_y = 1 + n_eq + n_up + n_lo
    n = n_y + nb * ns

    c = np.zeros(n)
    c[0] = 1.0
    c[1:1 + n_eq] = query.lower[lay.eq_rows]
    c[1 + n_eq:1 + n_eq + n_up] = query.upper[lay.up_rows]
    c[1 + n_eq + n_up:n_y] = -query.lower[lay.lo_rows]

    # y-part of the functional: column j of Y is the moment functional for y_j
    e0 = np.zeros(nv)
    e0[0] = 1.0
    Y = np.column_stack([e0] + [lay.L[k] for k in lay.eq_rows] + [lay.L[k] for k in lay.up_rows]
                        + [-lay.L[k] for k in lay.lo_rows])
    GT = npa.svec_map.T.tocsr()
    rows = []
    for b in range(nb):
        rows.append(sp.hstack([sp.csr_matrix(Y),
                               sp.csr_matrix((nv, b * ns)), -GT,
                               sp.csr_matrix((nv, (nb - b - 1) * ns))]))
    A_eq = sp.vstack(rows).tocsr()
    b_eq = np.concatenate(lay.P)
    psd = []
    for b in range(nb):
        sel = sp.csr_matrix((np.ones(ns), (np.arange(ns), n_y + b * ns + np.arange(ns))),
                            shape=(ns, n))
        psd.append(conic.PSDBlock(npa.dim, sel))
    program = conic.ConeProgram(c=c, A_eq=A_eq, b_eq=b_eq,
                                A_in=sp.csr_matrix((0, n)), b_in=np.zeros(0), psd=psd,
                                nonneg_vars=np.arange(1 + n_eq, n_y))
    sol = conic.solve(program, tol)
    if sol.status == "unbounded":
        return _infeasible(sol.raw_status)
    if sol.status == "infeasible":
        # the dual program always has the trivial point y0 = 1, y = 0
        return _failure(sol.raw_status)
    if sol.status != "optimal":
        return _failure(sol.raw_status)

    x = sol.x
    t = query.t
    y_plus, y_minus = np.zeros(t), np.zeros(t)
    for j, k in enumerate(lay.eq_rows):
        z = x[1 + j]
        y_plus[k], y_minus[k] = max(z, 0.0), max(-z, 0.0)
    for j, k in enumerate(lay.up_rows):
        y_plus[k] = max(x[1 + n_eq + j], 0.0)
    for j, k in enumerate(lay.lo_rows):
        y_minus[k] = max(x[1 + n_eq + n_up + j], 0.0)
    sos = tuple(conic.smat(x[n_y + b * ns:n_y + (b + 1) * ns]) for b in range(nb))
    witness = DualCertificate(float(x[0]), y_plus, y_minus, sos)
    return _finish(sol.primal_objective, sol.dual_objective, witness, sol.raw_status,
                   query.guess_outcomes())


def verify_certificate(query: GPQuery, witness: DualCertificate, tol: float = 1e-6) -> float:
    """Check a witness against ``query`` and return the guessing-probability bound it proves.

    Every block functional ``y0 u + y . f - e_b`` must match its Gram matrix
    within ``tol`` and every Gram matrix must have eigenvalues above
    ``-tol``; otherwise ``ValueError`` is raised.
    """
    lay = _layout(query)
    if len(witness.sos) != len(lay.blocks):
        raise ValueError("certificate has the wrong number of Gram matrices")
    if np.any(witness.y_plus < 0) or np.any(witness.y_minus < 0):
        raise ValueError("interval multipliers must be nonnegative")
    for k in range(query.t):
        if witness.y_plus[k] > tol and not math.isfinite(query.upper[k]):
            raise ValueError("multiplier on an unbounded side")
        if witness.y_minus[k] > tol and not math.isfinite(query.lower[k]):
            raise ValueError("multiplier on an unbounded side")
    e0 = np.zeros(lay.npa.n_vars)
    e0[0] = 1.0
    functional = witness.y0 * e0 + witness.y @ lay.L
    GT = lay.npa.svec_map.T
    for P, Z in zip(lay.P, witness.sos):
        resid = functional - P - GT @ conic.svec(Z)
        if np.max(np.abs(resid)) > tol:
            raise ValueError(f"Gram matrix residual {np.max(np.abs(resid)):.3g} exceeds tolerance")
        if np.linalg.eigvalsh(Z)[0] < -tol:
            raise ValueError("Gram matrix is not positive semidefinite")
    return witness.value(query.lower, query.upper)


def optimal_expression(p: Behavior, gen_inputs, level: int = 2,
                       guess_parties=ALL_PARTIES) -> tuple[BellExpression, GPResult]:
    """Optimal Bell expression for certifying randomness of ``p``.

    The full-behavior point query is posed over the eight correlators of a
    2x2x2x2 behavior; the dual solution ``(y0, y)`` is returned in standard
    form together with the solve result.
    """
    if p.scenario != CHSH_SCENARIO:
        raise ValueError("optimal expressions are built in the 2x2x2x2 correlator space")
    pi = InputDistribution.uniform(CHSH_SCENARIO)
    exprs = expression_set("g", pi)
    query = GPQuery.point(exprs, correlators(p, pi=pi), gen_inputs, level, guess_parties)
    res = solve_dual(query)
    if res.status == "numerical_failure":
        raise SolverError("optimal-expression solve failed", res.raw_status)
    if res.witness is None:
        return expression_from_correlators([0, 0, 0, 0], np.zeros(4), 1.0, label="I_p"), res
    y = res.witness.y
    expr = expression_from_correlators(y[:4], y[4:], res.witness.y0, pi=pi, label="I_p")
    return expr, res


def gamma_bound(f: BellExpression, pi: InputDistribution, level: int = 2) -> float:
    """Range constant of the estimator ``f(a,x)/pi(x)`` around quantum values."""
    pi.support_check(f)
    ratio = f.coeffs[:, pi.weights > 0] / pi.weights[pi.weights > 0]
    qmax = tsirelson_bound(f, level, "max")
    qmin = tsirelson_bound(f, level, "min")
    return float(max(ratio.max() - qmin, qmax - ratio.min()))


def eta_bound(scenario: Scenario, gen_inputs=None, level: int = 2, mode: str = "trivial",
              guess_parties=ALL_PARTIES) -> float:
    """Upper bound on the largest value the randomness bound can take.

    ``trivial`` returns ``log2`` of the number of guessed outcomes.  ``exact``
    minimizes the largest output probability ``p(a|x)`` over the normalized
    relaxation and returns ``-log2`` of it, which can only be smaller.
    """
    parties = tuple(range(scenario.parties)) if guess_parties is None else tuple(guess_parties)
    n_guess = math.prod(scenario.outputs[i] for i in parties)
    trivial = math.log2(n_guess)
    if mode == "trivial":
        return trivial
    if mode != "exact":
        raise ValueError("eta mode must be 'trivial' or 'exact'")
    gen = scenario.input_tuples() if gen_inputs is None else [tuple(x) for x in gen_inputs]
    npa = relaxation(scenario, level)
    nv = npa.n_vars
    # variables: moments then s; minimize s with P_b . m <= s
    rows = []
    for x in gen:
        xi = scenario.input_index(x)
        guesses = sorted({tuple(a[i] for i in parties) for a in scenario.output_tuples()})
        for g in guesses:
            sel = [ai * scenario.n_inputs + xi for ai, a in enumerate(scenario.output_tuples())
                   if tuple(a[i] for i in parties) == g]
            rows.append(np.concatenate([npa.prob_map[sel].sum(axis=0), [-1.0]]))
    ns = npa.svec_map.shape[0]
    n = nv + 1 + ns
    c = np.zeros(n)
    c[nv] = 1.0
    link, block = conic.lifted_psd(npa.svec_map, npa.dim, nv + 1, n)
    A_eq = sp.vstack([sp.csr_matrix(([1.0], ([0], [0])), shape=(1, n)), link]).tocsr()
    A_in = sp.hstack([sp.csr_matrix(np.array(rows)), sp.csr_matrix((len(rows), ns))]).tocsr()
    program = conic.ConeProgram(c=c, A_eq=A_eq, b_eq=np.concatenate([[1.0], np.zeros(ns)]),
                                A_in=A_in, b_in=np.zeros(len(rows)), psd=[block])
    sol = conic.solve(program)
    if sol.status != "optimal":
        raise SolverError("eta bound solve failed", sol.raw_status)
    # the dual value is a lower bound on min s, hence an upper bound on eta
    s = max(min(sol.dual_objective, sol.primal_objective), 1.0 / n_guess)
    return min(trivial, -math.log2(s))


def dumps(obj) -> str:
    return json.dumps(obj.to_dict(), sort_keys=True, indent=2) + "\n"
