"""Outer semidefinite relaxations of the unnormalized bipartite quantum cone.

Operators are the outcome projectors ``P^i_{a|x}`` of each party with the last
outcome of every input eliminated through ``sum_a P_{a|x} = 1``.  A monomial is
a pair of reduced words (one per party, since the parties commute); within a
word two adjacent projectors on the same input either merge (same outcome) or
annihilate (different outcomes).  Moments are taken real, so a word and its
adjoint share one variable.  Variable 0 is always ``<1>``, the trace of the
unnormalized behavior.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import conic
from .scenario import BellExpression, Scenario, ScenarioMismatch

Letter = tuple[int, int]  # (input, outcome)
Word = tuple[Letter, ...]
Monomial = tuple[Word, Word]

IDENTITY: Monomial = ((), ())


class SolverError(RuntimeError):
    """A conic solve did not reach optimality."""

    def __init__(self, message: str, status: str):
        super().__init__(message)
        self.status = status


def reduce_word(word: Sequence[Letter]) -> Word | None:
    """Apply idempotence and orthogonality; ``None`` means the word is zero."""
    out: list[Letter] = []
    for letter in word:
        if out and out[-1][0] == letter[0]:
            if out[-1][1] != letter[1]:
                return None
            continue
        out.append(letter)
    return tuple(out)


def canonical(mono: Monomial) -> Monomial | None:
    a, b = reduce_word(mono[0]), reduce_word(mono[1])
    if a is None or b is None:
        return None
    return (a, b)


def moment_key(mono: Monomial) -> Monomial:
    """Key shared by a monomial and its adjoint (real moments)."""
    adj = (mono[0][::-1], mono[1][::-1])
    return min(mono, adj)


def _words(letters: list[Letter], length: int) -> list[Word]:
    if length == 0:
        return [()]
    out = []
    for w in itertools.product(letters, repeat=length):
        if all(w[i][0] != w[i + 1][0] for i in range(length - 1)):
            out.append(tuple(w))
    return out


@dataclass(frozen=True, eq=False)
class NpaStructure:
    """Moment-matrix layout for one relaxation level.

    ``entry_map[i, j]`` holds the moment variable id of ``<S_i^dag S_j>`` or -1
    when the product vanishes; ``prob_map`` is the linear map from moment
    variables to the flat behavior vector ``p(a|x)``.
    """

    scenario: Scenario
    level: int
    basis: tuple[Monomial, ...]
    entry_map: np.ndarray
    moments: tuple[Monomial, ...]
    prob_map: np.ndarray
    svec_map: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def n_vars(self) -> int:
        return len(self.moments)

    def moment_id(self, mono: Monomial) -> int:
        c = canonical(mono)
        if c is None:
            raise ValueError("monomial is zero")
        return self._ids[moment_key(c)]

    def gamma(self, m: np.ndarray) -> np.ndarray:
        """Moment matrix for the variable vector ``m``."""
        m = np.concatenate([np.asarray(m, dtype=float), [0.0]])
        return m[self.entry_map]

    def behavior_vector(self, m: np.ndarray) -> np.ndarray:
        return self.prob_map @ np.asarray(m, dtype=float)

    def dump(self) -> str:
        """Plain-text listing of the basis and entry map."""
        lines = [f"npa-structure v1 inputs={','.join(map(str, self.scenario.inputs))} "
                 f"outputs={','.join(map(str, self.scenario.outputs))} level={self.level} "
                 f"dim={self.dim} vars={self.n_vars}"]
        for i, mono in enumerate(self.basis):
            lines.append(f"basis {i} {format_monomial(mono)}")
        for k, mono in enumerate(self.moments):
            lines.append(f"var {k} {format_monomial(mono)}")
        for i in range(self.dim):
            lines.append("row " + " ".join(str(v) for v in self.entry_map[i]))
        return "\n".join(lines) + "\n"


def format_monomial(mono: Monomial) -> str:
    if mono == IDENTITY:
        return "1"
    parts = [f"A{x}|{a}" for x, a in mono[0]] + [f"B{x}|{a}" for x, a in mono[1]]
    return "*".join(parts)


def _letters(inputs: int, outputs: int) -> list[Letter]:
    return [(x, a) for x in range(inputs) for a in range(outputs - 1)]


def build_relaxation(scenario: Scenario, level: int = 2) -> NpaStructure:
    if scenario.parties != 2:
        raise ValueError("relaxations are implemented for two parties only")
    if level not in (1, 2, 3):
        raise ValueError("supported relaxation levels are 1, 2 and 3")
    la = _letters(scenario.inputs[0], scenario.outputs[0])
    lb = _letters(scenario.inputs[1], scenario.outputs[1])

    basis: list[Monomial] = []
    seen = set()
    for total in range(level + 1):
        for na in range(total, -1, -1):
            for wa in _words(la, na):
                for wb in _words(lb, total - na):
                    mono = (wa, wb)
                    if mono not in seen:
                        seen.add(mono)
                        basis.append(mono)

    ids: dict[Monomial, int] = {moment_key(IDENTITY): 0}
    moments: list[Monomial] = [IDENTITY]
    dim = len(basis)
    entry = np.full((dim, dim), -1, dtype=np.int64)
    for i, (ai, bi) in enumerate(basis):
        for j, (aj, bj) in enumerate(basis):
            prod = canonical((ai[::-1] + aj, bi[::-1] + bj))
            if prod is None:
                continue
            key = moment_key(prod)
            if key not in ids:
                ids[key] = len(moments)
                moments.append(key)
            entry[i, j] = ids[key]

    n_vars = len(moments)
    prob_map = np.zeros((scenario.n_outputs * scenario.n_inputs, n_vars))
    da, db = scenario.outputs
    for xi, (x1, x2) in enumerate(scenario.input_tuples()):
        for ai, (a1, a2) in enumerate(scenario.output_tuples()):
            row = ai * scenario.n_inputs + xi
            for wa, ca in _projector_terms(x1, a1, da):
                for wb, cb in _projector_terms(x2, a2, db):
                    key = moment_key((wa, wb))
                    if key not in ids:
                        raise RuntimeError(f"moment {key} missing from the relaxation")
                    prob_map[row, ids[key]] += ca * cb

    svec_idx = conic.svec_index(dim)
    rows, cols, vals = [], [], []
    for j in range(dim):
        for i in range(j + 1):
            k = entry[i, j]
            if k < 0:
                continue
            rows.append(svec_idx[i, j])
            cols.append(k)
            vals.append(1.0 if i == j else conic.SQRT2)
    svec_map = sp.csr_matrix((vals, (rows, cols)), shape=(dim * (dim + 1) // 2, n_vars))

    entry.setflags(write=False)
    prob_map.setflags(write=False)
    structure = NpaStructure(scenario, level, tuple(basis), entry, tuple(moments),
                             prob_map, svec_map)
    object.__setattr__(structure, "_ids", ids)
    return structure


def _projector_terms(x: int, a: int, outputs: int) -> list[tuple[Word, float]]:
    if a < outputs - 1:
        return [(((x, a),), 1.0)]
    return [((), 1.0)] + [(((x, b),), -1.0) for b in range(outputs - 1)]


_CACHE: dict[tuple[Scenario, int], NpaStructure] = {}


def relaxation(scenario: Scenario, level: int = 2) -> NpaStructure:
    """Cached :func:`build_relaxation`."""
    key = (scenario, level)
    if key not in _CACHE:
        _CACHE[key] = build_relaxation(scenario, level)
    return _CACHE[key]


def embed_expression(npa: NpaStructure, f: BellExpression) -> np.ndarray:
    """Functional ``L`` over moment variables with ``L . m = f[p(m)]``."""
    if f.scenario != npa.scenario:
        raise ScenarioMismatch("expression and relaxation use different scenarios")
    return f.vector @ npa.prob_map


def tsirelson_bound(f: BellExpression, level: int = 2, direction: str = "max") -> float:
    """Optimum of ``f[p]`` over the normalized level-``level`` relaxation."""
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    npa = relaxation(f.scenario, level)
    L = embed_expression(npa, f)
    sign = -1.0 if direction == "max" else 1.0
    nv, ns = npa.n_vars, npa.svec_map.shape[0]
    n = nv + ns
    link, block = conic.lifted_psd(npa.svec_map, npa.dim, nv, n)
    e0 = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, n))
    program = conic.ConeProgram(
        c=np.concatenate([sign * L, np.zeros(ns)]), A_eq=sp.vstack([e0, link]).tocsr(),
        b_eq=np.concatenate([[1.0], np.zeros(ns)]),
        A_in=sp.csr_matrix((0, n)), b_in=np.zeros(0), psd=[block])
    sol = conic.solve(program)
    if sol.status != "optimal":
        raise SolverError(f"Tsirelson bound solve failed ({sol.raw_status})", sol.raw_status)
    # the dual value bounds the optimum from the safe side
    return sign * sol.dual_objective


def moments_from_strategy(npa: NpaStructure, state: np.ndarray,
                          alice: Sequence[Sequence[np.ndarray]],
                          bob: Sequence[Sequence[np.ndarray]]) -> tuple[np.ndarray, float]:
    """Exact moment vector of a quantum strategy on ``H_A (x) H_B``.

    ``alice[x][a]`` are Alice's projectors (all outcomes).  Returns the moment
    vector and the largest disagreement between matrix entries that share a
    variable id (zero for a consistent structure).
    """
    state = np.asarray(state, dtype=complex).ravel()
    dA = alice[0][0].shape[0]
    dB = bob[0][0].shape[0]

    def word_op(word: Word, ops, d):
        out = np.eye(d, dtype=complex)
        for x, a in word:
            out = out @ ops[x][a]
        return out

    gamma = np.zeros((npa.dim, npa.dim))
    for i, (ai, bi) in enumerate(npa.basis):
        Si = np.kron(word_op(ai, alice, dA), word_op(bi, bob, dB))
        for j, (aj, bj) in enumerate(npa.basis):
            Sj = np.kron(word_op(aj, alice, dA), word_op(bj, bob, dB))
            gamma[i, j] = np.real(np.vdot(Si @ state, Sj @ state))
    m = np.zeros(npa.n_vars)
    count = np.zeros(npa.n_vars)
    for (i, j), k in np.ndenumerate(npa.entry_map):
        if k >= 0:
            m[k] += gamma[i, j]
            count[k] += 1
    m /= np.maximum(count, 1)
    mismatch = float(np.max(np.abs(npa.gamma(m) - np.where(npa.entry_map >= 0, gamma, 0.0))))
    zero_viol = float(np.max(np.abs(np.where(npa.entry_map < 0, gamma, 0.0))))
    return m, max(mismatch, zero_viol)
