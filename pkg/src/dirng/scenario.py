"""Bell scenarios, behaviors, Bell expressions and observed frequency tables.

Indexing convention
-------------------
A joint input ``x = (x_1, ..., x_k)`` is flattened row-major with party 1
outermost, and likewise for a joint output ``a``.  Behaviors, expressions and
count tables are stored as ``(|A|, |X|)`` arrays so that ``table[a, x]`` is the
entry for the output/input pair ``(a, x)``; the flat vector form is
``table.ravel()`` (output index outermost).

Constant terms of an expression are absorbed into the coefficients through the
normalization expression ``u(a, x) = delta(x, x0)`` with ``x0 = (0, ..., 0)``
unless another reference input is requested.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12


class ScenarioMismatch(ValueError):
    """Raised when objects defined on different scenarios are combined."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Scenario:
    """Input and output alphabet sizes for ``k`` separated boxes."""

    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(v) for v in self.inputs))
        object.__setattr__(self, "outputs", tuple(int(v) for v in self.outputs))
        if len(self.inputs) < 1 or len(self.inputs) != len(self.outputs):
            raise ValueError("need one input and one output count per party")
        if min(self.inputs) < 1 or min(self.outputs) < 1:
            raise ValueError("alphabet sizes must be at least 1")

    @classmethod
    def bipartite(cls, inputs: int = 2, outputs: int = 2) -> "Scenario":
        return cls((inputs, inputs), (outputs, outputs))

    @property
    def parties(self) -> int:
        return len(self.inputs)

    @property
    def n_inputs(self) -> int:
        return math.prod(self.inputs)

    @property
    def n_outputs(self) -> int:
        return math.prod(self.outputs)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_outputs, self.n_inputs)

    def input_tuples(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(m) for m in self.inputs)))

    def output_tuples(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(d) for d in self.outputs)))

    def input_index(self, x: Sequence[int] | int) -> int:
        if isinstance(x, (int, np.integer)):
            if not 0 <= x < self.n_inputs:
                raise IndexError(f"joint input {x} out of range")
            return int(x)
        return int(np.ravel_multi_index(tuple(x), self.inputs))

    def output_index(self, a: Sequence[int] | int) -> int:
        if isinstance(a, (int, np.integer)):
            if not 0 <= a < self.n_outputs:
                raise IndexError(f"joint output {a} out of range")
            return int(a)
        return int(np.ravel_multi_index(tuple(a), self.outputs))

    def tensor_shape(self) -> tuple[int, ...]:
        """Shape of a table reshaped to ``(a_1, ..., a_k, x_1, ..., x_k)``."""
        return self.outputs + self.inputs


CHSH_SCENARIO = Scenario((2, 2), (2, 2))


def _check_same(*scenarios: Scenario) -> Scenario:
    first = scenarios[0]
    for other in scenarios[1:]:
        if other != first:
            raise ScenarioMismatch(f"scenario mismatch: {first} vs {other}")
    return first


@dataclass(frozen=True, eq=False)
class Behavior:
    """Normalized conditional distribution ``p(a|x)``."""

    scenario: Scenario
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float).reshape(self.scenario.shape)
        if not np.all(np.isfinite(table)):
            raise ValueError("behavior entries must be finite")
        if table.min() < -NORMALIZATION_TOL:
            raise ValueError("behavior has negative probabilities")
        sums = table.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > NORMALIZATION_TOL:
            raise ValueError(f"behavior is not normalized (column sums {sums})")
        object.__setattr__(self, "table", _frozen(table))

    @property
    def probs(self) -> np.ndarray:
        return self.table.ravel()

    def prob(self, a, x) -> float:
        return float(self.table[self.scenario.output_index(a), self.scenario.input_index(x)])

    @classmethod
    def uniform(cls, scenario: Scenario) -> "Behavior":
        return cls(scenario, np.full(scenario.shape, 1.0 / scenario.n_outputs))

    @classmethod
    def deterministic(cls, scenario: Scenario, strategy) -> "Behavior":
        """Local deterministic behavior; ``strategy[i][x_i]`` is party i's output."""
        table = np.zeros(scenario.shape)
        for xi, x in enumerate(scenario.input_tuples()):
            a = tuple(strategy[i][x[i]] for i in range(scenario.parties))
            table[scenario.output_index(a), xi] = 1.0
        return cls(scenario, table)

    def mix(self, other: "Behavior", weight: float) -> "Behavior":
        """``weight * self + (1 - weight) * other``."""
        _check_same(self.scenario, other.scenario)
        return Behavior(self.scenario, weight * self.table + (1.0 - weight) * other.table)

    def __repr__(self):
        return f"Behavior({self.scenario}, {self.table.tolist()})"


@dataclass(frozen=True, eq=False)
class BellExpression:
    """Coefficient table ``f(a, x)`` defining the linear form ``f[p]``."""

    scenario: Scenario
    coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(self.scenario.shape)
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("Bell expression coefficients must be finite")
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    @property
    def vector(self) -> np.ndarray:
        return self.coeffs.ravel()

    def __call__(self, p) -> float:
        return bell_value(self, p)

    def __add__(self, other: "BellExpression") -> "BellExpression":
        _check_same(self.scenario, other.scenario)
        return BellExpression(self.scenario, self.coeffs + other.coeffs,
                              f"({self.label} + {other.label})")

    def __sub__(self, other: "BellExpression") -> "BellExpression":
        return self + (-1.0) * other

    def __mul__(self, scale: float) -> "BellExpression":
        return BellExpression(self.scenario, float(scale) * self.coeffs,
                              f"{scale:g}*{self.label}" if self.label else "")

    __rmul__ = __mul__

    def __neg__(self) -> "BellExpression":
        return (-1.0) * self

    def relabel(self, label: str) -> "BellExpression":
        return BellExpression(self.scenario, self.coeffs, label)

    def same_coefficients(self, other: "BellExpression", atol: float = 0.0) -> bool:
        return self.scenario == other.scenario and np.allclose(
            self.coeffs, other.coeffs, rtol=0.0, atol=atol)

    def __repr__(self):
        return f"BellExpression({self.label!r}, {self.scenario})"


@dataclass(frozen=True, eq=False)
class InputDistribution:
    """Per-round distribution ``pi(x)`` over joint inputs."""

    scenario: Scenario
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(self.scenario.n_inputs)
        if w.min() < 0 or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("input weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, scenario: Scenario) -> "InputDistribution":
        return cls(scenario, np.full(scenario.n_inputs, 1.0 / scenario.n_inputs))

    def __getitem__(self, x) -> float:
        return float(self.weights[self.scenario.input_index(x)])

    def marginal(self, party: int) -> np.ndarray:
        """Distribution of party ``party``'s own input."""
        w = self.weights.reshape(self.scenario.inputs)
        other = tuple(i for i in range(self.scenario.parties) if i != party)
        return w.sum(axis=other)

    def conditional_other(self, party: int) -> np.ndarray:
        """Bipartite weights ``pi(x_other | x_party)`` as a matrix ``[x_party, x_other]``."""
        if self.scenario.parties != 2:
            raise ValueError("conditional weights are defined for two parties")
        w = self.weights.reshape(self.scenario.inputs)
        if party == 1:
            w = w.T
        marg = w.sum(axis=1, keepdims=True)
        if np.any(marg == 0):
            raise ValueError(f"party {party} has an input with zero probability")
        return w / marg

    def support_check(self, f: BellExpression) -> None:
        used = np.any(f.coeffs != 0, axis=0)
        if np.any(used & (self.weights <= 0)):
            raise ValueError(
                f"expression {f.label!r} has nonzero coefficients on a zero-probability input")


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    """Counts ``#(a, x)`` over ``n`` rounds together with the input distribution used."""

    scenario: Scenario
    counts: np.ndarray
    pi: InputDistribution

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError("counts must be integers")
        counts = counts.astype(np.int64).reshape(self.scenario.shape)
        if counts.min() < 0:
            raise ValueError("counts must be nonnegative")
        _check_same(self.scenario, self.pi.scenario)
        object.__setattr__(self, "counts", _frozen(counts))

    @property
    def n(self) -> int:
        # Python ints: exact for any n representable in the cells.
        return sum(int(c) for c in self.counts.ravel())

    def input_counts(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def frequencies(self) -> np.ndarray:
        """Observed frequencies ``#(a,x) / (n pi(x))``; not a normalized behavior in general."""
        n = self.n
        with np.errstate(divide="ignore", invalid="ignore"):
            freq = self.counts / (float(n) * self.pi.weights[None, :])
        freq[:, self.pi.weights == 0] = 0.0
        return freq

    @classmethod
    def from_rounds(cls, scenario: Scenario, inputs: Iterable[int], outputs: Iterable[int],
                    pi: InputDistribution) -> "FrequencyTable":
        x = np.asarray(inputs if isinstance(inputs, np.ndarray) else list(inputs), dtype=np.int64)
        a = np.asarray(outputs if isinstance(outputs, np.ndarray) else list(outputs),
                       dtype=np.int64)
        flat = a * scenario.n_inputs + x
        counts = np.bincount(flat, minlength=scenario.n_outputs * scenario.n_inputs)
        return cls(scenario, counts.reshape(scenario.shape), pi)


def bell_value(f: BellExpression, p) -> float:
    """``f[p] = sum_{a,x} f(a,x) p(a|x)``; ``p`` may be a Behavior or a raw table."""
    if isinstance(p, Behavior):
        _check_same(f.scenario, p.scenario)
        table = p.table
    else:
        table = np.asarray(p, dtype=float).reshape(f.scenario.shape)
    return float(np.sum(f.coeffs * table))


def normalization_expression(scenario: Scenario, x0=None) -> BellExpression:
    """``u(a, x) = delta(x, x0)``, equal to 1 on every normalized behavior."""
    coeffs = np.zeros(scenario.shape)
    coeffs[:, scenario.input_index(x0 if x0 is not None else 0)] = 1.0
    return BellExpression(scenario, coeffs, "u")


def probability_expression(scenario: Scenario, a, x) -> BellExpression:
    """``e_{a,x}`` with ``e_{a,x}[p] = p(a|x)``."""
    coeffs = np.zeros(scenario.shape)
    ai, xi = scenario.output_index(a), scenario.input_index(x)
    coeffs[ai, xi] = 1.0
    return BellExpression(scenario, coeffs, f"p({ai}|{xi})")


# ---------------------------------------------------------------------------
# Correlators for two parties with binary outputs


def _require_binary_bipartite(scenario: Scenario) -> None:
    if scenario.parties != 2 or scenario.outputs != (2, 2):
        raise ValueError("correlators need two parties with binary outputs")


def _signs(scenario: Scenario):
    a = np.array(scenario.output_tuples())
    return (-1.0) ** a[:, 0], (-1.0) ** a[:, 1]


def marginal_correlator(party: int, setting: int, pi: InputDistribution | None = None,
                        scenario: Scenario = CHSH_SCENARIO) -> BellExpression:
    """``<A_x1>`` (party 0) or ``<B_x2>`` (party 1) with conditional input weights."""
    scenario = pi.scenario if pi is not None else scenario
    _require_binary_bipartite(scenario)
    pi = pi if pi is not None else InputDistribution.uniform(scenario)
    sign = _signs(scenario)[party]
    weights = pi.conditional_other(party)
    coeffs = np.zeros(scenario.shape)
    for xi, x in enumerate(scenario.input_tuples()):
        if x[party] == setting:
            coeffs[:, xi] = sign * weights[setting, x[1 - party]]
    name = "AB"[party]
    return BellExpression(scenario, coeffs, f"<{name}{setting}>")


def joint_correlator(x1: int, x2: int, scenario: Scenario = CHSH_SCENARIO) -> BellExpression:
    _require_binary_bipartite(scenario)
    sa, sb = _signs(scenario)
    coeffs = np.zeros(scenario.shape)
    coeffs[:, scenario.input_index((x1, x2))] = sa * sb
    return BellExpression(scenario, coeffs, f"<A{x1}B{x2}>")


def expression_from_correlators(marginal_coeffs: Sequence[float], joint_coeffs,
                                constant: float = 0.0, pi: InputDistribution | None = None,
                                label: str = "", x0=None,
                                scenario: Scenario = CHSH_SCENARIO) -> BellExpression:
    """Translate ``constant + sum c_i <A_i> + sum d_j <B_j> + sum e_ij <A_i B_j>``.

    ``marginal_coeffs`` lists Alice's settings then Bob's; ``joint_coeffs`` is
    row-major over ``(x1, x2)`` (or a matrix).
    """
    scenario = pi.scenario if pi is not None else scenario
    _require_binary_bipartite(scenario)
    pi = pi if pi is not None else InputDistribution.uniform(scenario)
    m1, m2 = scenario.inputs
    marginal_coeffs = np.asarray(marginal_coeffs, dtype=float)
    joint = np.asarray(joint_coeffs, dtype=float).reshape(m1, m2)
    if marginal_coeffs.shape != (m1 + m2,):
        raise ValueError(f"expected {m1 + m2} marginal coefficients")
    coeffs = np.zeros(scenario.shape)
    for x1 in range(m1):
        if marginal_coeffs[x1]:
            coeffs += marginal_coeffs[x1] * marginal_correlator(0, x1, pi).coeffs
    for x2 in range(m2):
        if marginal_coeffs[m1 + x2]:
            coeffs += marginal_coeffs[m1 + x2] * marginal_correlator(1, x2, pi).coeffs
    for x1 in range(m1):
        for x2 in range(m2):
            coeffs += joint[x1, x2] * joint_correlator(x1, x2, scenario).coeffs
    if constant:
        coeffs += constant * normalization_expression(scenario, x0).coeffs
    return BellExpression(scenario, coeffs, label)


def correlators(p, scenario: Scenario = CHSH_SCENARIO,
                pi: InputDistribution | None = None) -> np.ndarray:
    """Read back ``(<A_0>, .., <B_0>, .., <A_0 B_0>, ..)`` from a behavior or table."""
    if isinstance(p, Behavior):
        scenario = p.scenario
    pi = pi if pi is not None else InputDistribution.uniform(scenario)
    m1, m2 = scenario.inputs
    exprs = [marginal_correlator(0, i, pi) for i in range(m1)]
    exprs += [marginal_correlator(1, j, pi) for j in range(m2)]
    exprs += [joint_correlator(i, j, scenario) for i in range(m1) for j in range(m2)]
    return np.array([bell_value(f, p) for f in exprs])


def correlator_coefficients(f: BellExpression) -> tuple[float, np.ndarray, np.ndarray]:
    """Recover ``(constant, marginal, joint)`` such that f agrees with them on no-signaling behaviors.

    The expression is probed on the affinely independent family of
    no-signaling behaviors obtained by switching on one correlator at a time
    around the uniform behavior.
    """
    scenario = f.scenario
    _require_binary_bipartite(scenario)
    m1, m2 = scenario.inputs
    k = m1 + m2 + m1 * m2
    base = f(_behavior_from_correlators(np.zeros(k), scenario))
    probe = np.empty(k)
    for i in range(k):
        c = np.zeros(k)
        c[i] = 0.5
        probe[i] = (f(_behavior_from_correlators(c, scenario)) - base) / 0.5
    return base, probe[: m1 + m2], probe[m1 + m2:].reshape(m1, m2)


def _behavior_from_correlators(c: np.ndarray, scenario: Scenario) -> np.ndarray:
    m1, m2 = scenario.inputs
    A, B, E = c[:m1], c[m1:m1 + m2], c[m1 + m2:].reshape(m1, m2)
    sa, sb = _signs(scenario)
    table = np.zeros(scenario.shape)
    for xi, (x1, x2) in enumerate(scenario.input_tuples()):
        table[:, xi] = (1 + sa * A[x1] + sb * B[x2] + sa * sb * E[x1, x2]) / 4
    return table


def chsh_variant(y1: int, y2: int, scenario: Scenario = CHSH_SCENARIO) -> BellExpression:
    """``sum_{x1,x2} (-1)^((x1+y1)(x2+y2)) <A_x1 B_x2>``."""
    if y1 not in (0, 1) or y2 not in (0, 1):
        raise ValueError("CHSH variant indices must be bits")
    if scenario != CHSH_SCENARIO:
        raise ValueError("CHSH variants are defined on the 2x2x2x2 scenario")
    joint = [(-1) ** ((x1 + y1) * (x2 + y2)) for x1 in (0, 1) for x2 in (0, 1)]
    label = "CHSH" if (y1, y2) == (0, 0) else f"CHSH{y1}{y2}"
    return expression_from_correlators([0, 0, 0, 0], joint, label=label)


def chsh() -> BellExpression:
    return chsh_variant(0, 0)


def tilted_beta(theta: float) -> float:
    """Tilt parameter matched to the partially entangled state of angle ``theta``."""
    s = math.sin(2 * theta)
    return 2 * math.cos(2 * theta) / math.sqrt(1 + s * s)


def tilted_chsh(beta: float, pi: InputDistribution | None = None) -> BellExpression:
    """``beta <A_0> + <A_0 B_0> + <A_0 B_1> + <A_1 B_0> - <A_1 B_1>``."""
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    return expression_from_correlators([beta, 0, 0, 0], [1, 1, 1, -1], pi=pi,
                                       label=f"I1beta({beta:.6g})")


def expression_set(name: str, pi: InputDistribution | None = None) -> list[BellExpression]:
    """The 2x2x2x2 families used in the numerical study.

    ``e``: the 16 single probabilities; ``g``: the 8 correlators;
    ``h``: the 4 marginal correlators followed by the 4 CHSH variants.
    """
    pi = pi if pi is not None else InputDistribution.uniform(CHSH_SCENARIO)
    if name == "e":
        return [probability_expression(CHSH_SCENARIO, a, x)
                for a in range(4) for x in range(4)]
    marg = [marginal_correlator(0, 0, pi), marginal_correlator(0, 1, pi),
            marginal_correlator(1, 0, pi), marginal_correlator(1, 1, pi)]
    if name == "g":
        return marg + [joint_correlator(x1, x2) for x1 in (0, 1) for x2 in (0, 1)]
    if name == "h":
        return marg + [chsh_variant(y1, y2) for y1 in (0, 1) for y2 in (0, 1)]
    raise ValueError(f"unknown expression set {name!r}")


# Reported optimal expressions for the simulated device, correlator form
# (constant, <A0>, <A1>, <B0>, <B1>, <A0B0>, <A0B1>, <A1B0>, <A1B1>).
IP_COEFFS = (10.610, -1.859, -1.733, 0.499, -2.196, -3.109, -2.945, -2.610, 4.343)
IP_ALL_COEFFS = (3.131, 0.126, 0.0, -0.428, -0.428, -0.673, -0.673, -1.002, 1.002)


def from_coefficient_list(coeffs: Sequence[float], pi: InputDistribution | None = None,
                          label: str = "", x0=None) -> BellExpression:
    """Build an expression from a 9-entry correlator coefficient list (constant first)."""
    c = list(coeffs)
    if len(c) != 9:
        raise ValueError("expected 9 correlator coefficients")
    return expression_from_correlators(c[1:5], c[5:9], c[0], pi=pi, label=label, x0=x0)


def signaling_norm(data) -> float:
    """Largest violation of no-signaling in a frequency table or behavior.

    For each party ``i`` the marginal obtained by summing out ``a_i`` must not
    depend on ``x_i``; the returned value is the largest spread of such a
    marginal across ``x_i``.
    """
    if isinstance(data, FrequencyTable):
        table, scenario = data.frequencies(), data.scenario
    else:
        table, scenario = data.table, data.scenario
    k = scenario.parties
    t = table.reshape(scenario.tensor_shape())
    worst = 0.0
    for i in range(k):
        marg = t.sum(axis=i)
        # remaining axes: outputs of other parties, then all k inputs; x_i sits at k-1+i
        xi_axis = (k - 1) + i
        spread = marg.max(axis=xi_axis) - marg.min(axis=xi_axis)
        worst = max(worst, float(spread.max()) if spread.size else 0.0)
    return worst
