"""Two-qubit device behaviors and seeded sampling of Bell-test data.

Random numbers come from numpy's Philox4x64 counter-based generator, so a
given seed yields the same stream on every platform.  Independent streams for
parallel tasks are derived with :func:`derive_seed`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scenario import (CHSH_SCENARIO, Behavior, FrequencyTable, InputDistribution,
                       Scenario)

I2 = np.eye(2)
SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1j], [1j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def rng_from_seed(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def derive_seed(master_seed: int, *task_index: int) -> int:
    """Deterministic child seed for task ``task_index`` of a campaign."""
    ss = np.random.SeedSequence([int(master_seed), *map(int, task_index)])
    return int(ss.generate_state(2, dtype=np.uint64).view(np.uint64)[0] >> np.uint64(1))


def projectors(observable: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outcome 0 is the +1 eigenspace, outcome 1 the -1 eigenspace."""
    return (np.eye(len(observable)) + observable) / 2, (np.eye(len(observable)) - observable) / 2


def behavior_from_operators(state: np.ndarray, alice: Sequence[np.ndarray],
                            bob: Sequence[np.ndarray]) -> Behavior:
    """Born-rule behavior of a pure two-qubit state and +-1 observables."""
    state = np.asarray(state, dtype=complex).reshape(4)
    state = state / np.linalg.norm(state)
    scenario = Scenario((len(alice), len(bob)), (2, 2))
    table = np.zeros(scenario.shape)
    pa = [projectors(A) for A in alice]
    pb = [projectors(B) for B in bob]
    for xi, (x1, x2) in enumerate(scenario.input_tuples()):
        for ai, (a1, a2) in enumerate(scenario.output_tuples()):
            op = np.kron(pa[x1][a1], pb[x2][a2])
            table[ai, xi] = float(np.real(np.vdot(state, op @ state)))
    table = np.clip(table, 0.0, None)
    table /= table.sum(axis=0, keepdims=True)
    return Behavior(scenario, table)


def qubit_observable(angle: float) -> np.ndarray:
    """``cos(angle) sigma_z + sin(angle) sigma_x``."""
    return math.cos(angle) * SZ + math.sin(angle) * SX


@dataclass(frozen=True, eq=False)
class QubitDevice:
    """Partially entangled qubit pair measured to maximally violate the tilted CHSH expression.

    The marginal-carrying setting ``A_0`` is ``sigma_z`` and ``A_1`` is
    ``sigma_x``; ``tan(mu) = sin(2 theta)``.
    """

    theta: float
    mu: float = field(init=False)
    observables: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.theta <= math.pi / 4 + 1e-15:
            raise ValueError("theta must lie in (0, pi/4]")
        mu = math.atan(math.sin(2 * self.theta))
        obs = (SZ, SX, qubit_observable(mu), qubit_observable(-mu))
        for o in obs:
            if not np.allclose(o @ o, I2, atol=1e-12):
                raise ValueError("observable does not square to identity")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "observables", obs)

    @property
    def state(self) -> np.ndarray:
        return np.array([math.cos(self.theta), 0.0, 0.0, math.sin(self.theta)])

    def behavior(self) -> Behavior:
        A0, A1, B0, B1 = self.observables
        return behavior_from_operators(self.state, [A0, A1], [B0, B1])


def extremal_behavior(theta: float) -> Behavior:
    return QubitDevice(theta).behavior()


def mix_with_noise(p: Behavior, v: float) -> Behavior:
    """``v p + (1 - v) u`` with ``u`` the uniform (white-noise) behavior."""
    if not 0.0 <= v <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    return p.mix(Behavior.uniform(p.scenario), v)


def reference_device(v: float = 0.99, theta: float = math.pi / 8) -> Behavior:
    """The simulated device of the numerical study (tilted-CHSH extremal point plus noise)."""
    return mix_with_noise(extremal_behavior(theta), v)


def biased_input_distribution(n: int, x_star=(1, 0), delta: float = 0.2, kappa: float = 1.5,
                              scenario: Scenario = CHSH_SCENARIO) -> InputDistribution:
    """``pi(x*) = 1 - kappa n^-delta``, the remaining mass spread evenly."""
    if n < 1 or delta < 0:
        raise ValueError("need n >= 1 and delta >= 0")
    rare = kappa * float(n) ** (-delta)
    if not 0.0 <= rare <= 1.0:
        raise ValueError(f"kappa * n^-delta = {rare} is not a probability")
    w = np.full(scenario.n_inputs, rare / (scenario.n_inputs - 1))
    w[scenario.input_index(x_star)] = 1.0 - rare
    return InputDistribution(scenario, w)


@dataclass(frozen=True, eq=False)
class Transcript:
    """Per-round joint inputs and outputs (integer-encoded) of an n-round run."""

    scenario: Scenario
    inputs: np.ndarray
    outputs: np.ndarray
    seed: object = None

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.int64)
        a = np.asarray(self.outputs, dtype=np.int64)
        if x.shape != a.shape or x.ndim != 1:
            raise ValueError("inputs and outputs must be equal-length sequences")
        if x.size and (x.min() < 0 or x.max() >= self.scenario.n_inputs
                       or a.min() < 0 or a.max() >= self.scenario.n_outputs):
            raise ValueError("transcript entry out of range")
        x.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", a)

    @property
    def n(self) -> int:
        return int(self.inputs.size)

    def frequency_table(self, pi: InputDistribution) -> FrequencyTable:
        return FrequencyTable.from_rounds(self.scenario, self.inputs, self.outputs, pi)


def sample_transcript(p: Behavior, pi: InputDistribution, n: int, seed=0) -> Transcript:
    """Draw ``n`` i.i.d. rounds: ``x ~ pi`` then ``a ~ p(.|x)``."""
    scenario = p.scenario
    rng = rng_from_seed(seed)
    x = rng.choice(scenario.n_inputs, size=n, p=pi.weights)
    cum = np.cumsum(p.table, axis=0)
    cum[-1, :] = 1.0
    u = rng.random(n)
    a = np.empty(n, dtype=np.int64)
    chunk = 1 << 20
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        a[start:stop] = (u[start:stop, None] >= cum[:, x[start:stop]].T).sum(axis=1)
    return Transcript(scenario, x, a, seed=seed if not isinstance(seed, np.random.Generator) else None)


def sample_counts(p: Behavior, pi: InputDistribution, n: int, seed=0) -> FrequencyTable:
    """Multinomial draw of the count table ``#(a, x)`` in work independent of ``n``.

    Cells are visited in flat ``(a, x)`` order and each count is drawn from a
    binomial conditional on the rounds left; the result has the same law as
    counting an i.i.d. transcript.
    """
    n = int(n)
    if n < 0 or n >= 2**63:
        raise ValueError("n must fit in a signed 64-bit integer")
    rng = rng_from_seed(seed)
    cells = (p.table * pi.weights[None, :]).ravel()
    counts = np.zeros(cells.size, dtype=np.int64)
    support = np.flatnonzero(cells > 0)
    remaining = n
    mass = float(cells[support].sum())
    for i in support[:-1]:
        if remaining == 0:
            break
        q = float(cells[i])
        draw = int(rng.binomial(remaining, min(1.0, q / mass)))
        counts[i] = draw
        remaining -= draw
        mass -= q
    counts[support[-1]] += remaining
    return FrequencyTable(p.scenario, counts.reshape(p.scenario.shape), pi)
