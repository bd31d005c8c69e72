"""Independent oracles built from explicit two-qubit strategies.

Nothing here touches the relaxation code: behaviors come straight from the
Born rule and are optimized with scipy.
"""

import math

import numpy as np
from scipy.optimize import minimize

from dirng.scenario import CHSH_SCENARIO, chsh

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def obs(angle):
    return math.cos(angle) * SZ + math.sin(angle) * SX


def qubit_table(params) -> np.ndarray:
    """Behavior table for ``cos t|00> + sin t|11>`` and x-z plane observables.

    ``params = (t, a0, a1, b0, b1)``.
    """
    t, a0, a1, b0, b1 = params
    psi = np.array([math.cos(t), 0.0, 0.0, math.sin(t)])
    A = [obs(a0), obs(a1)]
    B = [obs(b0), obs(b1)]
    table = np.zeros(CHSH_SCENARIO.shape)
    for xi, (x1, x2) in enumerate(CHSH_SCENARIO.input_tuples()):
        for ai, (o1, o2) in enumerate(CHSH_SCENARIO.output_tuples()):
            pa = (np.eye(2) + (-1) ** o1 * A[x1]) / 2
            pb = (np.eye(2) + (-1) ** o2 * B[x2]) / 2
            table[ai, xi] = psi @ np.kron(pa, pb) @ psi
    return table


def flip_outputs(table: np.ndarray) -> np.ndarray:
    """Relabel both parties' outputs; correlators stay, marginals change sign."""
    out = np.empty_like(table)
    for ai, (o1, o2) in enumerate(CHSH_SCENARIO.output_tuples()):
        out[CHSH_SCENARIO.output_index((1 - o1, 1 - o2))] = table[ai]
    return out


def chsh_attack(S: float, starts: int = 4, seed: int = 0) -> tuple[float, float]:
    """Eve mixes a qubit strategy with its output-flipped copy.

    She bets on Alice's output of input 0 being 0 in the first component and
    1 in the second; the mixture has CHSH value ``S`` and unbiased marginals.
    Returns the achieved guessing probability and the CHSH value attained.
    """
    f = chsh()
    rng = np.random.default_rng(seed)
    x00 = CHSH_SCENARIO.input_index((0, 0))
    zero = [CHSH_SCENARIO.output_index((0, 0)), CHSH_SCENARIO.output_index((0, 1))]

    def guess(p):
        return qubit_table(p)[zero, x00].sum()

    cons = {"type": "eq", "fun": lambda p: f(qubit_table(p)) - S}
    best, best_s = 0.0, math.nan
    for _ in range(starts):
        x0 = rng.uniform(-math.pi, math.pi, 5)
        res = minimize(lambda p: -guess(p), x0, constraints=[cons], method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 500})
        if res.success and abs(f(qubit_table(res.x)) - S) < 1e-9 and -res.fun > best:
            best, best_s = -res.fun, f(qubit_table(res.x))
    return best, best_s


def qubit_maximum(f, starts: int = 20, seed: int = 0) -> float:
    """Largest value of ``f`` found over two-qubit strategies (a lower bound on the optimum)."""
    rng = np.random.default_rng(seed)
    best = -math.inf
    for _ in range(starts):
        res = minimize(lambda p: -f(qubit_table(p)), rng.uniform(-math.pi, math.pi, 5),
                       method="BFGS", options={"gtol": 1e-12})
        best = max(best, -res.fun)
    return best


def random_qubit_strategy(rng):
    """Random pure two-qubit state and random projective qubit measurements."""
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)

    def projector_pair():
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        P = np.outer(v, v.conj())
        return [P, np.eye(2) - P]

    alice = [projector_pair() for _ in range(2)]
    bob = [projector_pair() for _ in range(2)]
    return psi, alice, bob
