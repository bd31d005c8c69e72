"""Bell estimators and Azuma-Hoeffding confidence regions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import BellExpression, FrequencyTable, ScenarioMismatch


@dataclass(frozen=True, eq=False)
class EpsilonBudget:
    """Per-expression error probabilities for the upper and lower sides."""

    eps_plus: np.ndarray
    eps_minus: np.ndarray
    policy: str = "even"

    def __post_init__(self):
        ep = np.asarray(self.eps_plus, dtype=float).reshape(-1)
        em = np.asarray(self.eps_minus, dtype=float).reshape(-1)
        if ep.shape != em.shape or ep.size == 0:
            raise ValueError("budget needs one (eps+, eps-) pair per expression")
        if np.any(ep < 0) or np.any(em < 0) or np.any(ep > 1) or np.any(em > 1):
            raise ValueError("epsilons must lie in [0, 1]")
        if ep.sum() + em.sum() <= 0:
            raise ValueError("total epsilon must be positive")
        object.__setattr__(self, "eps_plus", ep)
        object.__setattr__(self, "eps_minus", em)

    @property
    def t(self) -> int:
        return self.eps_plus.size

    @property
    def total(self) -> float:
        return float(math.fsum(self.eps_plus) + math.fsum(self.eps_minus))

    def to_dict(self) -> dict:
        return {"eps_plus": self.eps_plus.tolist(), "eps_minus": self.eps_minus.tolist(),
                "policy": self.policy}


@dataclass(frozen=True, eq=False)
class ConfidenceRegion:
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float
    n: int

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("confidence region needs lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, values) -> bool:
        v = np.asarray(values, dtype=float)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def to_dict(self) -> dict:
        enc = lambda v: ("inf" if v > 0 else "-inf") if math.isinf(v) else float(v)
        return {"lower": [enc(v) for v in self.lower], "upper": [enc(v) for v in self.upper],
                "epsilon": self.epsilon, "n": int(self.n)}


def estimate(f: BellExpression, freq: FrequencyTable) -> float:
    """``sum_{a,x} f(a,x) #(a,x) / (n pi(x))``."""
    if f.scenario != freq.scenario:
        raise ScenarioMismatch("expression and data use different scenarios")
    freq.pi.support_check(f)
    n = freq.n
    if n == 0:
        raise ValueError("no rounds recorded")
    w = freq.pi.weights
    used = w > 0
    # integer counts can exceed 2^53; summing in float is then the only option anyway
    terms = f.coeffs[:, used] * freq.counts[:, used].astype(float) / w[used]
    return float(math.fsum(terms.ravel()) / n)


def estimate_all(expressions: Sequence[BellExpression], freq: FrequencyTable) -> np.ndarray:
    return np.array([estimate(f, freq) for f in expressions])


def deviation(gamma: float, epsilon_side: float, n: int) -> float:
    """Azuma-Hoeffding half-width ``gamma sqrt(2 ln(1/eps) / n)``."""
    if gamma <= 0 or not 0 < epsilon_side <= 1 or n < 1:
        raise ValueError("need gamma > 0, 0 < eps <= 1 and n >= 1")
    return gamma * math.sqrt(2.0 * math.log(1.0 / epsilon_side) / n)


def confidence_region(estimates, gammas, budget: EpsilonBudget, n: int) -> ConfidenceRegion:
    est = np.asarray(estimates, dtype=float).reshape(-1)
    gam = np.asarray(gammas, dtype=float).reshape(-1)
    if est.shape != gam.shape or est.size != budget.t:
        raise ValueError("estimates, gammas and budget must have equal lengths")
    lower = np.full(est.size, -np.inf)
    upper = np.full(est.size, np.inf)
    for k in range(est.size):
        if budget.eps_plus[k] > 0:
            upper[k] = est[k] + deviation(gam[k], budget.eps_plus[k], n)
        if budget.eps_minus[k] > 0:
            lower[k] = est[k] - deviation(gam[k], budget.eps_minus[k], n)
    return ConfidenceRegion(lower, upper, budget.total, n)


def split_budget(epsilon_total: float, t: int, policy: str = "even",
                 directions: Sequence[str] | None = None) -> EpsilonBudget:
    """Share ``epsilon_total`` between the ``2t`` sides.

    ``one_sided`` takes one direction per expression: ``"lower"`` keeps only
    the lower bound (``eps+ = 0``), ``"upper"`` only the upper bound and
    ``"both"`` keeps both sides.
    """
    if epsilon_total <= 0 or t < 1:
        raise ValueError("need a positive epsilon and t >= 1")
    if policy == "even":
        share = epsilon_total / (2 * t)
        return EpsilonBudget(np.full(t, share), np.full(t, share), "even")
    if policy != "one_sided":
        raise ValueError(f"unknown split policy {policy!r}")
    if not directions:
        raise ValueError("one_sided policy needs a direction per expression")
    if len(directions) != t:
        raise ValueError("one direction per expression is required")
    plus = np.array([d in ("upper", "both") for d in directions], dtype=float)
    minus = np.array([d in ("lower", "both") for d in directions], dtype=float)
    if any(d not in ("lower", "upper", "both") for d in directions):
        raise ValueError("directions must be 'lower', 'upper' or 'both'")
    share = epsilon_total / (plus.sum() + minus.sum())
    return EpsilonBudget(plus * share, minus * share, "one_sided")
