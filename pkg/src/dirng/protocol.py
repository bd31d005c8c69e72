"""End-to-end randomness certification: estimate, bound, penalize, threshold, extract."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import estimation
from .guessing import (ALL_PARTIES, DualCertificate, GPQuery, GPResult, eta_bound, gamma_bound,
                       guessing_probability_region, solve_dual)
from .quantum import (Transcript, biased_input_distribution, derive_seed, reference_device,
                      rng_from_seed, sample_counts, sample_transcript)
from .scenario import (CHSH_SCENARIO, IP_ALL_COEFFS, IP_COEFFS, Behavior, BellExpression,
                       FrequencyTable, InputDistribution, Scenario, chsh, expression_set,
                       from_coefficient_list, tilted_beta, tilted_chsh)

log = logging.getLogger(__name__)

DEFAULT_EPS_EXT = 1e-6


@dataclass(frozen=True, eq=False)
class ProtocolConfig:
    """Every argument of the protocol, fixed before any data is seen."""

    scenario: Scenario
    gen_inputs: tuple[tuple[int, ...], ...]
    pi: InputDistribution
    expressions: tuple[BellExpression, ...]
    n: int
    thresholds: tuple[float, ...]
    epsilon: float = 1e-6
    eps_prime: float = 1e-6
    level: int = 2
    gammas: tuple[float, ...] | None = None
    split_policy: str = "even"
    directions: tuple[str, ...] | None = None
    eta_mode: str = "trivial"
    guess_parties: tuple[int, ...] | None = ALL_PARTIES
    ext_m: int | None = None
    eps_ext: float = DEFAULT_EPS_EXT
    seed: int = 0
    gp_method: str = "dual"

    def __post_init__(self):
        object.__setattr__(self, "gen_inputs", tuple(tuple(x) for x in self.gen_inputs))
        object.__setattr__(self, "expressions", tuple(self.expressions))
        object.__setattr__(self, "thresholds", tuple(float(h) for h in self.thresholds))
        if not self.gen_inputs or not self.expressions:
            raise ValueError("gen_inputs and expressions must be nonempty")
        if self.pi.scenario != self.scenario or any(f.scenario != self.scenario
                                                    for f in self.expressions):
            raise ValueError("scenario mismatch inside the configuration")
        if int(self.n) < 1:
            raise ValueError("n must be positive")
        th = self.thresholds
        if not th or any(h <= 0 for h in th) or any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be positive and strictly increasing")
        if not 0 < self.epsilon < 1 or not 0 < self.eps_prime < 1 or not 0 < self.eps_ext < 1:
            raise ValueError("security parameters must lie in (0, 1)")
        if self.gammas is not None:
            object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
            if len(self.gammas) != len(self.expressions) or min(self.gammas) <= 0:
                raise ValueError("one positive gamma per expression is required")
        if self.directions is not None:
            object.__setattr__(self, "directions", tuple(self.directions))
        if self.gp_method not in ("dual", "region"):
            raise ValueError("gp_method must be 'dual' or 'region'")
        if self.eta_mode not in ("trivial", "exact"):
            raise ValueError("eta_mode must be 'trivial' or 'exact'")
        for x in self.gen_inputs:
            self.scenario.input_index(x)

    @property
    def t(self) -> int:
        return len(self.expressions)

    def budget(self) -> estimation.EpsilonBudget:
        return estimation.split_budget(self.epsilon, self.t, self.split_policy,
                                       self.directions)

    def resolved_gammas(self) -> tuple[float, ...]:
        if self.gammas is not None:
            return self.gammas
        return tuple(gamma_bound(f, self.pi, self.level) for f in self.expressions)

    def eta(self) -> float:
        return eta_bound(self.scenario, self.gen_inputs, self.level, self.eta_mode,
                         self.guess_parties)


@dataclass(frozen=True, eq=False)
class Certificate:
    n: int
    f_hat: np.ndarray
    region: estimation.ConfidenceRegion
    g: float
    H_of_V: float
    nu: int
    eta: float
    score: float
    threshold_index: int | None
    hmin_bound: float | None
    epsilon: float
    eps_prime: float
    status: str  # pass | abort | solver_failure
    gp_status: str
    witness: DualCertificate | None = field(default=None, repr=False)
    gammas: tuple[float, ...] = ()
    thresholds: tuple[float, ...] = ()

    @property
    def rate(self) -> float:
        return self.score / self.n

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "f_hat": [float(v) for v in self.f_hat],
            "gammas": list(self.gammas),
            "region": self.region.to_dict(),
            "g": float(self.g),
            "H_of_V": float(self.H_of_V),
            "nu": int(self.nu),
            "eta": float(self.eta),
            "score": float(self.score),
            "rate": float(self.rate),
            "thresholds": list(self.thresholds),
            "threshold_index": self.threshold_index,
            "hmin_bound": self.hmin_bound,
            "epsilon": self.epsilon,
            "eps_prime": self.eps_prime,
            "status": self.status,
            "gp_status": self.gp_status,
            "witness": None if self.witness is None else self.witness.to_dict(),
        }


def count_non_generating(inputs, gen_inputs, scenario: Scenario = CHSH_SCENARIO) -> int:
    """Number of rounds whose (flat) input lies outside ``gen_inputs``."""
    gen = np.zeros(scenario.n_inputs, dtype=bool)
    for x in gen_inputs:
        gen[scenario.input_index(x)] = True
    x = np.asarray(inputs, dtype=np.int64)
    return int(np.count_nonzero(~gen[x]))


def _non_generating_from_counts(freq: FrequencyTable, gen_inputs) -> int:
    gen = {freq.scenario.input_index(x) for x in gen_inputs}
    per_input = freq.counts.sum(axis=0)
    return sum(int(c) for xi, c in enumerate(per_input) if xi not in gen)


def _solve(config: ProtocolConfig, region: estimation.ConfidenceRegion) -> GPResult:
    query = GPQuery(config.expressions, region.lower, region.upper, config.gen_inputs,
                    config.level, config.guess_parties)
    if config.gp_method == "dual":
        res = solve_dual(query)
        if res.status != "numerical_failure":
            return res
        log.info("dual solve failed (%s); retrying with the primal-dual solve", res.raw_status)
    return guessing_probability_region(query)


def certify(config: ProtocolConfig, data: Transcript | FrequencyTable,
            gammas: Sequence[float] | None = None, eta: float | None = None) -> Certificate:
    """Run steps 2 to 4 of the protocol on recorded data."""
    if isinstance(data, Transcript):
        freq = data.frequency_table(config.pi)
        nu = count_non_generating(data.inputs, config.gen_inputs, config.scenario)
    else:
        freq = data
        if freq.scenario != config.scenario:
            raise ValueError("data scenario does not match the configuration")
        if not np.allclose(freq.pi.weights, config.pi.weights, rtol=0, atol=1e-15):
            raise ValueError("data were recorded under a different input distribution")
        nu = _non_generating_from_counts(freq, config.gen_inputs)
    n = freq.n
    if n != int(config.n):
        raise ValueError(f"data hold {n} rounds, configuration expects {config.n}")

    gam = tuple(gammas) if gammas is not None else config.resolved_gammas()
    eta = config.eta() if eta is None else eta
    f_hat = estimation.estimate_all(config.expressions, freq)
    region = estimation.confidence_region(f_hat, gam, config.budget(), n)
    res = _solve(config, region)
    if res.status == "numerical_failure":
        return Certificate(n, f_hat, region, 1.0, 0.0, nu, eta, -nu * eta, None, None,
                           config.epsilon, config.eps_prime, "solver_failure", res.status,
                           None, gam, config.thresholds)
    score = n * res.h - nu * eta
    reached = [i for i, h in enumerate(config.thresholds) if h <= score]
    if reached:
        idx = reached[-1]
        hmin = config.thresholds[idx] - math.log2(1.0 / config.eps_prime)
        status = "pass"
    else:
        idx, hmin, status = None, None, "abort"
    return Certificate(n, f_hat, region, res.g, res.h, nu, eta, score, idx, hmin,
                       config.epsilon, config.eps_prime, status, res.status, res.witness,
                       gam, config.thresholds)


def recompute_score(cert: Certificate) -> float:
    """Score implied by the logged witness, region, penalty count and eta."""
    if cert.witness is None:
        return -cert.nu * cert.eta
    g = min(1.0, cert.witness.value(cert.region.lower, cert.region.upper))
    return cert.n * max(0.0, -math.log2(g)) - cert.nu * cert.eta


# ---------------------------------------------------------------------------
# Extraction


def raw_bits(transcript: Transcript, gen_inputs) -> np.ndarray:
    """Outputs of generating rounds written as fixed-width binary, most significant bit first."""
    scenario = transcript.scenario
    gen = np.zeros(scenario.n_inputs, dtype=bool)
    for x in gen_inputs:
        gen[scenario.input_index(x)] = True
    outs = transcript.outputs[gen[transcript.inputs]]
    width = max(1, math.ceil(math.log2(scenario.n_outputs)))
    shifts = np.arange(width - 1, -1, -1)
    return ((outs[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def max_output_length(hmin_bound: float, eps_ext: float = DEFAULT_EPS_EXT) -> int:
    return max(0, math.floor(hmin_bound - 2 * math.log2(1.0 / eps_ext)))


def toeplitz_hash(bits: np.ndarray, m: int, seed) -> np.ndarray:
    """``T s mod 2`` for the m x N Toeplitz matrix drawn from ``seed``."""
    s = np.asarray(bits, dtype=np.uint8).ravel()
    N = s.size
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    if N == 0:
        raise ValueError("cannot hash an empty string to a nonempty output")
    diag = rng_from_seed(seed).integers(0, 2, size=m + N - 1, dtype=np.uint8)
    # T[i, j] = diag[i - j + N - 1]; the product is a slice of a full convolution
    conv = fftconvolve(diag.astype(float), s.astype(float))[N - 1:N - 1 + m]
    out = np.rint(conv)
    if np.max(np.abs(conv - out), initial=0.0) > 0.25:
        out = np.array([int(np.dot(diag[i:i + N][::-1].astype(np.int64), s)) for i in range(m)],
                       dtype=float)
    return (out.astype(np.int64) & 1).astype(np.uint8)


def extract(raw: np.ndarray, hmin_bound: float, m: int | None = None,
            eps_ext: float = DEFAULT_EPS_EXT, seed=0) -> np.ndarray:
    """Hash the raw string to ``m`` nearly uniform bits (leftover-hash sizing)."""
    limit = max_output_length(hmin_bound, eps_ext)
    m = limit if m is None else int(m)
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m > limit:
        raise ValueError(f"m={m} exceeds hmin - 2 log2(1/eps_ext) = {limit}")
    return toeplitz_hash(raw, m, seed)


# ---------------------------------------------------------------------------
# Campaigns

XR_CHOICES = {"all": tuple(CHSH_SCENARIO.input_tuples()), "10": ((1, 0),), "00": ((0, 0),)}
SINGLE_SETS = {"chsh": "lower", "tilted": "lower", "I_p": "upper", "I_p_all": "upper"}
SET_NAMES = ("chsh", "tilted", "I_p", "I_p_all", "e", "g", "h")


def build_expressions(name: str, pi: InputDistribution,
                      theta: float = math.pi / 8) -> tuple[list[BellExpression], tuple | None]:
    """Expressions of a named set and the one-sided directions used for it (or ``None``)."""
    if name == "chsh":
        exprs = [chsh()]
    elif name == "tilted":
        exprs = [tilted_chsh(tilted_beta(theta), pi)]
    elif name == "I_p":
        exprs = [from_coefficient_list(IP_COEFFS, pi, "I_p", x0=(1, 0))]
    elif name == "I_p_all":
        exprs = [from_coefficient_list(IP_ALL_COEFFS, pi, "I_p_all", x0=(1, 0))]
    elif name in ("e", "g", "h"):
        return expression_set(name, pi), None
    else:
        raise ValueError(f"unknown expression set {name!r}")
    return exprs, (SINGLE_SETS[name],)


@dataclass(frozen=True)
class CampaignSpec:
    """Device and protocol parameters shared by every cell of a campaign."""

    visibility: float = 0.99
    theta: float = math.pi / 8
    x_star: tuple[int, int] = (1, 0)
    delta: float = 0.2
    kappa: float = 1.5
    epsilon: float = 1e-6
    eps_prime: float = 1e-6
    level: int = 2
    eta_mode: str = "trivial"
    split_policy: str = "even"
    master_seed: int = 0
    transcript_max_n: int = 10**5


@dataclass(frozen=True)
class CampaignCell:
    n: int
    expression_set: str
    xr: str
    repetition: int
    seed: int


CSV_COLUMNS = ("n", "expression_set", "xr", "repetition", "f_hat", "H_of_V", "nu", "score",
               "rate", "status")


def _config_for(spec: CampaignSpec, cell: CampaignCell) -> ProtocolConfig:
    pi = biased_input_distribution(cell.n, spec.x_star, spec.delta, spec.kappa)
    exprs, directions = build_expressions(cell.expression_set, pi, spec.theta)
    policy = "one_sided" if directions is not None else spec.split_policy
    return ProtocolConfig(CHSH_SCENARIO, XR_CHOICES[cell.xr], pi, exprs, cell.n,
                          thresholds=(1.0,), epsilon=spec.epsilon, eps_prime=spec.eps_prime,
                          level=spec.level, split_policy=policy, directions=directions,
                          eta_mode=spec.eta_mode, seed=cell.seed)


def run_cell(spec: CampaignSpec, cell: CampaignCell, device: Behavior | None = None) -> dict:
    device = device if device is not None else reference_device(spec.visibility, spec.theta)
    row = {"n": cell.n, "expression_set": cell.expression_set, "xr": cell.xr,
           "repetition": cell.repetition}
    try:
        config = _config_for(spec, cell)
        if cell.n <= spec.transcript_max_n:
            data = sample_transcript(device, config.pi, cell.n, cell.seed)
        else:
            data = sample_counts(device, config.pi, cell.n, cell.seed)
        cert = certify(config, data)
    except Exception as exc:  # a failed cell is recorded, the campaign goes on
        log.warning("campaign cell %s failed: %s", cell, exc)
        row.update(f_hat="", H_of_V=math.nan, nu=-1, score=math.nan, rate=math.nan,
                   penalty=math.nan, status=f"error:{type(exc).__name__}")
        return row
    row.update(f_hat=";".join(repr(float(v)) for v in cert.f_hat), H_of_V=cert.H_of_V,
               nu=cert.nu, score=cert.score, rate=cert.rate, penalty=cert.nu * cert.eta / cert.n,
               status=cert.status)
    return row


def campaign_cells(spec: CampaignSpec, n_grid, expression_sets, xr_choices,
                   repetitions: int) -> list[CampaignCell]:
    cells = []
    for i, n in enumerate(n_grid):
        for j, name in enumerate(expression_sets):
            for k, xr in enumerate(xr_choices):
                if xr not in XR_CHOICES:
                    raise ValueError(f"unknown xr choice {xr!r}")
                for r in range(repetitions):
                    seed = derive_seed(spec.master_seed, i, j, k, r)
                    cells.append(CampaignCell(int(n), name, xr, r, seed))
    return cells


def _run_cell_args(args):
    return run_cell(*args)


def run_campaign(spec: CampaignSpec, n_grid, expression_sets, xr_choices,
                 repetitions: int = 1, jobs: int = 1) -> list[dict]:
    """Sample and certify every grid cell; rows come back in grid order."""
    cells = campaign_cells(spec, n_grid, expression_sets, xr_choices, repetitions)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_args, [(spec, c) for c in cells], chunksize=1))
    else:
        rows = [run_cell(spec, c) for c in cells]
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """First-repetition rate with the min/max band per (n, set, xr)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["n"], row["expression_set"], row["xr"]), []).append(row)
    out = []
    for (n, name, xr), members in groups.items():
        members.sort(key=lambda r: r["repetition"])
        rates = [r["rate"] for r in members if not math.isnan(r["rate"])]
        out.append({"n": n, "expression_set": name, "xr": xr,
                    "rate_first": members[0]["rate"],
                    "rate_min": min(rates) if rates else math.nan,
                    "rate_max": max(rates) if rates else math.nan,
                    "penalty_first": members[0].get("penalty", math.nan),
                    "repetitions": len(members)})
    return out


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[dict], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()
