"""Experiment documents: a JSON mirror of the protocol configuration.

Every field is validated before any computation starts and unknown keys are
rejected.  A minimal document::

    {"n": 100000, "expressions": {"set": "chsh"}, "gen_inputs": "all",
     "thresholds": [10.0]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .guessing import ALL_PARTIES
from .protocol import XR_CHOICES, ProtocolConfig, build_expressions
from .quantum import biased_input_distribution, reference_device
from .scenario import CHSH_SCENARIO, BellExpression, InputDistribution, Scenario


class ConfigError(ValueError):
    pass


_DEVICE_KEYS = {"visibility", "theta"}
_PI_KEYS = {"kind", "x_star", "delta", "kappa", "weights"}
_EXT_KEYS = {"m", "eps_ext"}


@dataclass(frozen=True)
class ExperimentDocument:
    n: int
    expressions: dict
    thresholds: tuple[float, ...]
    gen_inputs: object = "all"
    inputs: tuple[int, ...] = (2, 2)
    outputs: tuple[int, ...] = (2, 2)
    device: dict = field(default_factory=lambda: {"visibility": 0.99, "theta": math.pi / 8})
    input_distribution: dict = field(default_factory=lambda: {"kind": "uniform"})
    level: int = 2
    epsilon: float = 1e-6
    eps_prime: float = 1e-6
    split_policy: str = "even"
    directions: tuple[str, ...] | None = None
    gammas: tuple[float, ...] | None = None
    eta_mode: str = "trivial"
    guess_parties: tuple[int, ...] | None = None
    gp_method: str = "dual"
    extractor: dict = field(default_factory=lambda: {"m": None, "eps_ext": 1e-6})
    seed: int = 0
    output_dir: str = "."
    figures: tuple[int, ...] = ()

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentDocument":
        if not isinstance(doc, dict):
            raise ConfigError("experiment document must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
        for required in ("n", "expressions", "thresholds"):
            if required not in doc:
                raise ConfigError(f"missing required field {required!r}")
        kw = dict(doc)
        for key in ("thresholds", "inputs", "outputs", "directions", "gammas", "guess_parties",
                    "figures"):
            if kw.get(key) is not None:
                if not isinstance(kw[key], list):
                    raise ConfigError(f"field {key!r} must be a list")
                kw[key] = tuple(kw[key])
        if isinstance(kw.get("gen_inputs"), list):
            kw["gen_inputs"] = tuple(tuple(x) for x in kw["gen_inputs"])
        try:
            out = cls(**kw)
            out.validate()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return out

    @classmethod
    def load(cls, path) -> "ExperimentDocument":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    # -- validation and translation ------------------------------------------------

    @property
    def scenario(self) -> Scenario:
        return Scenario(tuple(self.inputs), tuple(self.outputs))

    def validate(self) -> None:
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.n >= 2**63:
            raise ConfigError("n must fit in a signed 64-bit integer")
        if not set(self.device) <= _DEVICE_KEYS:
            raise ConfigError(f"device accepts only {sorted(_DEVICE_KEYS)}")
        if not set(self.input_distribution) <= _PI_KEYS:
            raise ConfigError(f"input_distribution accepts only {sorted(_PI_KEYS)}")
        if not set(self.extractor) <= _EXT_KEYS:
            raise ConfigError(f"extractor accepts only {sorted(_EXT_KEYS)}")
        if not set(self.expressions) <= {"set", "list"} or len(self.expressions) != 1:
            raise ConfigError("expressions must hold exactly one of 'set' or 'list'")
        if any(fig not in (1, 2, 4, 5, 6) for fig in self.figures):
            raise ConfigError("figures must be drawn from 1, 2, 4, 5, 6")
        # building the protocol configuration runs every remaining check
        self.protocol_config()

    def input_dist(self) -> InputDistribution:
        spec = self.input_distribution
        kind = spec.get("kind", "uniform")
        if kind == "uniform":
            return InputDistribution.uniform(self.scenario)
        if kind == "biased":
            return biased_input_distribution(self.n, tuple(spec.get("x_star", (1, 0))),
                                             float(spec.get("delta", 0.2)),
                                             float(spec.get("kappa", 1.5)), self.scenario)
        if kind == "explicit":
            return InputDistribution(self.scenario, np.asarray(spec["weights"], dtype=float))
        raise ConfigError(f"unknown input distribution kind {kind!r}")

    def gen_input_tuples(self) -> tuple[tuple[int, ...], ...]:
        g = self.gen_inputs
        if isinstance(g, str):
            if g not in XR_CHOICES:
                raise ConfigError(f"gen_inputs must be a list of inputs or one of {sorted(XR_CHOICES)}")
            if g == "all":
                return tuple(self.scenario.input_tuples())
            return XR_CHOICES[g]
        out = tuple(tuple(x) for x in g)
        for x in out:
            if len(x) != len(self.inputs) or any(not 0 <= v < k for v, k in zip(x, self.inputs)):
                raise ConfigError(f"gen_inputs entry {list(x)} is not an input of the scenario")
        return out

    def build_expressions(self, pi: InputDistribution):
        spec = self.expressions
        if "set" in spec:
            if self.scenario != CHSH_SCENARIO:
                raise ConfigError("named expression sets need the 2x2x2x2 scenario")
            return build_expressions(spec["set"], pi, float(self.device.get("theta", math.pi / 8)))
        exprs = []
        for i, item in enumerate(spec["list"]):
            if set(item) - {"label", "coeffs"}:
                raise ConfigError(f"expression {i}: only 'label' and 'coeffs' are allowed")
            exprs.append(BellExpression(self.scenario, np.asarray(item["coeffs"], dtype=float),
                                        item.get("label", f"f{i}")))
        return exprs, None

    def protocol_config(self) -> ProtocolConfig:
        pi = self.input_dist()
        exprs, default_dirs = self.build_expressions(pi)
        directions = self.directions if self.directions is not None else None
        policy = self.split_policy
        if policy == "one_sided" and directions is None:
            directions = default_dirs
        return ProtocolConfig(
            scenario=self.scenario, gen_inputs=self.gen_input_tuples(), pi=pi,
            expressions=tuple(exprs), n=self.n, thresholds=self.thresholds,
            epsilon=self.epsilon, eps_prime=self.eps_prime, level=self.level,
            gammas=self.gammas, split_policy=policy, directions=directions,
            eta_mode=self.eta_mode,
            guess_parties=ALL_PARTIES if self.guess_parties is None else self.guess_parties,
            ext_m=self.extractor.get("m"), eps_ext=float(self.extractor.get("eps_ext", 1e-6)),
            seed=self.seed, gp_method=self.gp_method)

    def device_behavior(self):
        return reference_device(float(self.device.get("visibility", 0.99)),
                            float(self.device.get("theta", math.pi / 8)))
