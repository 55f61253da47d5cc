"""Weight distributions for cascade environments.

Every family is normalized so that E X = 1 holds analytically:

* ``lognormal(beta)``: X = exp(beta Z - beta^2 / 2) with Z standard normal.
* ``two_point(a, p)``: X = a with probability p, else b = (1 - p a)/(1 - p).
  E X = p a + (1 - p) b = 1 by construction; both support points positive.
* ``deterministic()``: X = 1, the no-disorder control.

The quantity that decides the regime is the disorder parameter E[X ln X],
compared against the branching rate ln 2 of the binary tree: strictly below
is weak disorder (the cascade mass martingale has a positive limit), at or
above is strong disorder (the limit vanishes).  Equality is the critical
point.  Closed forms (Gaussian tilt identity for the lognormal family):

    E[X ln X]      lognormal: beta^2 / 2     two-point: p a ln a + (1-p) b ln b
    E[X (ln X)^2]  lognormal: beta^2 + beta^4 / 4
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, DegenerateDisorderError
from .rng import bits_for_counters, uniform_open01

LN2 = math.log(2.0)

# Equality with ln 2 is decided on the analytic parameter value; Monte Carlo
# can never certify the critical point.
CLASSIFY_TOL = 1e-12


class Regime(enum.Enum):
    WEAK = "weak"
    CRITICAL = "critical"
    STRONG = "strong"


@dataclass(frozen=True)
class DisorderSpec:
    """The law of one cascade weight.  Construct via the factory functions."""

    kind: str
    beta: float | None = None
    a: float | None = None
    p: float | None = None

    def __post_init__(self):
        if self.kind == "lognormal":
            if self.beta is None or not (self.beta > 0) or not math.isfinite(self.beta):
                raise ConfigError("lognormal family needs beta > 0")
        elif self.kind == "twopoint":
            if self.a is None or self.p is None:
                raise ConfigError("two-point family needs a and p")
            if not (0.0 < self.a < 1.0) or not (0.0 < self.p < 1.0):
                raise ConfigError("two-point family needs a in (0,1) and p in (0,1)")
        elif self.kind == "deterministic":
            if self.beta is not None or self.a is not None or self.p is not None:
                raise ConfigError("deterministic family takes no parameters")
        else:
            raise ConfigError(f"unknown disorder kind {self.kind!r}")

    @property
    def b(self) -> float:
        """Upper support point of the two-point family."""
        if self.kind != "twopoint":
            raise ConfigError("b is defined only for the two-point family")
        return (1.0 - self.p * self.a) / (1.0 - self.p)

    # -- serialization (the JSON shape used by config files and CLI flags) --

    def to_json_dict(self) -> dict:
        if self.kind == "lognormal":
            return {"kind": "lognormal", "beta": self.beta}
        if self.kind == "twopoint":
            return {"kind": "twopoint", "a": self.a, "p": self.p}
        return {"kind": "deterministic"}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DisorderSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ConfigError("disorder spec must be an object with a 'kind' field")
        kind = obj["kind"]
        extra = set(obj) - {"kind", "beta", "a", "p"}
        if extra:
            raise ConfigError(f"unknown disorder spec fields: {sorted(extra)}")
        return cls(kind=kind, beta=obj.get("beta"), a=obj.get("a"), p=obj.get("p"))

    # -- sampling transform used by the weight oracle --

    def log_weights_from_bits(self, bits: np.ndarray) -> np.ndarray:
        """ln X per 64-bit word, vectorized; the only bits->weight mapping."""
        if self.kind == "deterministic":
            return np.zeros(bits.shape, dtype=np.float64)
        u = uniform_open01(bits)
        if self.kind == "lognormal":
            z = ndtri(u)
            z *= self.beta
            z -= 0.5 * self.beta * self.beta
            return z
        out = np.where(u < self.p, math.log(self.a), math.log(self.b))
        return out


def lognormal(beta: float) -> DisorderSpec:
    return DisorderSpec(kind="lognormal", beta=float(beta))


def two_point(a: float, p: float) -> DisorderSpec:
    return DisorderSpec(kind="twopoint", a=float(a), p=float(p))


def deterministic() -> DisorderSpec:
    return DisorderSpec(kind="deterministic")


def mean_weight(spec: DisorderSpec) -> float:
    """E X; identically 1 for every family, by construction."""
    return 1.0


def disorder_parameter(spec: DisorderSpec) -> float:
    """E[X ln X], the quantity compared against the branching rate ln 2."""
    if spec.kind == "lognormal":
        return 0.5 * spec.beta * spec.beta
    if spec.kind == "twopoint":
        a, p, b = spec.a, spec.p, spec.b
        return p * a * math.log(a) + (1.0 - p) * b * math.log(b)
    return 0.0


def second_log_moment(spec: DisorderSpec) -> float:
    """E[X (ln X)^2] in closed form per family."""
    if spec.kind == "lognormal":
        b2 = spec.beta * spec.beta
        return b2 + 0.25 * b2 * b2
    if spec.kind == "twopoint":
        a, p, b = spec.a, spec.p, spec.b
        return p * a * math.log(a) ** 2 + (1.0 - p) * b * math.log(b) ** 2
    return 0.0


def sigma_squared(spec: DisorderSpec) -> float:
    """Var of ln X under the size-biased law: E[X (ln X)^2] - (E[X ln X])^2."""
    if spec.kind == "lognormal":
        return spec.beta * spec.beta
    m1 = disorder_parameter(spec)
    return second_log_moment(spec) - m1 * m1


def classify(spec: DisorderSpec) -> Regime:
    """Weak / critical / strong by comparing E[X ln X] to ln 2 analytically."""
    param = disorder_parameter(spec)
    if abs(param - LN2) <= CLASSIFY_TOL:
        return Regime.CRITICAL
    return Regime.WEAK if param < LN2 else Regime.STRONG


def critical_beta() -> float:
    """The lognormal parameter at which E[X ln X] = ln 2: sqrt(2 ln 2)."""
    return math.sqrt(2.0 * LN2)


def seneta_heyde_constant(spec: DisorderSpec) -> float:
    """sqrt(2 / (pi sigma^2)), the limit of sqrt(k) Z_k / D_k at criticality."""
    s2 = sigma_squared(spec)
    if not s2 > 0.0:
        raise DegenerateDisorderError(
            "Seneta-Heyde constant requires sigma^2 > 0; "
            f"{spec.kind} disorder is degenerate"
        )
    return math.sqrt(2.0 / (math.pi * s2))


def sample_weights(spec: DisorderSpec, seed: int, count: int, offset: int = 0) -> np.ndarray:
    """``count`` i.i.d. weights from the counter stream (distribution tests)."""
    counters = np.arange(offset, offset + count, dtype=np.uint64)
    return np.exp(spec.log_weights_from_bits(bits_for_counters(seed, counters)))
