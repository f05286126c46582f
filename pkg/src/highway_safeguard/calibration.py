"""Importance-sampling re-weighting of aggressive-traffic results.

Episodes are generated under an intentionally aggressive proposal
distribution over driver parameters.  Weighting each episode's outcome
by the ratio of naturalistic to proposal density recovers the collision
rate the naturalistic traffic would produce.

The naturalistic model is configurable; the shipped default uses
documented mild intervals per parameter.  Absolute re-weighted rates
depend entirely on that configuration, and with the full per-vehicle
parameter vector in the ratio they shrink rapidly as episodes get
denser; the estimator itself is exact either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .traffic import PARAM_FIELDS, SpawnConfig

V_INIT = "v_init"
COMPONENT_FIELDS = PARAM_FIELDS + (V_INIT,)

# Mild per-parameter intervals for the default naturalistic model; each
# spans from the aggressive region out to an everyday value so that the
# aggressive proposal remains inside its support.
DEFAULT_NATURALISTIC_INTERVALS: dict[str, tuple[float, float]] = {
    "T": (0.3, 2.0),
    "a": (0.5, 2.0),
    "b": (1.0, 3.0),
    "x_dot_0": (22.0, 35.0),
    "g0": (0.2, 3.0),
    "p": (0.1, 0.6),
    V_INIT: (22.0, 33.0),
}


@dataclass(frozen=True)
class UniformDensity:
    lo: float
    hi: float

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValueError("empty support")

    def pdf(self, x: float) -> float:
        if self.lo <= x <= self.hi:
            return 1.0 / (self.hi - self.lo)
        return 0.0


@dataclass(frozen=True)
class GaussianDensity:
    mean: float
    std: float

    def pdf(self, x: float) -> float:
        z = (x - self.mean) / self.std
        return math.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))


@dataclass
class ProposalModel:
    """Densities the simulator actually samples from."""

    densities: dict[str, UniformDensity]

    @classmethod
    def from_spawn_config(cls, cfg: SpawnConfig) -> "ProposalModel":
        d = {name: UniformDensity(*cfg.param_intervals[name])
             for name in PARAM_FIELDS}
        d[V_INIT] = UniformDensity(cfg.speed_lo, cfg.speed_hi)
        return cls(d)

    def density(self, name: str, x: float) -> float:
        return self.densities[name].pdf(x)


@dataclass
class NaturalisticModel:
    """Densities describing everyday traffic; configurable per parameter."""

    densities: dict = field(
        default_factory=lambda: {name: UniformDensity(lo, hi) for name, (lo, hi)
                                 in DEFAULT_NATURALISTIC_INTERVALS.items()})

    def density(self, name: str, x: float) -> float:
        return self.densities[name].pdf(x)


def likelihood_ratio(components, p: NaturalisticModel, q: ProposalModel) -> float:
    """Product of per-component naturalistic/proposal density ratios.

    `components` iterates (name, value) pairs of everything the episode
    sampled.  A component outside the proposal support means the episode
    could not have been generated and is an error; zero naturalistic
    density simply yields a zero ratio.
    """
    ratio = 1.0
    for name, value in components:
        qd = q.density(name, value)
        if qd <= 0.0:
            raise ValueError(
                f"component {name}={value} outside the proposal support")
        ratio *= p.density(name, value) / qd
    return ratio


@dataclass(frozen=True)
class EpisodeLikelihood:
    """Outcome indicator and likelihood ratio of one episode."""

    episode_id: int
    likelihood: float
    collided: bool

    def __post_init__(self):
        if not math.isfinite(self.likelihood) or self.likelihood < 0.0:
            raise ValueError("likelihood ratio must be finite and >= 0")


def is_estimate(records: list[EpisodeLikelihood]) -> tuple[float, float]:
    """Re-weighted event rate and its standard error.

    rate = mean of indicator * likelihood; the standard error is the
    sample standard deviation of those products over sqrt(N).
    """
    n = len(records)
    if n < 1:
        raise ValueError("need at least one record")
    products = [r.likelihood if r.collided else 0.0 for r in records]
    rate = sum(products) / n
    if n == 1:
        return rate, 0.0
    var = sum((x - rate) ** 2 for x in products) / (n - 1)
    return rate, math.sqrt(var / n)
