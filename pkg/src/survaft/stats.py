"""Scalar probability primitives for log-normal time-to-event models.

Standard-normal pdf/cdf via the error function, the log-normal event
density, survival and hazard functions, plus a counter-based random
stream with reproducible substream derivation for parallel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LogNormalParams",
    "RngStream",
    "normal_pdf",
    "normal_cdf",
    "lognormal_event_density",
    "lognormal_survival",
    "hazard_rate",
    "sample_normal",
    "sample_half_normal",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_2 = math.sqrt(2.0)

# Survival probabilities below this are treated as vanished when forming
# the hazard ratio.
_SURVIVAL_FLOOR = 1e-300

_MASK_64 = (1 << 64) - 1


@dataclass(frozen=True)
class LogNormalParams:
    """Location/scale pair of a log-normal event-time distribution.

    ``mu`` is the location on the log-day axis (the risk-function output)
    and ``sigma`` the scale of the log-time error, which must be positive.
    """

    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError("sigma must be positive and finite")


def _mix64(x: int) -> int:
    # splitmix64 finalizer; spreads structured seeds over 64 bits
    x = (x + 0x9E3779B97F4A7C15) & _MASK_64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK_64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK_64
    return (x ^ (x >> 31)) & _MASK_64


class RngStream:
    """Seeded random stream backed by a counter-based generator.

    The same seed always reproduces the same draw sequence. A stream is
    single-owner; independent substreams for parallel work are derived
    with :meth:`derive`, which keys a fresh generator on a hash of
    (seed, index) so children never overlap their parent.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK_64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def derive(self, index: int) -> "RngStream":
        """Independent child stream number ``index``."""
        return RngStream(_mix64(self.seed ^ _mix64(int(index))))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def permutation(self, n):
        return self._gen.permutation(n)


def normal_pdf(u: float) -> float:
    """Standard normal density phi(u) = exp(-u^2/2) / sqrt(2*pi)."""
    return _INV_SQRT_2PI * math.exp(-0.5 * u * u)


def normal_cdf(u: float) -> float:
    """Standard normal cumulative Phi(u), via the error function.

    Double-precision erf keeps the absolute error below 1e-12 over the
    whole real line.
    """
    return 0.5 * (1.0 + math.erf(u / _SQRT_2))


def lognormal_event_density(t: float, p: LogNormalParams) -> float:
    """Event density f(t) of a log-normal time-to-event at ``t`` days.

    f(t) = phi((ln t - mu) / sigma) / (t * sigma). The 1/sigma Jacobian
    factor is included so that f integrates to one over (0, inf).

    Raises ValueError for t <= 0.
    """
    if t <= 0.0:
        raise ValueError(f"event density undefined for t <= 0 (got t={t})")
    u = (math.log(t) - p.mu) / p.sigma
    return normal_pdf(u) / (t * p.sigma)


def lognormal_survival(t: float, p: LogNormalParams) -> float:
    """Survival S(t) = 1 - Phi((ln t - mu) / sigma), in [0, 1].

    Raises ValueError for t <= 0.
    """
    if t <= 0.0:
        raise ValueError(f"survival undefined for t <= 0 (got t={t})")
    u = (math.log(t) - p.mu) / p.sigma
    # erfc form keeps precision in the upper tail where 1 - Phi underflows
    return 0.5 * math.erfc(u / _SQRT_2)


def hazard_rate(t: float, p: LogNormalParams) -> float:
    """Instantaneous event rate f(t) / S(t) at ``t`` days.

    Returns +inf once the survival probability has vanished below the
    representable floor. Raises ValueError for t <= 0.
    """
    s = lognormal_survival(t, p)
    if s < _SURVIVAL_FLOOR:
        return math.inf
    return lognormal_event_density(t, p) / s


def sample_normal(rng: RngStream, mu: float, sigma: float) -> float:
    """One draw from N(mu, sigma^2); sigma must be positive."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive (got {sigma})")
    return float(rng.normal(mu, sigma))


def sample_half_normal(rng: RngStream, sigma_sigma: float) -> float:
    """One draw |N(0, sigma_sigma^2)| from the half-normal family."""
    if sigma_sigma <= 0.0:
        raise ValueError(f"sigma_sigma must be positive (got {sigma_sigma})")
    return abs(float(rng.normal(0.0, sigma_sigma)))
