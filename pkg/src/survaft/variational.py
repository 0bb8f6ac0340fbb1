"""Mean-field variational family over the survival model parameters.

The model parameter vector is theta = [sigma, z_1..z_K]: a positive error
scale plus the K risk-network parameters. The variational density
factorizes as a half-normal over sigma times independent normals over
each z_k. Latent parameters are held on the log scale for the positive
entries so optimizer steps can never leave the feasible set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stats import RngStream

__all__ = [
    "LatentParams",
    "ModelSample",
    "init_latent",
    "sample_theta",
    "sample_theta_batch",
    "log_q",
    "log_q_batch",
    "score_grad",
    "score_grad_batch",
]

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2 = math.log(2.0)


@dataclass
class LatentParams:
    """Latent vector of the variational family, dimension 2K + 1.

    ``mu`` and ``log_sigma`` parameterize the K normal factors; the scalar
    ``log_sigma_sigma`` parameterizes the half-normal factor over the
    error scale. Scales must stay positive for fitting; ``log_sigma``
    entries of -inf (scale exactly zero) are permitted as the degenerate
    point-mass boundary used by deterministic prediction paths.
    """

    mu: np.ndarray
    log_sigma: np.ndarray
    log_sigma_sigma: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.log_sigma = np.asarray(self.log_sigma, dtype=float)
        if self.mu.ndim != 1 or self.mu.shape != self.log_sigma.shape:
            raise ValueError("mu and log_sigma must be 1-d and the same length")
        if self.mu.size < 1:
            raise ValueError("at least one model parameter is required")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("mu must be finite")
        if np.any(np.isnan(self.log_sigma)) or np.any(self.log_sigma == np.inf):
            raise ValueError("log_sigma must be finite or -inf")
        if math.isnan(self.log_sigma_sigma) or self.log_sigma_sigma == math.inf:
            raise ValueError("log_sigma_sigma must be finite or -inf")

    @property
    def k(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    @property
    def sigma_sigma(self) -> float:
        return math.exp(self.log_sigma_sigma)

    @property
    def dim(self) -> int:
        return 2 * self.k + 1

    def to_vector(self) -> np.ndarray:
        """Flat latent vector [log_sigma_sigma, mu_1..K, log_sigma_1..K]."""
        out = np.empty(self.dim)
        out[0] = self.log_sigma_sigma
        out[1 : self.k + 1] = self.mu
        out[self.k + 1 :] = self.log_sigma
        return out

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "LatentParams":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size < 3 or vec.size % 2 == 0:
            raise ValueError("latent vector must have odd length 2K+1 >= 3")
        k = (vec.size - 1) // 2
        return cls(
            mu=vec[1 : k + 1].copy(),
            log_sigma=vec[k + 1 :].copy(),
            log_sigma_sigma=float(vec[0]),
        )

    @classmethod
    def degenerate(cls, z: np.ndarray) -> "LatentParams":
        """Point mass at ``z``: every factor has scale exactly zero.

        Samples from it reproduce ``z`` bitwise; only usable for
        prediction paths that pin the error scale separately.
        """
        z = np.asarray(z, dtype=float)
        return cls(
            mu=z.copy(),
            log_sigma=np.full(z.size, -np.inf),
            log_sigma_sigma=-np.inf,
        )


@dataclass(frozen=True)
class ModelSample:
    """One draw theta = [sigma, z] from the variational distribution."""

    sigma: float
    z: np.ndarray

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")


def init_latent(k: int) -> LatentParams:
    """Fitting start point: sigma_sigma = 5, all mu = 0, all sigma = 1."""
    if k < 1:
        raise ValueError(f"need at least one model parameter (got K={k})")
    return LatentParams(
        mu=np.zeros(k),
        log_sigma=np.zeros(k),
        log_sigma_sigma=math.log(5.0),
    )


def sample_theta(
    omega: LatentParams, rng: RngStream, *, fixed_sigma: float | None = None
) -> ModelSample:
    """Draw sigma ~ half-normal(sigma_sigma) and z_k ~ N(mu_k, sigma_k^2).

    ``fixed_sigma`` pins the error scale to a constant instead of sampling
    it (the half-normal family has no degenerate point at a positive
    value, so exact-sigma scenarios must use the pin).
    """
    sigmas, zs = sample_theta_batch(omega, rng, 1, fixed_sigma=fixed_sigma)
    return ModelSample(sigma=float(sigmas[0]), z=zs[0])


def sample_theta_batch(
    omega: LatentParams,
    rng: RngStream,
    size: int,
    *,
    fixed_sigma: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draws: returns (sigmas, zs) with shapes (S,), (S, K)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    if fixed_sigma is not None:
        if fixed_sigma < 0.0:
            raise ValueError("fixed_sigma must be >= 0")
        sigmas = np.full(size, float(fixed_sigma))
    else:
        sigmas = np.abs(rng.normal(0.0, 1.0, size)) * omega.sigma_sigma
    scale = omega.sigma
    zs = omega.mu + np.where(scale > 0.0, scale, 0.0) * rng.standard_normal(
        (size, omega.k)
    )
    return sigmas, zs


def log_q(
    omega: LatentParams, theta: ModelSample, *, include_scale_factor: bool = True
) -> float:
    """Log-density of the factorized family at theta.

    ``include_scale_factor=False`` drops the half-normal factor; used when
    the error scale is pinned and is not a random variable of the family.
    """
    return float(
        log_q_batch(
            omega,
            np.array([theta.sigma]),
            theta.z[None, :],
            include_scale_factor=include_scale_factor,
        )[0]
    )


def log_q_batch(
    omega: LatentParams,
    sigmas: np.ndarray,
    zs: np.ndarray,
    *,
    include_scale_factor: bool = True,
) -> np.ndarray:
    """Vectorized log q over rows of (sigmas, zs)."""
    sigmas = np.asarray(sigmas, dtype=float)
    zs = np.asarray(zs, dtype=float)
    if np.any(sigmas < 0.0):
        raise ValueError("sigma draws must be >= 0")
    scale = omega.sigma
    u = (zs - omega.mu) / scale
    total = np.sum(-omega.log_sigma - 0.5 * u * u - 0.5 * _LOG_2PI, axis=1)
    if include_scale_factor:
        ss = omega.sigma_sigma
        v = sigmas / ss
        total = total + (_LOG_2 - omega.log_sigma_sigma - 0.5 * v * v - 0.5 * _LOG_2PI)
    return total


def score_grad(
    omega: LatentParams, theta: ModelSample, *, include_scale_factor: bool = True
) -> np.ndarray:
    """Gradient of log q with respect to the flat latent vector.

    Analytic partials, with the chain rule through the log-scale storage:

        d/d mu_k          = (z_k - mu_k) / sigma_k^2
        d/d log sigma_k   = ((z_k - mu_k)/sigma_k)^2 - 1
        d/d log sigma_s   = (sigma/sigma_s)^2 - 1

    Ordering matches :meth:`LatentParams.to_vector`.
    """
    return score_grad_batch(
        omega,
        np.array([theta.sigma]),
        theta.z[None, :],
        include_scale_factor=include_scale_factor,
    )[0]


def score_grad_batch(
    omega: LatentParams,
    sigmas: np.ndarray,
    zs: np.ndarray,
    *,
    include_scale_factor: bool = True,
) -> np.ndarray:
    """Vectorized score gradients, one row of length 2K+1 per draw."""
    sigmas = np.asarray(sigmas, dtype=float)
    zs = np.asarray(zs, dtype=float)
    n = sigmas.size
    k = omega.k
    out = np.empty((n, 2 * k + 1))
    scale = omega.sigma
    u = (zs - omega.mu) / scale
    if include_scale_factor:
        v = sigmas / omega.sigma_sigma
        out[:, 0] = v * v - 1.0
    else:
        out[:, 0] = 0.0
    out[:, 1 : k + 1] = u / scale
    out[:, k + 1 :] = u * u - 1.0
    return out
