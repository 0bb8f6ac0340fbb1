"""Variational fitting of the survival model by stochastic gradient ascent.

Each iteration draws model parameters from the current variational
distribution, evaluates the censored/uncensored log-likelihood of the
batch, and forms the score-function gradient estimate

    grad = E_q[ grad_omega log q(theta) * (log p(x, theta) - log q(theta)) ]

with a running-mean baseline subtracted from the weight to cut variance.
Parameters move by ADAM steps (ascent). The likelihood needs no
derivatives of the risk network.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_ndtr

from .data import Dataset, Record
from .stats import RngStream
from .variational import (
    LatentParams,
    ModelSample,
    init_latent,
    log_q_batch,
    sample_theta_batch,
    score_grad_batch,
)

__all__ = [
    "TrainConfig",
    "TrainTrace",
    "TrainingError",
    "AdamState",
    "BaselineState",
    "LrRangeResult",
    "record_log_likelihood",
    "batch_log_likelihood",
    "elbo_estimate",
    "elbo_gradient",
    "adam_step",
    "train",
    "lr_range_test",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Per-record log-likelihood floor: survival (or density) terms whose
# probability would underflow double precision are clamped here and
# counted, bounding the score weight against pathological draws.
LOG_LIKELIHOOD_FLOOR = math.log(1e-300)


class TrainingError(RuntimeError):
    """Fitting could not proceed (divergence or no usable iterations)."""


@dataclass
class TrainConfig:
    """Optimizer and estimator knobs.

    ``batch_size`` 0 means full batch; minibatch likelihood sums are
    rescaled by N/B. ``samples_per_step`` is the number of theta draws S
    per gradient estimate.

    The error scale has three treatments. Default: sampled from the
    half-normal factor each draw and learned through ``sigma_sigma``.
    ``fixed_sigma`` pins it to a constant. ``profile_sigma`` pins it to a
    running censored-data maximum-likelihood estimate updated every
    iteration (an EM step damped by ``profile_update_rate``); use this
    when a concentrated error scale is needed for sharp predictive
    curves, since the half-normal factor cannot concentrate at a positive
    value.

    ``prior_std`` places an independent N(0, prior_std^2) prior on every
    network parameter instead of the improper flat prior. With a flat
    prior and parameter counts comparable to the record count, the exact
    posterior predictive is over-dispersed by roughly (1 + K/N); the weak
    proper prior keeps unsupported parameter directions from inflating
    the predictive spread.
    """

    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    samples_per_step: int = 1
    batch_size: int = 0
    max_iterations: int = 5000
    stop_window: int = 50
    stop_rtol: float = 1e-4
    control_variate: bool = True
    baseline_decay: float = 0.9
    dropout_enabled: bool = True
    fixed_sigma: float | None = None
    profile_sigma: bool = False
    profile_update_rate: float = 0.05
    freeze_sigma_sigma: bool = False
    prior_std: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0.0):
            raise ValueError("learning rate must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("ADAM betas must lie in (0, 1)")
        if self.samples_per_step < 1:
            raise ValueError("samples_per_step must be >= 1")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0 (0 = full batch)")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.stop_window < 1:
            raise ValueError("stop_window must be >= 1")
        if self.fixed_sigma is not None and self.fixed_sigma <= 0.0:
            raise ValueError("fixed_sigma must be positive when set")
        if not (0.0 < self.profile_update_rate <= 1.0):
            raise ValueError("profile_update_rate must lie in (0, 1]")
        if self.prior_std is not None and self.prior_std <= 0.0:
            raise ValueError("prior_std must be positive when set")


@dataclass
class TrainTrace:
    """Per-iteration fitting history; skipped iterations carry NaN loss."""

    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    skipped_steps: int = 0
    clamped_terms: int = 0
    resampled_draws: int = 0
    stopped_at: int | None = None
    sigma_hat: float | None = None

    def append(self, loss: float, grad_norm: float, seconds: float):
        self.loss.append(loss)
        self.grad_norm.append(grad_norm)
        self.seconds.append(seconds)

    def __len__(self) -> int:
        return len(self.loss)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,loss,grad_norm,seconds\n")
            for i, (l, g, s) in enumerate(zip(self.loss, self.grad_norm, self.seconds)):
                fh.write(f"{i},{l!r},{g!r},{s!r}\n")


@dataclass
class BaselineState:
    """Running mean of the score weight, updated after each estimate."""

    decay: float = 0.9
    value: float = 0.0
    initialized: bool = False

    def current(self) -> float:
        return self.value if self.initialized else 0.0

    def update(self, weight_mean: float):
        if not math.isfinite(weight_mean):
            return
        if not self.initialized:
            self.value = weight_mean
            self.initialized = True
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * weight_mean


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    skipped: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim))


def adam_step(
    omega: LatentParams,
    grad: np.ndarray,
    state: AdamState,
    alpha: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> LatentParams:
    """One bias-corrected ascent step; non-finite gradients are skipped."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        state.skipped += 1
        return omega
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    vec = omega.to_vector() + alpha * m_hat / (np.sqrt(v_hat) + eps)
    if not np.all(np.isfinite(vec) | (vec == -np.inf)):
        state.skipped += 1
        state.t -= 1
        return omega
    return LatentParams.from_vector(vec)


def batch_log_likelihood(
    h: np.ndarray, y: np.ndarray, c: np.ndarray, sigma: float
) -> tuple[np.ndarray, int]:
    """Vectorized per-record log-likelihood under one model draw.

    Uncensored records contribute the normal log-density of the log
    duration at location h and scale sigma; censored records contribute
    the log survival probability beyond their censoring time. Returns the
    clamped values and the number of floored terms.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive; resample the draw")
    u = (y - h) / sigma
    dens = -math.log(sigma) - 0.5 * u * u - 0.5 * _LOG_2PI
    surv = log_ndtr(-u)
    ll = np.where(c == 0, dens, surv)
    clamped = int(np.sum(ll < LOG_LIKELIHOOD_FLOOR))
    if clamped:
        ll = np.maximum(ll, LOG_LIKELIHOOD_FLOOR)
    return ll, clamped


def record_log_likelihood(theta: ModelSample, record: Record, net, state) -> float:
    """Log-likelihood of a single record at the sampled parameters."""
    h = net.forward_batch(theta.z, record.x_cont[None, :], record.x_cat[None, :], state)
    ll, _ = batch_log_likelihood(
        h, np.array([record.y]), np.array([record.c]), theta.sigma
    )
    return float(ll[0])


def _em_sigma2_target(
    h: np.ndarray, y: np.ndarray, c: np.ndarray, sigma: float
) -> float:
    """One EM target for the error scale under right censoring.

    Censored records contribute their conditional expected squared error
    given survival past the censoring point (Mills-ratio correction).
    """
    u = (y - h) / sigma
    unc = c == 0
    total = float(((y - h)[unc] ** 2).sum())
    uc = u[~unc]
    if uc.size:
        mills = np.exp(-0.5 * uc * uc - 0.5 * _LOG_2PI - log_ndtr(-uc))
        total += float((sigma * sigma) * (1.0 + uc * mills).sum())
    return total / y.size


def _draw_sigmas_zs(omega, rng, size, fixed_sigma, trace=None):
    # redraw the rare exact-zero half-normal samples
    sigmas, zs = sample_theta_batch(omega, rng, size, fixed_sigma=fixed_sigma)
    if fixed_sigma is None:
        for _ in range(100):
            bad = sigmas == 0.0
            if not bad.any():
                break
            if trace is not None:
                trace.resampled_draws += int(bad.sum())
            redraw_s, redraw_z = sample_theta_batch(
                omega, rng, int(bad.sum()), fixed_sigma=None
            )
            sigmas[bad] = redraw_s
            zs[bad] = redraw_z
    return sigmas, zs


def _prior_mean_and_grad(
    omega: LatentParams, prior_std: float | None
) -> tuple[float, np.ndarray | None]:
    """Closed-form E_q[log prior] and its latent gradient (z factors only)."""
    if prior_std is None:
        return 0.0, None
    tau2 = prior_std * prior_std
    k = omega.k
    sig2 = omega.sigma**2
    value = float(
        -k * (math.log(prior_std) + 0.5 * _LOG_2PI)
        - (np.sum(omega.mu**2) + np.sum(sig2)) / (2.0 * tau2)
    )
    grad = np.zeros(2 * k + 1)
    grad[1 : k + 1] = -omega.mu / tau2
    grad[k + 1 :] = -sig2 / tau2
    return value, grad


def elbo_estimate(
    omega: LatentParams,
    dataset: Dataset,
    net,
    s: int,
    rng: RngStream,
    *,
    state=None,
    fixed_sigma: float | None = None,
    prior_std: float | None = None,
) -> float:
    """Monte Carlo evidence-lower-bound estimate from S fresh draws.

    Returns the ELBO value; negate it for loss plots. Evaluation runs in
    inference mode unless a training-mode run state is supplied.
    """
    if s < 1:
        raise ValueError("need at least one sample")
    if state is None:
        state = net.new_state(training=False)
    sigmas, zs = _draw_sigmas_zs(omega, rng, s, fixed_sigma)
    include_scale = fixed_sigma is None
    log_qs = log_q_batch(omega, sigmas, zs, include_scale_factor=include_scale)
    prior_value, _ = _prior_mean_and_grad(omega, prior_std)
    total = 0.0
    for i in range(s):
        h = net.forward_batch(zs[i], dataset.x_cont, dataset.x_cat, state, rng)
        ll, _ = batch_log_likelihood(h, dataset.y, dataset.c, float(sigmas[i]))
        total += float(ll.sum()) - float(log_qs[i])
    return total / s + prior_value


def elbo_gradient(
    omega: LatentParams,
    batch: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    net,
    s: int,
    rng: RngStream,
    baseline: BaselineState | None,
    *,
    state,
    fixed_sigma: float | None = None,
    freeze_sigma_sigma: bool = False,
    likelihood_scale: float = 1.0,
    trace: TrainTrace | None = None,
    prior_std: float | None = None,
) -> tuple[np.ndarray, float]:
    """Score-function gradient estimate over one (mini)batch.

    ``batch`` is (x_cont, x_cat, y, c); ``likelihood_scale`` is N/B for
    minibatches. Returns (gradient over the flat latent vector, loss
    estimate). The baseline, when given, is read before and updated after
    the estimate so it never depends on the current draws. A proper
    prior, when set, contributes its closed-form gradient rather than
    passing through the score weight.
    """
    if s < 1:
        raise ValueError("need at least one sample")
    x_cont, x_cat, y, c = batch
    sigmas, zs = _draw_sigmas_zs(omega, rng, s, fixed_sigma, trace)
    include_scale = fixed_sigma is None
    log_qs = log_q_batch(omega, sigmas, zs, include_scale_factor=include_scale)
    scores = score_grad_batch(omega, sigmas, zs, include_scale_factor=include_scale)
    weights = np.empty(s)
    for i in range(s):
        h = net.forward_batch(zs[i], x_cont, x_cat, state, rng)
        ll, clamped = batch_log_likelihood(h, y, c, float(sigmas[i]))
        if trace is not None:
            trace.clamped_terms += clamped
        weights[i] = likelihood_scale * float(ll.sum()) - float(log_qs[i])
    b = baseline.current() if baseline is not None else 0.0
    grad = scores.T @ (weights - b) / s
    prior_value, prior_grad = _prior_mean_and_grad(omega, prior_std)
    if prior_grad is not None:
        grad = grad + prior_grad
    if freeze_sigma_sigma or fixed_sigma is not None:
        grad[0] = 0.0
    if baseline is not None:
        baseline.update(float(weights.mean()))
    return grad, -(float(weights.mean()) + prior_value)


def train(
    dataset: Dataset,
    net,
    config: TrainConfig,
    *,
    state=None,
    init: LatentParams | None = None,
    progress=None,
) -> tuple[LatentParams, TrainTrace]:
    """Fit the variational parameters on a dataset.

    Stops when the window-averaged loss changes by less than the relative
    tolerance between consecutive windows, or at the iteration cap. Pass
    a training-mode run state to keep the fitted batch-norm statistics.
    """
    omega = init if init is not None else init_latent(net.param_count)
    trace = TrainTrace()
    sigma_hat = None
    sigma_bounds = (1e-3, math.inf)
    if config.profile_sigma:
        spread = float(np.std(dataset.y)) if dataset.n else 1.0
        spread = max(spread, 1e-3)
        # Var(y) = Var(h) + sigma^2 bounds the error scale from above
        sigma_bounds = (0.05 * spread, 1.5 * spread)
        if config.fixed_sigma is not None:
            sigma_hat = config.fixed_sigma
        else:
            sigma_hat = spread
        sigma_hat = min(max(sigma_hat, sigma_bounds[0]), sigma_bounds[1])
        trace.sigma_hat = sigma_hat
    elif config.fixed_sigma is not None:
        trace.sigma_hat = config.fixed_sigma
    if config.max_iterations == 0:
        return omega, trace
    if state is None:
        state = net.new_state(training=True)
    state.dropout = config.dropout_enabled
    rng = RngStream(config.seed)
    adam = AdamState.zeros(omega.dim)
    baseline = BaselineState(decay=config.baseline_decay) if config.control_variate else None
    n = dataset.n
    use_minibatch = 0 < config.batch_size < n
    w = config.stop_window

    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(config.max_iterations):
            t0 = time.perf_counter()
            if use_minibatch:
                idx = rng.generator.choice(n, size=config.batch_size, replace=False)
                batch = (
                    dataset.x_cont[idx],
                    dataset.x_cat[idx],
                    dataset.y[idx],
                    dataset.c[idx],
                )
                scale = n / config.batch_size
            else:
                batch = (dataset.x_cont, dataset.x_cat, dataset.y, dataset.c)
                scale = 1.0
            try:
                grad, loss = elbo_gradient(
                    omega,
                    batch,
                    net,
                    config.samples_per_step,
                    rng,
                    baseline,
                    state=state,
                    fixed_sigma=sigma_hat if config.profile_sigma else config.fixed_sigma,
                    freeze_sigma_sigma=config.freeze_sigma_sigma,
                    likelihood_scale=scale,
                    trace=trace,
                    prior_std=config.prior_std,
                )
            except FloatingPointError:
                trace.skipped_steps += 1
                trace.append(math.nan, math.nan, time.perf_counter() - t0)
                continue
            if not (np.all(np.isfinite(grad)) and math.isfinite(loss)):
                trace.skipped_steps += 1
                trace.append(math.nan, math.nan, time.perf_counter() - t0)
                continue
            omega = adam_step(
                omega, grad, adam, config.learning_rate, config.beta1, config.beta2, config.eps
            )
            if config.profile_sigma:
                # residuals at the variational mean, so parameter spread is
                # not folded into the error scale that prediction re-adds
                try:
                    h_mu = net.forward_batch(
                        omega.mu, batch[0], batch[1], state.copy(training=False)
                    )
                    target = _em_sigma2_target(h_mu, batch[2], batch[3], sigma_hat)
                except FloatingPointError:
                    target = math.nan
                if math.isfinite(target) and target > 0.0:
                    rho = config.profile_update_rate
                    sigma_hat = math.sqrt(
                        (1.0 - rho) * sigma_hat * sigma_hat + rho * target
                    )
                    sigma_hat = min(max(sigma_hat, sigma_bounds[0]), sigma_bounds[1])
                    trace.sigma_hat = sigma_hat
            trace.append(loss, float(np.linalg.norm(grad)), time.perf_counter() - t0)
            if progress is not None and (it + 1) % 500 == 0:
                progress(it + 1, loss)

            m = len(trace)
            if config.stop_rtol > 0 and m >= 2 * w and m % w == 0:
                recent = np.array(trace.loss[m - w : m])
                previous = np.array(trace.loss[m - 2 * w : m - w])
                if np.all(np.isfinite(recent)) and np.all(np.isfinite(previous)):
                    m1 = recent.mean()
                    m0 = previous.mean()
                    if abs(m1 - m0) <= config.stop_rtol * max(abs(m0), 1e-12):
                        trace.stopped_at = m
                        break

    if trace.skipped_steps == len(trace) and len(trace) > 0:
        raise TrainingError(
            f"all {trace.skipped_steps} iterations produced non-finite estimates; "
            "try a smaller learning rate"
        )
    return omega, trace


def warm_start_latent(net, dataset: Dataset) -> LatentParams:
    """Standard start point except the output bias sits at the mean log
    duration, so early residuals are on the data scale."""
    omega = init_latent(net.param_count)
    omega.mu[net.output_bias_index] = float(dataset.y.mean())
    return omega


@dataclass(frozen=True)
class LrRangeResult:
    table: tuple
    recommended: float

    def best(self) -> tuple[float, float]:
        finite = [(loss, lr) for lr, loss in self.table if math.isfinite(loss)]
        loss, lr = min(finite)
        return lr, loss


def lr_range_test(
    dataset: Dataset,
    net,
    grid,
    iterations_per_point: int = 4000,
    base_config: TrainConfig | None = None,
    init: LatentParams | None = None,
) -> LrRangeResult:
    """Sweep learning rates from a fresh start with a fixed budget.

    The table holds (lr, final smoothed loss), with +inf marking
    divergence. The recommendation is the argmin learning rate divided
    by ten. Every grid point restarts from the same initialization
    (``init`` or the standard start point).
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("learning-rate grid is empty")
    if any(b >= a for a, b in zip(grid[1:], grid[:-1])):
        raise ValueError("learning-rate grid must be strictly ascending")
    base = base_config if base_config is not None else TrainConfig()
    table = []
    for lr in grid:
        cfg = replace(
            base,
            learning_rate=lr,
            max_iterations=iterations_per_point,
            stop_rtol=0.0,
        )
        point_init = (
            LatentParams.from_vector(init.to_vector()) if init is not None else None
        )
        try:
            _, trace = train(dataset, net, cfg, init=point_init)
        except TrainingError:
            table.append((lr, math.inf))
            continue
        tail = np.array(trace.loss[-min(base.stop_window, len(trace)) :])
        if tail.size == 0 or not np.all(np.isfinite(tail)):
            table.append((lr, math.inf))
        else:
            table.append((lr, float(tail.mean())))
    losses = [loss for _, loss in table]
    if not any(math.isfinite(l) for l in losses):
        raise TrainingError("every learning rate in the grid diverged")
    best_lr = table[int(np.argmin(losses))][0]
    return LrRangeResult(table=tuple(table), recommended=best_lr / 10.0)
