import math

import numpy as np
import pytest

from survaft.stats import RngStream
from survaft.variational import (
    LatentParams,
    ModelSample,
    init_latent,
    log_q,
    log_q_batch,
    sample_theta,
    sample_theta_batch,
    score_grad,
    score_grad_batch,
)

LOG_HALF_NORMAL_AT_ZERO = -0.22579135264472743  # log(2 * phi(0)), scale 1
LOG_NORMAL_AT_MODE = -0.9189385332046727  # log(phi(0))


def test_init_latent_exact_values():
    omega = init_latent(3)
    assert omega.sigma_sigma == pytest.approx(5.0, rel=1e-15)
    assert np.all(omega.mu == 0.0)
    assert np.all(omega.sigma == 1.0)
    assert omega.dim == 7
    with pytest.raises(ValueError):
        init_latent(0)


def test_vector_round_trip():
    omega = init_latent(4)
    omega.mu[:] = [0.1, -0.2, 0.3, 4.0]
    omega.log_sigma[:] = [-1.0, 0.0, 0.5, -3.0]
    again = LatentParams.from_vector(omega.to_vector())
    assert np.array_equal(again.mu, omega.mu)
    assert np.array_equal(again.log_sigma, omega.log_sigma)
    assert again.log_sigma_sigma == omega.log_sigma_sigma


def test_degenerate_sampling_is_exact():
    z = np.array([1.5, -2.0, 0.0])
    omega = LatentParams.degenerate(z)
    sample = sample_theta(omega, RngStream(0), fixed_sigma=1.0)
    assert np.array_equal(sample.z, z)
    assert sample.sigma == 1.0


def test_sample_theta_clt_mean():
    omega = init_latent(2)
    omega.mu[:] = [1.0, -3.0]
    sigmas, zs = sample_theta_batch(omega, RngStream(5), 1_000_000)
    assert abs(zs[:, 0].mean() - 1.0) <= 3.0 / 1000.0
    assert np.all(sigmas >= 0.0)


def test_fixed_sigma_pins_the_scale():
    omega = init_latent(1)
    sigmas, _ = sample_theta_batch(omega, RngStream(1), 100, fixed_sigma=0.7)
    assert np.all(sigmas == 0.7)


def test_model_sample_validation():
    with pytest.raises(ValueError):
        ModelSample(sigma=-0.1, z=np.zeros(1))


def test_log_q_frozen_values():
    omega = init_latent(1)
    omega.log_sigma_sigma = 0.0  # scale 1
    theta = ModelSample(sigma=0.0, z=np.array([0.0]))
    total = log_q(omega, theta)
    z_part = log_q(omega, theta, include_scale_factor=False)
    assert z_part == pytest.approx(LOG_NORMAL_AT_MODE, abs=1e-14)
    assert total - z_part == pytest.approx(LOG_HALF_NORMAL_AT_ZERO, abs=1e-14)
    assert total == pytest.approx(-1.1447298858494002, abs=1e-13)


def test_log_q_rejects_negative_sigma():
    omega = init_latent(1)
    with pytest.raises(ValueError):
        log_q_batch(omega, np.array([-1.0]), np.zeros((1, 1)))


def test_log_q_block_additivity():
    rng = RngStream(9)
    omega_a = init_latent(2)
    omega_a.mu[:] = [0.5, -1.0]
    omega_a.log_sigma[:] = [0.2, -0.3]
    omega_b = init_latent(3)
    omega_b.mu[:] = [2.0, 0.0, 1.0]
    omega_b.log_sigma[:] = [-1.0, 0.1, 0.0]
    merged = LatentParams(
        mu=np.concatenate([omega_a.mu, omega_b.mu]),
        log_sigma=np.concatenate([omega_a.log_sigma, omega_b.log_sigma]),
        log_sigma_sigma=0.0,
    )
    za = rng.standard_normal(2)
    zb = rng.standard_normal(3)
    whole = log_q_batch(
        merged, np.array([0.0]), np.concatenate([za, zb])[None, :],
        include_scale_factor=False,
    )[0]
    part_a = log_q_batch(
        omega_a, np.array([0.0]), za[None, :], include_scale_factor=False
    )[0]
    part_b = log_q_batch(
        omega_b, np.array([0.0]), zb[None, :], include_scale_factor=False
    )[0]
    assert whole == pytest.approx(part_a + part_b, rel=1e-14)


def test_log_q_normalization_by_importance_sampling():
    omega = init_latent(2)
    omega.mu[:] = [0.3, -0.7]
    omega.log_sigma[:] = [0.0, -0.5]
    omega.log_sigma_sigma = math.log(2.0)
    proposal = LatentParams(
        mu=omega.mu.copy(),
        log_sigma=omega.log_sigma + math.log(1.5),
        log_sigma_sigma=omega.log_sigma_sigma + math.log(1.5),
    )
    rng = RngStream(17)
    sigmas, zs = sample_theta_batch(proposal, rng, 200_000)
    log_w = log_q_batch(omega, sigmas, zs) - log_q_batch(proposal, sigmas, zs)
    assert np.exp(log_w).mean() == pytest.approx(1.0, abs=0.01)


def test_score_grad_zeros_at_special_points():
    omega = init_latent(2)
    omega.mu[:] = [1.0, -1.0]
    theta = ModelSample(sigma=5.0, z=omega.mu.copy())
    g = score_grad(omega, theta)
    assert np.all(g[1:3] == 0.0)
    # z one scale away from the mean zeroes the log-scale partials
    theta2 = ModelSample(sigma=5.0, z=omega.mu + omega.sigma)
    g2 = score_grad(omega, theta2)
    assert np.allclose(g2[3:], 0.0, atol=1e-12)
    # sigma at sigma_sigma zeroes the first partial
    theta3 = ModelSample(sigma=omega.sigma_sigma, z=omega.mu.copy())
    assert score_grad(omega, theta3)[0] == pytest.approx(0.0, abs=1e-12)


def test_score_grad_matches_finite_differences():
    rng = RngStream(23)
    k = 3
    for _ in range(20):
        omega = LatentParams(
            mu=rng.normal(0.0, 2.0, k),
            log_sigma=rng.normal(0.0, 0.5, k),
            log_sigma_sigma=float(rng.normal(0.5, 0.3)),
        )
        sigmas, zs = sample_theta_batch(omega, rng, 1)
        theta = ModelSample(sigma=float(sigmas[0]), z=zs[0])
        analytic = score_grad(omega, theta)
        vec = omega.to_vector()
        h = 1e-6
        for j in range(vec.size):
            up = vec.copy()
            dn = vec.copy()
            up[j] += h
            dn[j] -= h
            fd = (
                log_q(LatentParams.from_vector(up), theta)
                - log_q(LatentParams.from_vector(dn), theta)
            ) / (2 * h)
            assert analytic[j] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_score_identity_quick():
    omega = init_latent(3)
    omega.mu[:] = [0.5, -2.0, 1.0]
    omega.log_sigma[:] = [0.0, -1.0, 0.3]
    m = 50_000
    sigmas, zs = sample_theta_batch(omega, RngStream(31), m)
    scores = score_grad_batch(omega, sigmas, zs)
    mean = scores.mean(axis=0)
    bound = 4.0 * scores.std(axis=0) / math.sqrt(m)
    assert np.all(np.abs(mean) <= bound)


def test_sigma_draw_distribution_matches_half_normal():
    omega = init_latent(1)
    omega.log_sigma_sigma = math.log(2.0)
    sigmas, _ = sample_theta_batch(omega, RngStream(41), 100_000)
    grid = np.sort(sigmas)
    empirical = np.arange(1, grid.size + 1) / grid.size
    cdf = np.array([math.erf(v / (2.0 * math.sqrt(2.0))) for v in grid])
    assert np.max(np.abs(empirical - cdf)) < 0.01


def test_latent_validation():
    with pytest.raises(ValueError):
        LatentParams(mu=np.array([math.nan]), log_sigma=np.zeros(1), log_sigma_sigma=0.0)
    with pytest.raises(ValueError):
        LatentParams(mu=np.zeros(1), log_sigma=np.array([math.inf]), log_sigma_sigma=0.0)
    with pytest.raises(ValueError):
        LatentParams(mu=np.zeros(2), log_sigma=np.zeros(1), log_sigma_sigma=0.0)
