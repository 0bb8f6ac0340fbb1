import math

import numpy as np
import pytest

from survaft.stats import (
    LogNormalParams,
    RngStream,
    hazard_rate,
    lognormal_event_density,
    lognormal_survival,
    normal_cdf,
    normal_pdf,
    sample_half_normal,
    sample_normal,
)

# high-precision reference values (40-digit erf evaluation)
PHI_TABLE = {
    -3.0: 0.0013498980316300945,
    -1.5: 0.066807201268858066,
    -0.5: 0.3085375387259869,
    0.0: 0.5,
    0.5: 0.6914624612740131,
    1.0: 0.84134474606854295,
    2.0: 0.97724986805182079,
    4.0: 0.99996832875816688,
}


def test_normal_pdf_at_zero():
    assert normal_pdf(0.0) == pytest.approx(0.3989422804014327, abs=1e-15)


def test_normal_cdf_reference_values():
    for u, expected in PHI_TABLE.items():
        assert abs(normal_cdf(u) - expected) <= 1e-12


def test_lognormal_density_examples():
    p = LogNormalParams(mu=0.0, sigma=1.0)
    assert lognormal_event_density(1.0, p) == pytest.approx(
        0.3989422804014327, abs=1e-14
    )
    assert lognormal_event_density(math.e, p) == pytest.approx(
        0.08901605491595147, abs=1e-14
    )
    with pytest.raises(ValueError):
        lognormal_event_density(0.0, p)
    with pytest.raises(ValueError):
        lognormal_event_density(-3.0, p)


def test_lognormal_density_includes_scale_jacobian():
    p = LogNormalParams(mu=0.0, sigma=2.0)
    # phi(0) / (t * sigma) at the median
    assert lognormal_event_density(1.0, p) == pytest.approx(
        0.3989422804014327 / 2.0, abs=1e-14
    )


def test_lognormal_survival_examples():
    p = LogNormalParams(mu=0.0, sigma=1.0)
    assert lognormal_survival(1.0, p) == pytest.approx(0.5, abs=1e-14)
    assert lognormal_survival(math.e, p) == pytest.approx(
        0.15865525393145705, abs=1e-12
    )
    assert lognormal_survival(1e-12, p) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        lognormal_survival(0.0, p)


def test_hazard_rate_examples():
    p = LogNormalParams(mu=0.0, sigma=1.0)
    assert hazard_rate(1.0, p) == pytest.approx(0.7978845608028654, abs=1e-12)
    with pytest.raises(ValueError):
        hazard_rate(-1.0, p)


def test_hazard_decreasing_past_mode():
    p = LogNormalParams(mu=0.0, sigma=1.0)
    grid = np.exp(np.arange(5.0, 11.0))
    values = [hazard_rate(t, p) for t in grid]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_hazard_overflow_guard():
    p = LogNormalParams(mu=0.0, sigma=0.1)
    assert hazard_rate(1e30, p) == math.inf


def test_params_validation():
    with pytest.raises(ValueError):
        LogNormalParams(mu=0.0, sigma=0.0)
    with pytest.raises(ValueError):
        LogNormalParams(mu=math.nan, sigma=1.0)
    with pytest.raises(ValueError):
        LogNormalParams(mu=0.0, sigma=math.inf)


@pytest.mark.parametrize("mu,sigma", [(0.0, 1.0), (2.5, 0.4), (-1.0, 2.0)])
def test_density_integrates_to_one(mu, sigma):
    p = LogNormalParams(mu=mu, sigma=sigma)
    t = np.exp(np.linspace(mu - 10 * sigma, mu + 10 * sigma, 200_000))
    f = np.array([lognormal_event_density(v, p) for v in t])
    assert np.trapezoid(f, t) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("t_check", [0.5, 1.0, math.e, 10.0])
def test_survival_matches_density_integral(t_check):
    p = LogNormalParams(mu=0.5, sigma=0.8)
    lo = math.exp(p.mu - 12 * p.sigma)
    t = np.exp(np.linspace(math.log(lo), math.log(t_check), 200_000))
    f = np.array([lognormal_event_density(v, p) for v in t])
    cdf = np.trapezoid(f, t)
    assert lognormal_survival(t_check, p) == pytest.approx(1.0 - cdf, abs=1e-6)


def test_survival_non_increasing():
    p = LogNormalParams(mu=1.3, sigma=0.7)
    grid = np.linspace(0.01, 400.0, 5000)
    s = np.array([lognormal_survival(t, p) for t in grid])
    assert np.all(np.diff(s) <= 0.0)


def test_hazard_times_survival_equals_density():
    p = LogNormalParams(mu=0.2, sigma=1.4)
    for t in (0.2, 1.0, 7.0, 90.0):
        left = hazard_rate(t, p) * lognormal_survival(t, p)
        right = lognormal_event_density(t, p)
        assert left == pytest.approx(right, rel=1e-12)


def test_rng_determinism_and_substreams():
    a = RngStream(1234)
    b = RngStream(1234)
    assert [a.normal() for _ in range(5)] == [b.normal() for _ in range(5)]
    child1 = RngStream(1234).derive(0)
    child2 = RngStream(1234).derive(1)
    assert child1.normal() != child2.normal()
    assert RngStream(1234).derive(0).normal() == RngStream(1234).derive(0).normal()


def test_sample_normal_moments():
    rng = RngStream(7)
    draws = rng.normal(2.0, 1.0, 1_000_000)
    assert abs(draws.mean() - 2.0) < 0.01
    with pytest.raises(ValueError):
        sample_normal(rng, 0.0, 0.0)


def test_sample_half_normal():
    rng = RngStream(8)
    draws = np.array([sample_half_normal(rng, 1.0) for _ in range(100_000)])
    assert np.all(draws >= 0.0)
    assert abs(draws.mean() - math.sqrt(2.0 / math.pi)) < 0.01
    with pytest.raises(ValueError):
        sample_half_normal(rng, -1.0)


def test_sample_normal_is_scalar_draw():
    v = sample_normal(RngStream(3), 1.0, 0.5)
    assert isinstance(v, float)
