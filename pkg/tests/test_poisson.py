"""Poisson samplers: moments, strip thinning semantics, finite-density laws,
and the consistency couplings (thinning, superposition) they must satisfy."""

import math

import numpy as np
import pytest

from exactpp import PointPattern, RngStream, SamplerError, Window
from exactpp.poisson import (
    DominatedIntensity,
    FiniteDensitySampler,
    sample_homogeneous,
    sample_inhomogeneous_strip,
    sample_poisson_finite_density,
)
from exactpp.validation import chi_square, ks_against_cdf, two_sample_ks

UNIT_SQUARE = Window((0.0, 0.0), (1.0, 1.0))


def _gen(seed, stream=0):
    return RngStream(seed, stream).generator()


def test_zero_rate_is_exactly_empty():
    rng = _gen(1)
    for _ in range(50):
        assert sample_homogeneous(UNIT_SQUARE, 0.0, rng).n == 0


def test_negative_rate_rejected():
    with pytest.raises(SamplerError):
        sample_homogeneous(UNIT_SQUARE, -1.0, _gen(1))


def test_homogeneous_count_moments():
    rng = _gen(2)
    counts = np.array([sample_homogeneous(UNIT_SQUARE, 5.0, rng).n for _ in range(100_000)])
    assert abs(counts.mean() - 5.0) < 0.05
    assert abs(counts.var() - 5.0) < 0.15


def test_homogeneous_points_are_uniform():
    rng = _gen(3)
    pat = sample_homogeneous(Window((0.0,), (1.0,)), 20_000.0, rng)
    rep = ks_against_cdf(pat.points[:, 0], lambda t: np.clip(t, 0.0, 1.0), alpha=0.01)
    assert rep.accepted


# -- dominated strip ------------------------------------------------------------


def test_strip_with_full_rate_accepts_every_dominating_point():
    intensity = DominatedIntensity(bound=3.0, rate=lambda t, hist: 3.0)
    strip = sample_inhomogeneous_strip(10.0, intensity, _gen(4))
    assert strip.accepted.all()
    assert np.array_equal(strip.accepted_times, strip.times)
    assert strip.pattern().n == strip.times.size


def test_strip_with_zero_rate_accepts_nothing():
    intensity = DominatedIntensity(bound=3.0, rate=lambda t, hist: 0.0)
    strip = sample_inhomogeneous_strip(10.0, intensity, _gen(5))
    assert strip.times.size > 0  # the dominating stream itself is there
    assert strip.accepted_times.size == 0


def test_strip_linear_rate_mean_count():
    # rate(t) = M t / T on (0, T]: mean accepted count is M T / 2
    M, T = 2.0, 5.0
    intensity = DominatedIntensity(bound=M, rate=lambda t, hist: M * t / T)
    rng = _gen(6)
    counts = np.array(
        [sample_inhomogeneous_strip(T, intensity, rng).accepted_times.size for _ in range(20_000)]
    )
    target = M * T / 2.0
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - target) < 4.0 * se


def test_strip_history_is_the_accepted_prefix():
    seen = []

    def rate(t, history):
        seen.append(np.asarray(history).copy())
        return 1.0

    intensity = DominatedIntensity(bound=1.0, rate=rate)
    strip = sample_inhomogeneous_strip(50.0, intensity, _gen(7))
    # with rate == bound everything is accepted, so the i-th evaluation sees
    # exactly the first i accepted times
    for i, hist in enumerate(seen):
        assert np.array_equal(hist, strip.times[:i])


def test_strip_rejects_rate_above_bound():
    intensity = DominatedIntensity(bound=1.0, rate=lambda t, hist: 2.0)
    with pytest.raises(SamplerError, match="exceeds declared bound"):
        sample_inhomogeneous_strip(200.0, intensity, _gen(8))


def test_strip_rejects_negative_rate():
    intensity = DominatedIntensity(bound=1.0, rate=lambda t, hist: -0.5)
    with pytest.raises(SamplerError, match="negative"):
        sample_inhomogeneous_strip(200.0, intensity, _gen(9))


def test_thinning_consistency_with_homogeneous_target():
    # thinning a dominated strip at constant rate p*M must match a plain
    # homogeneous draw at rate p*M in count law and position law
    M, p, T = 4.0, 0.35, 10.0
    intensity = DominatedIntensity(bound=M, rate=lambda t, hist: p * M)
    rng = _gen(10)
    thinned_counts, thinned_pos = [], []
    for _ in range(10_000):
        strip = sample_inhomogeneous_strip(T, intensity, rng)
        thinned_counts.append(strip.accepted_times.size)
        thinned_pos.append(strip.accepted_times)
    rng2 = _gen(11)
    line = Window((0.0,), (T,))
    direct_counts, direct_pos = [], []
    for _ in range(10_000):
        pat = sample_homogeneous(line, p * M, rng2)
        direct_counts.append(pat.n)
        direct_pos.append(pat.points[:, 0])
    ks_counts = two_sample_ks(np.asarray(thinned_counts), np.asarray(direct_counts), alpha=0.01)
    ks_pos = two_sample_ks(np.concatenate(thinned_pos), np.concatenate(direct_pos), alpha=0.01)
    assert ks_counts.accepted, ks_counts.to_dict()
    assert ks_pos.accepted, ks_pos.to_dict()


def test_superposition_of_independent_poissons_is_poisson():
    lam1, lam2 = 1.5, 2.5
    rng = _gen(12)
    counts = []
    for _ in range(20_000):
        a = sample_homogeneous(UNIT_SQUARE, lam1, rng)
        b = sample_homogeneous(UNIT_SQUARE, lam2, rng)
        counts.append(a.superpose(b).n)
    counts = np.asarray(counts)
    lam = lam1 + lam2
    k_hi = 12
    probs = [math.exp(-lam) * lam**k / math.factorial(k) for k in range(k_hi)]
    probs.append(1.0 - sum(probs))
    observed = np.bincount(np.minimum(counts, k_hi), minlength=k_hi + 1)
    rep = chi_square(observed, np.asarray(probs), alpha=0.01)
    assert rep.accepted, rep.to_dict()


# -- finite-density sampler ---------------------------------------------------------


def test_finite_density_zero_density_is_empty():
    pat = sample_poisson_finite_density(
        lambda t: np.zeros_like(np.asarray(t, dtype=float)), _gen(13), upper=1.0
    )
    assert pat.n == 0


def test_finite_density_exponential_mean_and_positions():
    sampler = FiniteDensitySampler(
        lambda t: np.exp(-np.asarray(t, dtype=float)),
        tail_mass=lambda t: math.exp(-t),
        total_mass=1.0,
    )
    assert sampler.total_mass == pytest.approx(1.0)
    rng = _gen(14)
    counts = rng.poisson(sampler.total_mass, size=100_000)
    assert abs(counts.mean() - 1.0) < 0.01
    pos = sampler.positions(100_000, rng)
    rep = ks_against_cdf(pos, lambda t: -np.expm1(-np.clip(t, 0.0, None)), alpha=0.01)
    # inverse-CDF interpolation carries a small documented grid bias; the KS
    # statistic must still sit below the 1% band at n = 1e5
    assert rep.statistic < 1.63 / math.sqrt(pos.size)
    assert rep.accepted


def test_finite_density_one_shot_draw_matches_mass():
    pat = sample_poisson_finite_density(
        lambda t: 2.0 * np.exp(-2.0 * np.asarray(t, dtype=float)),
        _gen(15),
        tail_mass=lambda t: math.exp(-2.0 * t),
    )
    assert pat.dim == 1
    assert np.all(pat.points >= 0.0)


def test_finite_density_requires_support_information():
    with pytest.raises(SamplerError, match="support endpoint|tail mass"):
        FiniteDensitySampler(lambda t: np.exp(-np.asarray(t)))


def test_finite_density_divergent_mass_rejected():
    with pytest.raises(SamplerError, match="diverges"):
        FiniteDensitySampler(
            lambda t: np.ones_like(np.asarray(t, dtype=float)),
            total_mass=math.inf,
            upper=1.0,
        )


def test_finite_density_negative_density_rejected():
    with pytest.raises(SamplerError, match="negative"):
        FiniteDensitySampler(lambda t: -np.ones_like(np.asarray(t, dtype=float)), upper=1.0)


def test_finite_density_table_reuse_is_deterministic():
    sampler = FiniteDensitySampler(
        lambda t: np.exp(-np.asarray(t, dtype=float)),
        tail_mass=lambda t: math.exp(-t),
    )
    a = sampler.positions(100, _gen(16))
    b = sampler.positions(100, _gen(16))
    assert np.array_equal(a, b)
