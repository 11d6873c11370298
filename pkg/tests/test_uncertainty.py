from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from trajectory_engine.errors import DegenerateGeometryError, PreconditionError
from trajectory_engine.geometry import Point2, Rect, Segment2, psed, psed_many
from trajectory_engine.uncertainty import (EpsilonBoundingRegion, SamplerConfig, compose_trajectory_probability,
                                           draw_offsets, ebr_intersects_rect, estimate_segment_probability,
                                           offset_points, probability_from_rate, sample_offset_point, sample_rate,
                                           segment_rng)

SEG = Segment2(Point2(0.0, 0.0), Point2(4.0, 0.0))


@pytest.mark.parametrize('rect, expected', [
    (Rect(1, 0.5, 2, 2), True),
    (Rect(0, 2.01, 4, 3), False),
    (Rect(5, 0, 6, 1), True),
])
def test_ebr_intersects_rect_examples(rect, expected):
    assert ebr_intersects_rect(EpsilonBoundingRegion(SEG, 1.0), rect) is expected


def test_ebr_bounds_and_membership():
    ebr = EpsilonBoundingRegion(SEG, 1.0)
    assert ebr.bounds() == Rect(-1, -1, 5, 1)
    assert ebr.contains(Point2(4.5, 0.5))
    assert not ebr.contains(Point2(4.8, 0.8))


def test_sampler_config_bounds():
    assert SamplerConfig(sigma=1.0).n_samples == 15
    with pytest.raises(ValidationError):
        SamplerConfig(sigma=-0.1)
    with pytest.raises(ValidationError):
        SamplerConfig(sigma=1.0, n_samples=0)


def test_zero_offset_lies_on_segment():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = sample_offset_point(SEG, 0.0, rng)
        assert psed(p, SEG) == pytest.approx(0.0, abs=1e-12)
        assert 0.0 <= p.x <= 4.0


def test_samples_sit_on_the_level_curve():
    rng = np.random.default_rng(1)
    rd = rng.uniform(0.0, 2.0, size=5000)
    pts = offset_points(SEG, rd, rng.random(5000))
    np.testing.assert_allclose(psed_many(pts, SEG), rd, atol=1e-9)

    tilted = Segment2(Point2(1.0, -2.0), Point2(-3.0, 5.0))
    pts = offset_points(tilted, rd, rng.random(5000))
    np.testing.assert_allclose(psed_many(pts, tilted), rd, atol=1e-9)


def test_cap_fraction_follows_perimeter():
    rng = np.random.default_rng(2)
    n = 100_000
    rd = 1.0
    pts = offset_points(SEG, np.full(n, rd), rng.random(n))
    on_caps = np.mean((pts[:, 0] < 0.0) | (pts[:, 0] > 4.0))
    expected = 2 * math.pi * rd / (2 * 4.0 + 2 * math.pi * rd)
    assert on_caps == pytest.approx(expected, abs=0.02)


def test_offset_curve_rejects_degenerate_segment():
    with pytest.raises(DegenerateGeometryError):
        sample_offset_point(Segment2(Point2(1, 1), Point2(1, 1)), 0.5, np.random.default_rng(0))


def test_half_plane_rate_converges_to_half():
    cfg = SamplerConfig(sigma=0.5, n_samples=100_000)
    upper = Rect(-10.0, 0.0, 10.0, 10.0)
    rate = sample_rate(SEG, upper, 1.0, cfg, np.random.default_rng(4))
    assert rate == pytest.approx(0.5, abs=0.01)


def test_truncated_gaussian_acceptance_mass():
    sigma, eps, n = 1.0, 1.0, 100_000
    offsets, attempts = draw_offsets(sigma, eps, n, np.random.default_rng(5))
    assert len(offsets) == n
    assert offsets.min() >= 0.0
    assert offsets.max() <= eps
    assert n / attempts == pytest.approx(math.erf(eps / (sigma * math.sqrt(2))), abs=0.02)


def test_zero_sigma_draws_zero_offsets():
    offsets, attempts = draw_offsets(0.0, 1.0, 7, np.random.default_rng(0))
    assert offsets.tolist() == [0.0] * 7
    assert attempts == 7


def test_probability_examples():
    cfg = SamplerConfig(sigma=0.5, n_samples=50)
    assert estimate_segment_probability(SEG, Rect(10, 10, 11, 11), 1.0, 5, cfg) == 0.0
    assert estimate_segment_probability(SEG, Rect(-2, -2, 6, 2), 1.0, 5, cfg) == 1.0
    assert probability_from_rate(0.5, 2) == 0.75


def test_no_discarded_points_means_zero_probability():
    cfg = SamplerConfig(sigma=0.5)
    assert estimate_segment_probability(SEG, Rect(-2, -2, 6, 2), 1.0, 0, cfg) == 0.0
    with pytest.raises(PreconditionError):
        estimate_segment_probability(SEG, Rect(-2, -2, 6, 2), 1.0, -1, cfg)


def test_degenerate_segment_samples_a_circle():
    point = Segment2(Point2(3.0, 3.0), Point2(3.0, 3.0))
    cfg = SamplerConfig(sigma=0.5, n_samples=200)
    assert estimate_segment_probability(point, Rect(0, 0, 6, 6), 1.0, 3, cfg) == 1.0


def test_compose_examples():
    assert compose_trajectory_probability([0.5, 0.5]) == 0.75
    assert compose_trajectory_probability([0, 0, 0]) == 0.0
    assert compose_trajectory_probability([1, 0.2]) == 1.0
    assert compose_trajectory_probability([]) == 0.0
    with pytest.raises(PreconditionError):
        compose_trajectory_probability([1.5])


def test_segment_rng_is_keyed():
    a = segment_rng(7, 3, 'traj-1', 12).random()
    assert segment_rng(7, 3, 'traj-1', 12).random() == a
    assert segment_rng(7, 3, 'traj-2', 12).random() != a
    assert segment_rng(7, 4, 'traj-1', 12).random() != a
    assert segment_rng(8, 3, 'traj-1', 12).random() != a


def test_shared_draws_are_monotone_in_region():
    cfg = SamplerConfig(sigma=0.5, n_samples=64)
    small = Rect(1.0, -0.5, 2.0, 1.5)
    large = Rect(0.5, -1.0, 3.0, 2.0)
    for k in range(20):
        p_small = estimate_segment_probability(SEG, small, 1.0, 4, cfg, segment_rng(0, 0, 't', k))
        p_large = estimate_segment_probability(SEG, large, 1.0, 4, cfg, segment_rng(0, 0, 't', k))
        assert p_small <= p_large
