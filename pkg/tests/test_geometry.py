from __future__ import annotations

import math

import numpy as np
import pytest

from trajectory_engine.errors import DegenerateGeometryError, MalformedInputError, PreconditionError
from trajectory_engine.geometry import (CandidateRegion, EpsilonRegion, Point2, Rect, Segment2, Wedge,
                                        candidate_contains, candidate_init, candidate_update, intersect_wedges,
                                        ped, ped_many, project_equirectangular, psed, psed_many, rect_contains,
                                        segment_intersects_disc, segment_rect_distance, wedge_of, wrap_angle)


def seg(x0, y0, x1, y1) -> Segment2:
    return Segment2(Point2(x0, y0), Point2(x1, y1))


def test_ped_examples():
    assert ped(Point2(2, 3), seg(0, 0, 4, 0)) == 3.0
    assert ped(Point2(2, 0), seg(0, 0, 4, 0)) == 0.0
    assert ped(Point2(-1, 0), seg(0, 0, 1, 0)) == 0.0


def test_ped_rejects_zero_length_segment():
    with pytest.raises(DegenerateGeometryError):
        ped(Point2(1, 1), seg(0, 0, 0, 0))
    with pytest.raises(DegenerateGeometryError):
        ped_many([[1, 1]], seg(2, 2, 2, 2))


def test_psed_examples():
    assert psed(Point2(2, 3), seg(0, 0, 4, 0)) == 3.0
    assert psed(Point2(-1, 0), seg(0, 0, 1, 0)) == 1.0
    assert psed(Point2(5, 1), seg(0, 0, 4, 0)) == pytest.approx(math.sqrt(2))


def test_psed_degenerate_segment_is_point_distance():
    assert psed(Point2(3, 4), seg(0, 0, 0, 0)) == 5.0


def test_psed_matches_dense_sampling():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x0, y0, x1, y1, mx, my = rng.uniform(-10, 10, size=6)
        s = seg(x0, y0, x1, y1)
        along = np.linspace(0.0, 1.0, 20001)
        px = x0 + along * (x1 - x0)
        py = y0 + along * (y1 - y0)
        brute = np.hypot(px - mx, py - my).min()
        assert psed(Point2(mx, my), s) == pytest.approx(brute, abs=2e-3)


def test_psed_many_agrees_with_scalar():
    rng = np.random.default_rng(11)
    s = seg(1, 2, 7, -3)
    pts = rng.uniform(-10, 10, size=(200, 2))
    expected = [psed(Point2(x, y), s) for x, y in pts]
    np.testing.assert_allclose(psed_many(pts, s), expected, rtol=1e-12, atol=1e-12)


def test_ped_never_exceeds_psed():
    rng = np.random.default_rng(5)
    s = seg(0, 0, 4, 1)
    pts = rng.uniform(-5, 10, size=(500, 2))
    assert (ped_many(pts, s) <= psed_many(pts, s) + 1e-12).all()


def test_segment_intersects_disc():
    assert segment_intersects_disc(seg(0, 0, 4, 0), EpsilonRegion(Point2(2, 1), 1.0))
    assert not segment_intersects_disc(seg(0, 0, 4, 0), EpsilonRegion(Point2(2, 2), 1.0))
    assert segment_intersects_disc(seg(0, 0, 0, 0), EpsilonRegion(Point2(0, 0.5), 1.0))


def test_wedge_of_examples():
    w = wedge_of(Point2(0, 0), Point2(2, 0), 1.0)
    assert w.lo == pytest.approx(-math.pi / 6)
    assert w.hi == pytest.approx(math.pi / 6)

    w = wedge_of(Point2(0, 0), Point2(0, math.sqrt(2)), 1.0)
    assert w.lo == pytest.approx(math.pi / 4)
    assert w.hi == pytest.approx(3 * math.pi / 4)

    w = wedge_of(Point2(1, 1), Point2(4, 1), 1.5)
    assert (w.lo, w.hi) == (pytest.approx(-math.pi / 6), pytest.approx(math.pi / 6))


def test_wedge_of_requires_target_outside_region():
    with pytest.raises(PreconditionError):
        wedge_of(Point2(0, 0), Point2(0.5, 0), 1.0)


def test_wrap_angle_range():
    for a in (-7.0, -math.pi, 0.0, math.pi, 4.0, 13.0):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)


def test_intersect_wedges_across_the_branch_cut():
    a = Wedge(math.pi - 0.1, 0.3)
    b = Wedge(-math.pi + 0.1, 0.3)
    both = intersect_wedges(a, b)
    assert both is not None
    assert abs(wrap_angle(both.center - math.pi)) < 1e-12
    assert both.half == pytest.approx(0.2)


def test_intersect_wedges_disjoint():
    assert intersect_wedges(Wedge(0.0, 0.2), Wedge(1.0, 0.2)) is None


def test_fresh_region_contains_everything():
    region = candidate_init(Point2(0, 0))
    assert region.is_fresh
    assert candidate_contains(region, Point2(99, -7))
    assert candidate_contains(region, Point2(0, 0))


def test_candidate_update_examples():
    region = candidate_update(candidate_init(Point2(0, 0)), Point2(2, 0), 1.0)
    assert region.wedge.lo == pytest.approx(-math.pi / 6)
    assert region.wedge.hi == pytest.approx(math.pi / 6)
    assert region.min_radius == 2.0

    region2 = candidate_update(region, Point2(3, 0.5), 1.0)
    d = math.sqrt(9.25)
    centre = math.atan2(0.5, 3)
    half = math.asin(1 / d)
    assert region2.wedge.lo == pytest.approx(max(-math.pi / 6, centre - half))
    assert region2.wedge.hi == pytest.approx(min(math.pi / 6, centre + half))
    assert region2.min_radius == pytest.approx(d)


def test_candidate_update_opposite_point_empties_region():
    region = candidate_update(candidate_init(Point2(0, 0)), Point2(2, 0), 1.0)
    region = candidate_update(region, Point2(-3, 0), 1.0)
    assert region.empty
    assert not candidate_contains(region, Point2(5, 0))
    with pytest.raises(PreconditionError):
        candidate_update(region, Point2(6, 0), 1.0)


def test_candidate_contains_examples():
    region = candidate_update(candidate_init(Point2(0, 0)), Point2(2, 0), 1.0)
    assert candidate_contains(region, Point2(3, 0.5))
    assert segment_intersects_disc(seg(0, 0, 3, 0.5), EpsilonRegion(Point2(2, 0), 1.0))
    assert not candidate_contains(region, Point2(1.5, 0))
    assert not candidate_contains(region, Point2(2, 2))


def test_candidate_region_soundness_randomised():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(2000):
        eps = rng.uniform(0.1, 2.0)
        anchor = Point2(*rng.uniform(-5, 5, size=2))
        region = CandidateRegion(anchor)
        updates = []
        for _ in range(int(rng.integers(1, 5))):
            p = Point2(*(np.array(anchor) + rng.uniform(-20, 20, size=2)))
            if math.hypot(p.x - anchor.x, p.y - anchor.y) <= eps or region.empty:
                continue
            region = region.update(p, eps)
            updates.append(p)
        probe = Point2(*(np.array(anchor) + rng.uniform(-30, 30, size=2)))
        if updates and region.contains(probe):
            checked += 1
            for u in updates:
                assert psed(u, Segment2(anchor, probe)) <= eps + 1e-9
    assert checked > 0


def test_rect_contains_closed_bounds():
    r = Rect(0, 0, 1, 1)
    assert rect_contains(r, Point2(0.5, 0.5))
    assert rect_contains(r, Point2(1, 1))
    assert not rect_contains(r, Point2(1.0001, 0.5))


def test_rect_validation():
    with pytest.raises(MalformedInputError):
        Rect(1, 0, 0, 1).validated()
    with pytest.raises(MalformedInputError):
        Rect(0, 0, math.inf, 1).validated()


def test_rect_helpers():
    r = Rect.from_center(5, 5, 4, 2)
    assert r == Rect(3, 4, 7, 6)
    assert r.area == 8
    assert r.expand(1) == Rect(2, 3, 8, 7)
    assert r.overlaps(Rect(7, 6, 9, 9))
    assert not r.overlaps(Rect(7.5, 6, 9, 9))
    assert r.expand(1).contains_rect(r)


@pytest.mark.parametrize('rect, expected', [
    (Rect(1, 0.5, 2, 2), 0.5),
    (Rect(0, 2.01, 4, 3), 2.01),
    (Rect(5, 0, 6, 1), 1.0),
    (Rect(1, -1, 2, 1), 0.0),
    (Rect(-1, -1, 5, 1), 0.0),
])
def test_segment_rect_distance_examples(rect, expected):
    assert float(segment_rect_distance(0, 0, 4, 0, rect)) == pytest.approx(expected)


def test_segment_rect_distance_diagonal_miss():
    # diagonal passing just outside a corner
    r = Rect(0, 0, 1, 1)
    d = float(segment_rect_distance(0, 3, 3, 0, r))
    assert d == pytest.approx(1.0 / math.sqrt(2))


def test_segment_rect_distance_matches_sampling():
    rng = np.random.default_rng(17)
    r = Rect(-1, -1, 2, 1)
    for _ in range(100):
        x0, y0, x1, y1 = rng.uniform(-6, 6, size=4)
        along = np.linspace(0, 1, 4001)
        px = x0 + along * (x1 - x0)
        py = y0 + along * (y1 - y0)
        dx = np.maximum(np.maximum(r.min_x - px, 0), px - r.max_x)
        dy = np.maximum(np.maximum(r.min_y - py, 0), py - r.max_y)
        brute = np.hypot(dx, dy).min()
        assert float(segment_rect_distance(x0, y0, x1, y1, r)) == pytest.approx(brute, abs=5e-3)


def test_project_equirectangular_scale():
    x, y = project_equirectangular([0.0, 1.0], [0.0, 0.0], ref_lat=0.0)
    assert x[1] - x[0] == pytest.approx(111195.08, rel=1e-4)
    x60, _ = project_equirectangular([0.0, 1.0], [60.0, 60.0])
    assert x60[1] - x60[0] == pytest.approx((x[1] - x[0]) / 2, rel=1e-9)
