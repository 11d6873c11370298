from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from trajectory_engine.compressor import CompressionConfig, roce_compress, verify_error_bound
from trajectory_engine.errors import InvalidSpecError
from trajectory_engine.geometry import Segment2, ped, psed
from trajectory_engine.synthetic import SyntheticSpec, generate_synthetic

STRAIGHT = dict(weight_smooth=1.0, weight_zigzag=0.0, weight_uturn=0.0, turn_std=0.0, step_std=0.0)


def test_generation_is_seeded():
    spec = SyntheticSpec(count=5, points_min=10, points_max=30)
    a = generate_synthetic(spec, seed=1)
    b = generate_synthetic(spec, seed=1)
    c = generate_synthetic(spec, seed=2)
    assert [t.id for t in a] == ['traj-00000', 'traj-00001', 'traj-00002', 'traj-00003', 'traj-00004']
    assert all(np.array_equal(x.xy, y.xy) for x, y in zip(a, b))
    assert not all(len(x) == len(y) and np.array_equal(x.xy, y.xy) for x, y in zip(a, c))
    assert all(10 <= len(t) <= 30 for t in a)


def test_straight_walks_compress_to_two_points():
    spec = SyntheticSpec(count=5, points_min=50, points_max=80, **STRAIGHT)
    for raw in generate_synthetic(spec, seed=3):
        assert raw.t[1] - raw.t[0] == spec.interval
        assert len(roce_compress(raw, CompressionConfig(epsilon=0.5))) == 2


def test_zigzags_keep_every_point():
    spec = SyntheticSpec(count=3, points_min=20, points_max=40, weight_smooth=0.0, weight_zigzag=1.0,
                         weight_uturn=0.0, turn_std=0.0, step_std=0.0)
    for raw in generate_synthetic(spec, seed=4):
        assert len(roce_compress(raw, CompressionConfig(epsilon=1.0))) == len(raw)


def test_u_turns_separate_ped_from_psed():
    spec = SyntheticSpec(count=1, points_min=60, points_max=60, weight_smooth=0.0, weight_zigzag=0.0,
                         weight_uturn=1.0, turn_std=0.0, step_std=0.0, uturn_leg_min=20, uturn_leg_max=20)
    raw = generate_synthetic(spec, seed=5)[0]
    pts = raw.points
    step = float(np.median(np.hypot(*np.diff(raw.xy, axis=0).T)))
    seg = Segment2(pts[0], pts[5])
    assert psed(pts[20], seg) - ped(pts[20], seg) > 10 * step

    c = roce_compress(raw, CompressionConfig(epsilon=1.0))
    assert {20, 40} <= set(c.raw_indices.tolist())
    assert verify_error_bound(raw, c, 1.0).ok


def test_invalid_specs():
    with pytest.raises(InvalidSpecError):
        SyntheticSpec(points_min=50, points_max=10)
    with pytest.raises(InvalidSpecError):
        SyntheticSpec(weight_smooth=0.0, weight_zigzag=0.0, weight_uturn=0.0)
    with pytest.raises(InvalidSpecError):
        SyntheticSpec(uturn_leg_min=30, uturn_leg_max=5)
    with pytest.raises(ValidationError):
        SyntheticSpec(count=0)
