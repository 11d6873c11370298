from __future__ import annotations

from typing import List

import pytest

from trajectory_engine.compressor import CompressionConfig, compress_dataset
from trajectory_engine.index import AspTree, IndexConfig
from trajectory_engine.io_model import CompressedDataset, CompressedTrajectory, RawTrajectory
from trajectory_engine.synthetic import SyntheticSpec, generate_synthetic


def make_compressed(tid: str, points, discarded, epsilon: float = 1.0) -> CompressedTrajectory:
    return CompressedTrajectory(id=tid, xy=points, t=list(range(len(points))), discarded=discarded, epsilon=epsilon)


@pytest.fixture
def collinear() -> RawTrajectory:
    return RawTrajectory.from_points('line', [(0, 0, 0), (1, 0, 1), (2, 0, 2), (3, 0, 3)])


@pytest.fixture
def zigzag() -> RawTrajectory:
    return RawTrajectory.from_points('zig', [(0, 0, 0), (1, 1, 1), (2, 0, 2), (3, 1, 3)])


@pytest.fixture(scope='session')
def small_raw() -> List[RawTrajectory]:
    spec = SyntheticSpec(count=30, points_min=60, points_max=150, extent=1500.0)
    return generate_synthetic(spec, seed=7)


@pytest.fixture(scope='session')
def small_dataset(small_raw) -> CompressedDataset:
    return compress_dataset(small_raw, CompressionConfig(epsilon=8.0)).dataset


@pytest.fixture(scope='session')
def small_tree(small_dataset) -> AspTree:
    return AspTree.build(small_dataset, IndexConfig(xi=8, epsilon=small_dataset.epsilon))


@pytest.fixture
def grid_dataset() -> CompressedDataset:
    """16 horizontal rows of 16 retained points each: every median split halves the points."""
    rows = [make_compressed(f'row-{j:02d}', [(10.0 * i, 10.0 * j) for i in range(16)], [0] * 15)
            for j in range(16)]
    return CompressedDataset.build(rows, epsilon=1.0, sigma=0.0)
