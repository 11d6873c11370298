"""Error-bounded online compression under PSED.

``roce_compress`` is the one-pass candidate-region compressor,
``brute_force_compress`` the direct greedy used to cross-check it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, Field, field_validator

from .errors import EmptyTrajectoryError, EngineError, MalformedInputError, MismatchError
from .geometry import CandidateRegion, Point2, Segment2, distance, ped_many, psed, psed_many
from .io_model import CompressedDataset, CompressedTrajectory, RawTrajectory, check_unique_ids

logger = structlog.get_logger()

# absolute slack for floating point when checking the bound
BOUND_SLACK = 1e-9


class CompressionConfig(BaseModel):
    epsilon: float = Field(gt=0)

    @field_validator('epsilon')
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError('epsilon must be finite')
        return v


class CompressionStats(BaseModel):
    raw_point_count: int
    retained_point_count: int
    compression_rate: float
    max_psed: float
    avg_psed: float
    psed_std_dev: float
    discarded_count: int


@dataclass
class EvaluationCounter:
    distance_checks: int = 0
    contains_checks: int = 0
    updates: int = 0

    @property
    def total(self) -> int:
        return self.distance_checks + self.contains_checks + self.updates


@dataclass
class DeviationAccumulator:
    """Mergeable partial sums over discarded-point deviations."""
    count: int = 0
    total: float = 0.0
    sum_sq: float = 0.0
    maximum: float = 0.0

    def add(self, values: np.ndarray) -> None:
        if len(values) == 0:
            return
        self.count += int(len(values))
        self.total += float(values.sum())
        self.sum_sq += float(np.square(values).sum())
        self.maximum = max(self.maximum, float(values.max()))

    def merge(self, other: 'DeviationAccumulator') -> 'DeviationAccumulator':
        return DeviationAccumulator(self.count + other.count, self.total + other.total,
                                    self.sum_sq + other.sum_sq, max(self.maximum, other.maximum))

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def sigma(self) -> float:
        # zero-mean second moment
        return math.sqrt(self.sum_sq / self.count) if self.count else 0.0


class ErrorBoundReport(BaseModel):
    max_psed: float
    violation_index: Optional[int] = None
    violation_psed: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.violation_index is None


def _check_raw(raw: RawTrajectory) -> None:
    if len(raw.xy) == 0:
        raise EmptyTrajectoryError(f'trajectory {raw.id!r} has no points')
    steps = np.diff(raw.t)
    if len(steps) and not (steps > 0).all():
        raise MalformedInputError(f'trajectory {raw.id!r} has non-increasing timestamps')


def _assemble(raw: RawTrajectory, kept: List[int], epsilon: float) -> CompressedTrajectory:
    idx = np.asarray(kept, dtype=np.int64)
    return CompressedTrajectory(
        id=raw.id,
        xy=raw.xy[idx],
        t=raw.t[idx],
        discarded=np.diff(idx) - 1,
        epsilon=epsilon,
    )


def roce_compress(raw: RawTrajectory, cfg: CompressionConfig,
                  counter: Optional[EvaluationCounter] = None) -> CompressedTrajectory:
    _check_raw(raw)
    eps = cfg.epsilon
    pts = raw.points
    n = len(pts)
    if counter is None:
        counter = EvaluationCounter()

    kept = [0]
    i = 0
    while i < n - 1:
        anchor = pts[i]
        region = CandidateRegion(anchor)
        i += 1
        # points near the anchor constrain nothing: every segment from the anchor passes within eps
        while i < n:
            counter.distance_checks += 1
            if distance(anchor, pts[i]) > eps:
                break
            i += 1
        while i < n:
            counter.contains_checks += 1
            if not region.contains(pts[i]):
                break
            counter.updates += 1
            region = region.update(pts[i], eps)
            i += 1
        # close at the last accepted point; it anchors the next segment
        i -= 1
        kept.append(i)
    return _assemble(raw, kept, eps)


def brute_force_compress(raw: RawTrajectory, cfg: CompressionConfig) -> CompressedTrajectory:
    _check_raw(raw)
    eps = cfg.epsilon
    pts = raw.points
    n = len(pts)
    kept = [0]
    s = 0
    while s < n - 1:
        f = s + 1
        while f + 1 < n:
            seg = Segment2(pts[s], pts[f + 1])
            if all(psed(pts[m], seg) <= eps for m in range(s + 1, f + 1)):
                f += 1
            else:
                break
        kept.append(f)
        s = f
    return _assemble(raw, kept, eps)


def _check_subsequence(raw: RawTrajectory, compressed: CompressedTrajectory) -> np.ndarray:
    if compressed.raw_point_count != len(raw):
        raise MismatchError(
            f'trajectory {raw.id!r}: compressed form covers {compressed.raw_point_count} points, raw has {len(raw)}')
    idx = compressed.raw_indices
    if not (np.array_equal(raw.xy[idx], compressed.xy) and np.array_equal(raw.t[idx], compressed.t)):
        raise MismatchError(f'trajectory {raw.id!r}: retained points are not a subsequence of the raw points')
    return idx


def _segment_deviations(raw: RawTrajectory, idx: np.ndarray, metric: str = 'psed') -> List[Tuple[int, np.ndarray]]:
    """(first discarded raw index, deviations) for every segment with discarded points."""
    out = []
    for a, b in zip(idx[:-1].tolist(), idx[1:].tolist()):
        if b - a < 2:
            continue
        seg = Segment2(Point2(*raw.xy[a]), Point2(*raw.xy[b]))
        inner = raw.xy[a + 1:b]
        if metric == 'ped':
            values = ped_many(inner, seg) if not seg.is_degenerate else psed_many(inner, seg)
        else:
            values = psed_many(inner, seg)
        out.append((a + 1, values))
    return out


def verify_error_bound(raw: RawTrajectory, compressed: CompressedTrajectory, epsilon: float) -> ErrorBoundReport:
    idx = _check_subsequence(raw, compressed)
    worst = 0.0
    violation = None
    violation_value = None
    for first, values in _segment_deviations(raw, idx):
        worst = max(worst, float(values.max()))
        if violation is None:
            over = np.nonzero(values > epsilon + BOUND_SLACK)[0]
            if len(over):
                violation = first + int(over[0])
                violation_value = float(values[over[0]])
    return ErrorBoundReport(max_psed=worst, violation_index=violation, violation_psed=violation_value)


def deviations(raw: RawTrajectory, compressed: CompressedTrajectory, metric: str = 'psed') -> DeviationAccumulator:
    idx = _check_subsequence(raw, compressed)
    acc = DeviationAccumulator()
    for _, values in _segment_deviations(raw, idx, metric):
        acc.add(values)
    return acc


def stats_from(acc: DeviationAccumulator, raw_points: int, retained_points: int) -> CompressionStats:
    return CompressionStats(
        raw_point_count=raw_points,
        retained_point_count=retained_points,
        compression_rate=raw_points / retained_points if retained_points else 0.0,
        max_psed=acc.maximum,
        avg_psed=acc.mean,
        psed_std_dev=acc.sigma,
        discarded_count=acc.count,
    )


def compute_stats(raw: RawTrajectory, compressed: CompressedTrajectory) -> CompressionStats:
    return stats_from(deviations(raw, compressed), len(raw), len(compressed))


def ped_stats(raw: RawTrajectory, compressed: CompressedTrajectory) -> Tuple[float, float]:
    """(max, average) PED of the discarded points."""
    acc = deviations(raw, compressed, metric='ped')
    return acc.maximum, acc.mean


class CompressionFailure(BaseModel):
    trajectory_id: str
    error: str


class CompressionBatch(BaseModel):
    model_config = {'arbitrary_types_allowed': True}

    dataset: CompressedDataset
    stats: CompressionStats
    failures: List[CompressionFailure] = []


def _compress_one(raw: RawTrajectory, cfg: CompressionConfig):
    start = perf_counter()
    try:
        compressed = roce_compress(raw, cfg)
        acc = deviations(raw, compressed)
        logger.debug('compress.trajectory.done', trajectory=raw.id, points=len(raw),
                     retained=len(compressed), duration=perf_counter() - start)
        return compressed, acc, None
    except EngineError as e:
        logger.error('compress.trajectory.fail', trajectory=raw.id, error=e.detail)
        return None, None, CompressionFailure(trajectory_id=raw.id, error=e.detail)


def compress_dataset(raw_set: Sequence[RawTrajectory], cfg: CompressionConfig,
                     threads: int = 1) -> CompressionBatch:
    """Compress every trajectory; failures are collected, not raised.

    Output order follows input order for any thread count.
    """
    check_unique_ids(raw_set)
    start = perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _compress_one(r, cfg), raw_set))
    else:
        results = [_compress_one(r, cfg) for r in raw_set]

    compressed: List[CompressedTrajectory] = []
    failures: List[CompressionFailure] = []
    acc = DeviationAccumulator()
    raw_points = 0
    for raw, (c, a, failure) in zip(raw_set, results):
        if failure is not None:
            failures.append(failure)
            continue
        compressed.append(c)
        acc = acc.merge(a)
        raw_points += len(raw)

    dataset = CompressedDataset.build(compressed, epsilon=cfg.epsilon, sigma=acc.sigma)
    stats = stats_from(acc, raw_points, dataset.header.point_count)
    logger.info('compress.dataset.done', trajectories=len(compressed), failures=len(failures),
                rate=stats.compression_rate, sigma=acc.sigma, duration=perf_counter() - start)
    return CompressionBatch(dataset=dataset, stats=stats, failures=failures)


def epsilon_for_rate(raw_set: Sequence[RawTrajectory], target_rate: float, *,
                     rel_tol: float = 0.05, max_iter: int = 40) -> Tuple[float, float]:
    """Search for the epsilon whose dataset compression rate is closest to ``target_rate``.

    Rate grows with epsilon (not strictly), so a geometric bisection over a
    bracketing interval is used. Returns (epsilon, achieved rate).
    """
    total = sum(len(r) for r in raw_set)
    box = None
    for r in raw_set:
        b = r.bounds()
        box = b if box is None else box.union(b)
    if box is None:
        raise EmptyTrajectoryError('cannot search epsilon over an empty dataset')

    def rate_at(eps: float) -> float:
        cfg = CompressionConfig(epsilon=eps)
        retained = sum(len(roce_compress(r, cfg)) for r in raw_set)
        return total / retained

    lo = 1e-9
    hi = max(math.hypot(box.width, box.height), 1e-6) * 2.0
    best = (hi, rate_at(hi))
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        rate = rate_at(mid)
        if abs(rate - target_rate) < abs(best[1] - target_rate):
            best = (mid, rate)
        if abs(rate - target_rate) <= rel_tol * target_rate:
            break
        if rate < target_rate:
            lo = mid
        else:
            hi = mid
    logger.info('compress.epsilon.search', target=target_rate, epsilon=best[0], rate=best[1])
    return best
