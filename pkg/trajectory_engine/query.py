"""Range queries over compressed trajectories and their evaluation.

``rqc`` filters with the index and verifies in three stages: run MBR
containment, retained points inside the region, then the sampled
probability that some discarded point falls inside. ``rqc_linear`` runs the
same verification over every segment without the index; both draw from the
same per-segment generators so their result sets are equal.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from time import perf_counter
from typing import Dict, FrozenSet, List, Literal, Optional, Sequence, Set, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import ConfigurationError, CorrespondenceError
from .geometry import Rect, segment_rect_distance
from .index import AspTree, SegmentRun
from .io_model import CompressedDataset, CompressedTrajectory, RawTrajectory
from .uncertainty import SamplerConfig, compose_trajectory_probability, estimate_segment_probability, segment_rng

logger = structlog.get_logger()

Mode = Literal['traditional', 'probabilistic']


class RangeQuery(BaseModel):
    region: Rect
    probability_threshold: float = Field(default=0.5, ge=0, lt=1)
    sampler: SamplerConfig

    @field_validator('region')
    @classmethod
    def _valid_region(cls, v: Rect) -> Rect:
        return Rect(*(float(c) for c in v)).validated()


class QueryDiagnostics(BaseModel):
    candidates: int = 0
    runs: int = 0
    after_mbr: int = 0
    after_endpoints: int = 0
    segments_sampled: int = 0
    # wall-clock seconds per stage; never part of machine output
    timings: Dict[str, float] = {}


class QueryOutcome(BaseModel):
    accepted_by_mbr: FrozenSet[str] = frozenset()
    accepted_by_endpoint: FrozenSet[str] = frozenset()
    accepted_by_probability: FrozenSet[str] = frozenset()
    probabilities: Dict[str, float] = {}
    diagnostics: QueryDiagnostics = QueryDiagnostics()

    @property
    def result_ids(self) -> FrozenSet[str]:
        return self.accepted_by_mbr | self.accepted_by_endpoint | self.accepted_by_probability


def _check_pairing(dataset: CompressedDataset, tree: AspTree) -> None:
    if dataset.trajectories and tree.epsilon != dataset.epsilon:
        raise ConfigurationError(f'index epsilon {tree.epsilon} does not match dataset epsilon {dataset.epsilon}')
    ids = [c.id for c in dataset.trajectories]
    if ids != tree.trajectory_ids:
        raise ConfigurationError(
            f'index covers {len(tree.trajectory_ids)} trajectories, dataset has {len(ids)} (built over another dataset?)')
    if tree.dataset_checksum != dataset.checksum:
        raise ConfigurationError('index was built over a different compression of these trajectories '
                                 f'(dataset checksum {dataset.checksum[:12]}, index expects {tree.dataset_checksum[:12]})')


def _in_rect(xy: np.ndarray, r: Rect) -> np.ndarray:
    return (xy[:, 0] >= r.min_x) & (xy[:, 0] <= r.max_x) & (xy[:, 1] >= r.min_y) & (xy[:, 1] <= r.max_y)


class _Verifier:
    """Stages 2-4 for one query, applied trajectory by trajectory."""

    def __init__(self, query: RangeQuery, epsilon: float, query_index: int):
        self.query = query
        self.region = query.region
        self.epsilon = epsilon
        self.query_index = query_index
        self.mbr: Set[str] = set()
        self.endpoint: Set[str] = set()
        self.probable: Set[str] = set()
        self.probabilities: Dict[str, float] = {}
        self.after_mbr = 0
        self.after_endpoints = 0
        self.segments_sampled = 0
        self.timings = {'mbr': 0.0, 'endpoints': 0.0, 'probability': 0.0}

    def run(self, c: CompressedTrajectory, spans: Sequence[Tuple[int, int]]) -> None:
        r = self.region
        eps = self.epsilon
        qs = c.query_segments

        t0 = perf_counter()
        kept = []
        for s, e in spans:
            pts = qs[s:e + 1]
            mbr = Rect(float(min(pts[:, 0].min(), pts[:, 2].min())), float(min(pts[:, 1].min(), pts[:, 3].min())),
                       float(max(pts[:, 0].max(), pts[:, 2].max())), float(max(pts[:, 1].max(), pts[:, 3].max()))
                       ).expand(eps)
            if not mbr.overlaps(r):
                continue
            if r.contains_rect(mbr):
                self.mbr.add(c.id)
                self.timings['mbr'] += perf_counter() - t0
                return
            kept.append((s, e))
        self.timings['mbr'] += perf_counter() - t0
        if not kept:
            return
        self.after_mbr += 1

        t1 = perf_counter()
        for s, e in kept:
            ends = np.concatenate([qs[s:e + 1, 0:2], qs[e:e + 1, 2:4]])
            if _in_rect(ends, r).any():
                self.endpoint.add(c.id)
                self.timings['endpoints'] += perf_counter() - t1
                return
        self.timings['endpoints'] += perf_counter() - t1
        self.after_endpoints += 1

        t2 = perf_counter()
        seg_ids = np.concatenate([np.arange(s, e + 1) for s, e in kept])
        rows = qs[seg_ids]
        touching = (segment_rect_distance(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], r) <= eps) & (rows[:, 4] > 0)
        probs = []
        sampler = self.query.sampler
        for k in seg_ids[touching].tolist():
            rng = segment_rng(sampler.rng_seed, self.query_index, c.id, k)
            probs.append(estimate_segment_probability(c.segment(k), r, eps, int(qs[k, 4]), sampler, rng))
        self.segments_sampled += len(probs)
        p = compose_trajectory_probability(probs)
        if probs:
            self.probabilities[c.id] = p
        if p > self.query.probability_threshold:
            self.probable.add(c.id)
        self.timings['probability'] += perf_counter() - t2

    def outcome(self, candidates: int, runs: int, filter_seconds: float) -> QueryOutcome:
        return QueryOutcome(
            accepted_by_mbr=frozenset(self.mbr),
            accepted_by_endpoint=frozenset(self.endpoint),
            accepted_by_probability=frozenset(self.probable),
            probabilities=self.probabilities,
            diagnostics=QueryDiagnostics(
                candidates=candidates,
                runs=runs,
                after_mbr=self.after_mbr,
                after_endpoints=self.after_endpoints,
                segments_sampled=self.segments_sampled,
                timings={'filter': filter_seconds, **self.timings},
            ),
        )


def _group_runs(runs: Sequence[SegmentRun]) -> Dict[str, List[Tuple[int, int]]]:
    out: Dict[str, List[Tuple[int, int]]] = {}
    for run in runs:
        out.setdefault(run.trajectory_id, []).append((run.start, run.end))
    return out


def rqc(query: RangeQuery, dataset: CompressedDataset, tree: AspTree, query_index: int = 0) -> QueryOutcome:
    _check_pairing(dataset, tree)
    t0 = perf_counter()
    runs = tree.query_leaves(query.region)
    grouped = _group_runs(runs)
    filter_seconds = perf_counter() - t0

    verifier = _Verifier(query, dataset.epsilon if dataset.trajectories else tree.epsilon, query_index)
    by_id = dataset.by_id
    for tid, spans in grouped.items():
        verifier.run(by_id[tid], spans)
    outcome = verifier.outcome(len(grouped), len(runs), filter_seconds)
    logger.debug('query.rqc.done', query=query_index, candidates=len(grouped), results=len(outcome.result_ids),
                 duration=perf_counter() - t0)
    return outcome


def rqc_linear(query: RangeQuery, dataset: CompressedDataset, query_index: int = 0) -> QueryOutcome:
    """Index-free reference: every trajectory is one run over all its segments."""
    t0 = perf_counter()
    verifier = _Verifier(query, dataset.epsilon if dataset.trajectories else 1.0, query_index)
    for c in dataset.trajectories:
        verifier.run(c, [(0, len(c.query_segments) - 1)])
    outcome = verifier.outcome(len(dataset), len(dataset), 0.0)
    logger.debug('query.linear.done', query=query_index, results=len(outcome.result_ids),
                 duration=perf_counter() - t0)
    return outcome


def query_raw(region: Rect, raw_set: Sequence[RawTrajectory]) -> Set[str]:
    """Ids of raw trajectories with at least one point inside ``region``."""
    out = set()
    for tr in raw_set:
        if tr.bounds().overlaps(region) and _in_rect(tr.xy, region).any():
            out.add(tr.id)
    return out


def query_compressed_traditional(region: Rect, dataset: CompressedDataset) -> Set[str]:
    out = set()
    for c in dataset.trajectories:
        if c.bounds().overlaps(region) and _in_rect(c.xy, region).any():
            out.add(c.id)
    return out


def precision_recall_f1(truth: Set[str], returned: Set[str]) -> Optional[Tuple[float, float, float]]:
    """Pre, Rec and F1 of ``returned`` against ``truth``; None when both are empty."""
    if not truth and not returned:
        return None
    if not truth or not returned:
        return 0.0, 0.0, 0.0
    hit = len(truth & returned)
    precision = hit / len(returned)
    recall = hit / len(truth)
    f1 = 2.0 * precision * recall / (precision + recall) if hit else 0.0
    return precision, recall, f1


class QueryBatchSpec(BaseModel):
    count: int = Field(default=100, ge=0)
    area_min: float = Field(default=1.0e4, gt=0)
    area_max: float = Field(default=1.0e5, gt=0)
    # width / height
    aspect_ratio: float = Field(default=1.0, gt=0)

    @model_validator(mode='after')
    def _range(self) -> 'QueryBatchSpec':
        if self.area_min > self.area_max:
            raise ValueError(f'area_min {self.area_min} exceeds area_max {self.area_max}')
        return self


def generate_query_batch(bounds: Optional[Rect], spec: QueryBatchSpec, seed: int) -> List[Rect]:
    """Rectangles with centres uniform in ``bounds`` and areas uniform in ``[area_min, area_max]``."""
    if bounds is None or spec.count == 0:
        return []
    rng = np.random.default_rng(seed)
    cx = rng.uniform(bounds.min_x, bounds.max_x, size=spec.count)
    cy = rng.uniform(bounds.min_y, bounds.max_y, size=spec.count)
    area = rng.uniform(spec.area_min, spec.area_max, size=spec.count)
    width = np.sqrt(area * spec.aspect_ratio)
    height = area / width
    return [Rect.from_center(float(x), float(y), float(w), float(h))
            for x, y, w, h in zip(cx, cy, width, height)]


class QueryMetrics(BaseModel):
    query_index: int
    region: Tuple[float, float, float, float]
    raw_count: int
    returned_count: int
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None

    @property
    def skipped(self) -> bool:
        return self.precision is None


class EvalReport(BaseModel):
    mode: Mode
    probability_threshold: float
    n_samples: int
    rows: List[QueryMetrics]
    evaluated: int
    skipped: int
    avg_precision: Optional[float] = None
    avg_recall: Optional[float] = None
    avg_f1: Optional[float] = None


def check_correspondence(raw_set: Sequence[RawTrajectory], dataset: CompressedDataset) -> None:
    raw_ids = {r.id for r in raw_set}
    comp_ids = set(dataset.by_id)
    if raw_ids != comp_ids:
        missing = sorted(raw_ids - comp_ids)[:3]
        extra = sorted(comp_ids - raw_ids)[:3]
        raise CorrespondenceError(
            f'raw and compressed datasets differ: missing from compressed {missing}, unknown in compressed {extra}')


def evaluate(queries: Sequence[Rect], raw_set: Sequence[RawTrajectory], dataset: CompressedDataset,
             tree: Optional[AspTree], mode: Mode, probability_threshold: float = 0.5,
             sampler: Optional[SamplerConfig] = None, threads: int = 1) -> EvalReport:
    check_correspondence(raw_set, dataset)
    if sampler is None:
        sampler = SamplerConfig(sigma=dataset.sigma)
    if mode == 'probabilistic' and tree is None:
        raise ConfigurationError('probabilistic evaluation needs an index')
    start = perf_counter()

    def one(i: int) -> QueryMetrics:
        region = queries[i]
        truth = query_raw(region, raw_set)
        if mode == 'traditional':
            returned = query_compressed_traditional(region, dataset)
        else:
            q = RangeQuery(region=region, probability_threshold=probability_threshold, sampler=sampler)
            returned = set(rqc(q, dataset, tree, query_index=i).result_ids)
        m = precision_recall_f1(truth, returned)
        row = QueryMetrics(query_index=i, region=tuple(region), raw_count=len(truth), returned_count=len(returned))
        if m is not None:
            row = row.model_copy(update={'precision': m[0], 'recall': m[1], 'f1': m[2]})
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(len(queries))))
    else:
        rows = [one(i) for i in range(len(queries))]

    scored = [r for r in rows if not r.skipped]
    report = EvalReport(
        mode=mode,
        probability_threshold=probability_threshold,
        n_samples=sampler.n_samples,
        rows=rows,
        evaluated=len(scored),
        skipped=len(rows) - len(scored),
    )
    if scored:
        report = report.model_copy(update={
            'avg_precision': math.fsum(r.precision for r in scored) / len(scored),
            'avg_recall': math.fsum(r.recall for r in scored) / len(scored),
            'avg_f1': math.fsum(r.f1 for r in scored) / len(scored),
        })
    logger.info('query.evaluate.done', mode=mode, queries=len(rows), evaluated=len(scored),
                recall=report.avg_recall, duration=perf_counter() - start)
    return report
