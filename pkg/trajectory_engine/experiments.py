"""Parameter sweeps behind the evaluation plots.

Every sweep returns a list of row models; fields named in ``TIMING_FIELDS`` are
wall-clock timings and are left out of machine-readable output unless asked
for.
"""
from __future__ import annotations

from time import perf_counter
from typing import List, Optional, Sequence

import structlog
from pydantic import BaseModel

from .compressor import (CompressionConfig, DeviationAccumulator, compress_dataset, deviations, epsilon_for_rate,
                         roce_compress, stats_from)
from .index import AspTree, IndexConfig
from .io_model import CompressedDataset, RawTrajectory, dataset_bounds
from .query import (EvalReport, QueryBatchSpec, RangeQuery, evaluate, generate_query_batch, rqc, rqc_linear)
from .synthetic import SyntheticSpec, generate_synthetic
from .uncertainty import SamplerConfig

logger = structlog.get_logger()

TIMING_FIELDS = frozenset({'query_seconds', 'indexed_seconds', 'linear_seconds', 'speedup',
                           'compress_seconds', 'per_point_seconds'})


def timing_fields(row: BaseModel) -> List[str]:
    return [name for name in type(row).model_fields if name in TIMING_FIELDS]


class EvalRow(BaseModel):
    parameter: str
    value: float
    mode: str
    evaluated: int
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None


class RateRow(BaseModel):
    target_rate: float
    epsilon: float
    achieved_rate: float
    sigma: float
    mode: str
    evaluated: int
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None


class XiRow(BaseModel):
    xi: int
    leaf_count: int
    min_height: int
    max_height: int
    avg_height: float
    query_seconds: float


class SpeedupRow(BaseModel):
    queries: int
    trajectories: int
    agree: bool
    indexed_seconds: float
    linear_seconds: float
    speedup: float


class ScalingRow(BaseModel):
    points: int
    epsilon: float
    retained: int
    compress_seconds: float
    per_point_seconds: float


class ProfileRow(BaseModel):
    target_rate: float
    epsilon: float
    achieved_rate: float
    max_psed: float
    avg_psed: float
    max_ped: float
    avg_ped: float
    per_point_seconds: float


def _eval_row(parameter: str, value: float, report: EvalReport) -> EvalRow:
    return EvalRow(parameter=parameter, value=value, mode=report.mode, evaluated=report.evaluated,
                   precision=report.avg_precision, recall=report.avg_recall, f1=report.avg_f1)


def recall_by_rate(raw_set: Sequence[RawTrajectory], rates: Sequence[float], batch: QueryBatchSpec, *,
                   seed: int = 0, xi: int = 32, n_samples: int = 15, probability_threshold: float = 0.5,
                   threads: int = 1) -> List[RateRow]:
    """Both query criteria against the raw ground truth, one dataset per target rate."""
    queries = generate_query_batch(dataset_bounds(raw_set), batch, seed)
    rows = []
    for target in rates:
        eps, _ = epsilon_for_rate(raw_set, target)
        result = compress_dataset(raw_set, CompressionConfig(epsilon=eps), threads=threads)
        dataset = result.dataset
        tree = AspTree.build(dataset, IndexConfig(xi=xi, epsilon=eps))
        sampler = SamplerConfig(sigma=dataset.sigma, n_samples=n_samples, rng_seed=seed)
        for mode in ('traditional', 'probabilistic'):
            report = evaluate(queries, raw_set, dataset, tree, mode, probability_threshold, sampler, threads)
            rows.append(RateRow(target_rate=target, epsilon=eps, achieved_rate=result.stats.compression_rate,
                                sigma=dataset.sigma, mode=mode, evaluated=report.evaluated,
                                precision=report.avg_precision, recall=report.avg_recall, f1=report.avg_f1))
        logger.info('sweep.rate.step', target=target, epsilon=eps, rate=result.stats.compression_rate)
    return rows


def sweep_region_size(raw_set: Sequence[RawTrajectory], dataset: CompressedDataset, tree: AspTree,
                      areas: Sequence[float], count: int, *, seed: int = 0, n_samples: int = 15,
                      probability_threshold: float = 0.5, threads: int = 1) -> List[EvalRow]:
    bounds = dataset_bounds(raw_set)
    sampler = SamplerConfig(sigma=dataset.sigma, n_samples=n_samples, rng_seed=seed)
    rows = []
    for area in areas:
        queries = generate_query_batch(bounds, QueryBatchSpec(count=count, area_min=area, area_max=area), seed)
        for mode in ('traditional', 'probabilistic'):
            report = evaluate(queries, raw_set, dataset, tree, mode, probability_threshold, sampler, threads)
            rows.append(_eval_row('area', area, report))
    return rows


def sweep_samples(raw_set: Sequence[RawTrajectory], dataset: CompressedDataset, tree: AspTree,
                  sample_counts: Sequence[int], batch: QueryBatchSpec, *, seed: int = 0,
                  probability_threshold: float = 0.5, threads: int = 1) -> List[EvalRow]:
    queries = generate_query_batch(dataset_bounds(raw_set), batch, seed)
    rows = []
    for ns in sample_counts:
        sampler = SamplerConfig(sigma=dataset.sigma, n_samples=ns, rng_seed=seed)
        report = evaluate(queries, raw_set, dataset, tree, 'probabilistic', probability_threshold, sampler, threads)
        rows.append(_eval_row('n_samples', ns, report))
    return rows


def sweep_threshold(raw_set: Sequence[RawTrajectory], dataset: CompressedDataset, tree: AspTree,
                    thresholds: Sequence[float], batch: QueryBatchSpec, *, seed: int = 0, n_samples: int = 15,
                    threads: int = 1) -> List[EvalRow]:
    queries = generate_query_batch(dataset_bounds(raw_set), batch, seed)
    sampler = SamplerConfig(sigma=dataset.sigma, n_samples=n_samples, rng_seed=seed)
    rows = []
    for p in thresholds:
        report = evaluate(queries, raw_set, dataset, tree, 'probabilistic', p, sampler, threads)
        rows.append(_eval_row('probability_threshold', p, report))
    return rows


def sweep_xi(dataset: CompressedDataset, xis: Sequence[int], batch: QueryBatchSpec, *, seed: int = 0,
             n_samples: int = 15, probability_threshold: float = 0.5) -> List[XiRow]:
    queries = generate_query_batch(dataset.bounds(), batch, seed)
    sampler = SamplerConfig(sigma=dataset.sigma, n_samples=n_samples, rng_seed=seed)
    rows = []
    for xi in xis:
        tree = AspTree.build(dataset, IndexConfig(xi=xi, epsilon=dataset.epsilon))
        st = tree.stats()
        start = perf_counter()
        for i, region in enumerate(queries):
            rqc(RangeQuery(region=region, probability_threshold=probability_threshold, sampler=sampler),
                dataset, tree, query_index=i)
        rows.append(XiRow(xi=xi, leaf_count=st.leaf_count, min_height=st.min_height, max_height=st.max_height,
                          avg_height=st.avg_height, query_seconds=perf_counter() - start))
    return rows


def index_speedup(dataset: CompressedDataset, tree: AspTree, batch: QueryBatchSpec, *, seed: int = 0,
                  n_samples: int = 15, probability_threshold: float = 0.5) -> SpeedupRow:
    """Total time of indexed versus index-free queries over one batch, plus whether every result agreed."""
    queries = generate_query_batch(dataset.bounds(), batch, seed)
    sampler = SamplerConfig(sigma=dataset.sigma, n_samples=n_samples, rng_seed=seed)
    specs = [RangeQuery(region=r, probability_threshold=probability_threshold, sampler=sampler) for r in queries]

    start = perf_counter()
    indexed = [rqc(q, dataset, tree, query_index=i).result_ids for i, q in enumerate(specs)]
    indexed_seconds = perf_counter() - start
    start = perf_counter()
    linear = [rqc_linear(q, dataset, query_index=i).result_ids for i, q in enumerate(specs)]
    linear_seconds = perf_counter() - start

    row = SpeedupRow(queries=len(specs), trajectories=len(dataset), agree=indexed == linear,
                     indexed_seconds=indexed_seconds, linear_seconds=linear_seconds,
                     speedup=linear_seconds / indexed_seconds if indexed_seconds > 0 else 0.0)
    logger.info('sweep.speedup.done', queries=row.queries, agree=row.agree, speedup=row.speedup)
    return row


def size_scaling(lengths: Sequence[int], epsilon: float, *, seed: int = 0) -> List[ScalingRow]:
    """Compression time for single trajectories of growing length at a fixed epsilon."""
    cfg = CompressionConfig(epsilon=epsilon)
    rows = []
    for n in lengths:
        spec = SyntheticSpec(count=1, points_min=n, points_max=n)
        raw = generate_synthetic(spec, seed)[0]
        start = perf_counter()
        compressed = roce_compress(raw, cfg)
        elapsed = perf_counter() - start
        rows.append(ScalingRow(points=n, epsilon=epsilon, retained=len(compressed),
                               compress_seconds=elapsed, per_point_seconds=elapsed / n))
    return rows


def compression_profile(raw_set: Sequence[RawTrajectory], rates: Sequence[float]) -> List[ProfileRow]:
    """Deviation under both metrics for each target compression rate."""
    total_points = sum(len(r) for r in raw_set)
    rows = []
    for target in rates:
        eps, _ = epsilon_for_rate(raw_set, target)
        cfg = CompressionConfig(epsilon=eps)
        start = perf_counter()
        compressed = [roce_compress(r, cfg) for r in raw_set]
        elapsed = perf_counter() - start
        psed_acc = DeviationAccumulator()
        ped_acc = DeviationAccumulator()
        for raw, c in zip(raw_set, compressed):
            psed_acc = psed_acc.merge(deviations(raw, c))
            ped_acc = ped_acc.merge(deviations(raw, c, metric='ped'))
        stats = stats_from(psed_acc, total_points, sum(len(c) for c in compressed))
        rows.append(ProfileRow(target_rate=target, epsilon=eps, achieved_rate=stats.compression_rate,
                               max_psed=stats.max_psed, avg_psed=stats.avg_psed, max_ped=ped_acc.maximum,
                               avg_ped=ped_acc.mean,
                               per_point_seconds=elapsed / total_points if total_points else 0.0))
    return rows
