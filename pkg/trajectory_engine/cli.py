"""Command-line entry point: generate, compress, index, query, eval and sweep.

stdout carries only the command's report (table, CSV or JSON, each led by
the echoed config); logs go to stderr. Exit codes: 0 success, 1 domain or
validation error, 2 I/O or usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from time import perf_counter
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import Settings, get_settings

from . import experiments
from .compressor import CompressionConfig, compress_dataset, verify_error_bound
from .errors import DataFormatError, EngineError
from .geometry import Rect, project_equirectangular
from .index import AspTree, IndexConfig
from .io_model import (CompressedDataset, RawTrajectory, dataset_bounds, read_compressed, read_raw_csv,
                       write_compressed, write_raw_csv)
from .query import QueryBatchSpec, RangeQuery, evaluate, generate_query_batch, rqc
from .synthetic import SyntheticSpec, generate_synthetic
from .uncertainty import SamplerConfig

logger = structlog.get_logger()

Format = Literal['table', 'csv', 'json']
SweepKind = Literal['rate', 'region', 'ns', 'prob', 'xi', 'speedup', 'scaling', 'profile']

SWEEP_DEFAULTS: Dict[str, List[float]] = {
    'rate': [10.0, 50.0, 200.0],
    'region': [1.0e4, 5.0e4, 1.0e5],
    'ns': [1, 5, 15, 30],
    'prob': [0.1, 0.3, 0.5, 0.7, 0.9],
    'xi': [2, 8, 32, 128],
    'speedup': [],
    'scaling': [1000, 2000, 4000, 8000],
    'profile': [10.0, 50.0, 200.0],
}


def configure_logging(settings: Settings) -> None:
    logging.basicConfig(stream=sys.stderr, format='%(message)s',
                        level=getattr(logging, settings.log_level.upper(), logging.INFO), force=True)
    renderer = structlog.processors.JSONRenderer() if settings.log_json else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt='iso'),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


# -- run configs -----------------------------------------------------------------

class RunConfig(BaseModel):
    """Effective parameters of one command; ``echo()`` is printed ahead of every report."""
    model_config = ConfigDict(extra='forbid')

    command: str
    threads: int = Field(default=1, ge=1)
    format: Format = 'table'
    report: Optional[str] = None

    def echo(self) -> Dict[str, Any]:
        # execution and output-placement knobs do not change results
        return self.model_dump(exclude={'threads', 'format', 'report'})


class GenerateRun(RunConfig):
    out: str
    seed: int = Field(ge=0)
    count: int = Field(ge=1)
    points_min: int = Field(ge=1)
    points_max: int = Field(ge=1)
    extent: float = Field(gt=0)
    step_mean: float = Field(gt=0)
    interval: float = Field(gt=0)


class CompressRun(RunConfig):
    input: str
    out: str
    epsilon: float = Field(gt=0)
    verify: bool = False
    project_lonlat: bool = False


class IndexRun(RunConfig):
    input: str
    out: str
    xi: int = Field(ge=1)


class QueryRun(RunConfig):
    index: str
    dataset: str
    region: Tuple[float, float, float, float]
    prob_threshold: float = Field(ge=0, lt=1)
    ns: int = Field(ge=1)
    seed: int = Field(ge=0)


class EvalRun(RunConfig):
    raw: str
    dataset: str
    index: Optional[str] = None
    mode: Literal['traditional', 'probabilistic']
    queries: int = Field(ge=0)
    area_min: float = Field(gt=0)
    area_max: float = Field(gt=0)
    aspect: float = Field(gt=0)
    prob_threshold: float = Field(ge=0, lt=1)
    ns: int = Field(ge=1)
    seed: int = Field(ge=0)


class SweepRun(RunConfig):
    kind: SweepKind
    raw: Optional[str] = None
    dataset: Optional[str] = None
    index: Optional[str] = None
    values: List[float]
    queries: int = Field(ge=0)
    area_min: float = Field(gt=0)
    area_max: float = Field(gt=0)
    epsilon: float = Field(gt=0)
    xi: int = Field(ge=1)
    prob_threshold: float = Field(ge=0, lt=1)
    ns: int = Field(ge=1)
    seed: int = Field(ge=0)
    timings: bool = False

    @model_validator(mode='after')
    def _default_values(self) -> 'SweepRun':
        if not self.values:
            self.values = list(SWEEP_DEFAULTS[self.kind])
        return self


# -- output ------------------------------------------------------------------------

class Report(BaseModel):
    summary: Dict[str, Any] = {}
    rows: List[Dict[str, Any]] = []
    # wall-clock seconds; shown in table output only
    timings: Dict[str, float] = {}


def _cell(v: Any) -> str:
    if v is None:
        return ''
    if isinstance(v, bool):
        return 'true' if v else 'false'
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(run: RunConfig, report: Report) -> str:
    config = run.echo()
    if run.format == 'json':
        body = {'command': run.command, 'config': config, 'summary': report.summary, 'rows': report.rows}
        return json.dumps(body, indent=2) + '\n'

    buf = io.StringIO()
    if run.format == 'csv':
        for key, value in config.items():
            buf.write(f'# {key}={_cell(value)}\n')
        for key, value in report.summary.items():
            buf.write(f'# {key}={_cell(value)}\n')
        if report.rows:
            writer = csv.DictWriter(buf, fieldnames=list(report.rows[0]), lineterminator='\n')
            writer.writeheader()
            for row in report.rows:
                writer.writerow({k: _cell(v) for k, v in row.items()})
        return buf.getvalue()

    buf.write(f'== {run.command} ==\n')
    for key, value in config.items():
        buf.write(f'  {key:<16} {_cell(value)}\n')
    if report.summary:
        buf.write('\n')
        for key, value in report.summary.items():
            shown = f'{value:.6g}' if isinstance(value, float) else _cell(value)
            buf.write(f'  {key:<22} {shown}\n')
    if report.timings:
        buf.write('\n')
        for key, value in report.timings.items():
            buf.write(f'  {key:<22} {value:.4f}s\n')
    if report.rows:
        headers = list(report.rows[0])
        cells = [[f'{v:.6g}' if isinstance(v, float) else _cell(v) for v in row.values()] for row in report.rows]
        widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(headers)]
        buf.write('\n')
        buf.write('  '.join(h.ljust(w) for h, w in zip(headers, widths)).rstrip() + '\n')
        for c in cells:
            buf.write('  '.join(v.ljust(w) for v, w in zip(c, widths)).rstrip() + '\n')
    return buf.getvalue()


def emit(run: RunConfig, report: Report) -> None:
    text = render(run, report)
    if run.report:
        Path(run.report).write_text(text, encoding='utf-8')
        logger.info('cli.report.written', path=run.report)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


# -- inputs --------------------------------------------------------------------------

def _existing(path: Optional[str], what: str) -> str:
    if path is None:
        raise DataFormatError(f'{what} is required for this command')
    if not Path(path).is_file():
        raise DataFormatError(f'{what} not found', path=path)
    return path


def _load_raw(path: str) -> List[RawTrajectory]:
    return read_raw_csv(_existing(path, 'raw CSV'))


def _load_dataset(path: str) -> CompressedDataset:
    return read_compressed(_existing(path, 'compressed dataset'))


def _load_index(path: str) -> AspTree:
    return AspTree.load(_existing(path, 'index'))


def _project(raw_set: List[RawTrajectory]) -> List[RawTrajectory]:
    if not raw_set:
        return raw_set
    ref_lat = float(np.concatenate([r.xy[:, 1] for r in raw_set]).mean())
    out = []
    for r in raw_set:
        x, y = project_equirectangular(r.xy[:, 0], r.xy[:, 1], ref_lat)
        out.append(RawTrajectory(id=r.id, xy=np.column_stack([x, y]), t=r.t))
    return out


# -- commands ----------------------------------------------------------------------

def cmd_generate(run: GenerateRun) -> Report:
    spec = SyntheticSpec(count=run.count, points_min=run.points_min, points_max=run.points_max,
                         extent=run.extent, step_mean=run.step_mean, step_std=run.step_mean / 5.0,
                         interval=run.interval)
    raw_set = generate_synthetic(spec, run.seed)
    write_raw_csv(run.out, raw_set)
    return Report(summary={'trajectories': len(raw_set), 'points': sum(len(r) for r in raw_set)})


def cmd_compress(run: CompressRun) -> Report:
    raw_set = _load_raw(run.input)
    if run.project_lonlat:
        raw_set = _project(raw_set)
    start = perf_counter()
    batch = compress_dataset(raw_set, CompressionConfig(epsilon=run.epsilon), threads=run.threads)
    elapsed = perf_counter() - start
    write_compressed(run.out, batch.dataset)

    summary: Dict[str, Any] = {
        'trajectories': len(batch.dataset),
        'raw_points': batch.stats.raw_point_count,
        'retained_points': batch.stats.retained_point_count,
        'compression_rate': batch.stats.compression_rate,
        'max_psed': batch.stats.max_psed,
        'avg_psed': batch.stats.avg_psed,
        'sigma': batch.stats.psed_std_dev,
        'failures': len(batch.failures),
    }
    if run.verify:
        by_id = {r.id: r for r in raw_set}
        worst = 0.0
        for c in batch.dataset.trajectories:
            check = verify_error_bound(by_id[c.id], c, run.epsilon)
            if not check.ok:
                raise EngineError(
                    f'trajectory {c.id!r}: point {check.violation_index} is {check.violation_psed} from its segment, '
                    f'bound is {run.epsilon}')
            worst = max(worst, check.max_psed)
        summary['verified'] = True
        summary['verified_max_psed'] = worst
    timings = {'wall': elapsed}
    if batch.stats.raw_point_count:
        timings['per_point'] = elapsed / batch.stats.raw_point_count
    return Report(summary=summary, rows=[f.model_dump() for f in batch.failures], timings=timings)


def cmd_build_index(run: IndexRun) -> Report:
    dataset = _load_dataset(run.input)
    start = perf_counter()
    tree = AspTree.build(dataset, IndexConfig(xi=run.xi, epsilon=dataset.epsilon))
    elapsed = perf_counter() - start
    tree.save(run.out)
    return Report(summary=tree.stats().model_dump(), timings={'build': elapsed})


def cmd_query(run: QueryRun) -> Report:
    tree = _load_index(run.index)
    dataset = _load_dataset(run.dataset)
    query = RangeQuery(region=Rect(*run.region), probability_threshold=run.prob_threshold,
                       sampler=SamplerConfig(sigma=dataset.sigma, n_samples=run.ns, rng_seed=run.seed))
    outcome = rqc(query, dataset, tree)
    stage = {}
    for name, ids in (('mbr', outcome.accepted_by_mbr), ('endpoint', outcome.accepted_by_endpoint),
                      ('probability', outcome.accepted_by_probability)):
        for tid in ids:
            stage[tid] = name
    rows = [{'id': tid, 'stage': stage[tid], 'probability': outcome.probabilities.get(tid)}
            for tid in sorted(stage)]
    d = outcome.diagnostics
    summary = {
        'results': len(stage),
        'accepted_by_mbr': len(outcome.accepted_by_mbr),
        'accepted_by_endpoint': len(outcome.accepted_by_endpoint),
        'accepted_by_probability': len(outcome.accepted_by_probability),
        'candidates': d.candidates,
        'runs': d.runs,
        'after_mbr': d.after_mbr,
        'after_endpoints': d.after_endpoints,
        'segments_sampled': d.segments_sampled,
    }
    return Report(summary=summary, rows=rows, timings=d.timings)


def cmd_evaluate(run: EvalRun) -> Report:
    raw_set = _load_raw(run.raw)
    dataset = _load_dataset(run.dataset)
    tree = _load_index(run.index) if run.mode == 'probabilistic' else None
    spec = QueryBatchSpec(count=run.queries, area_min=run.area_min, area_max=run.area_max, aspect_ratio=run.aspect)
    queries = generate_query_batch(dataset_bounds(raw_set), spec, run.seed)
    sampler = SamplerConfig(sigma=dataset.sigma, n_samples=run.ns, rng_seed=run.seed)
    start = perf_counter()
    report = evaluate(queries, raw_set, dataset, tree, run.mode, run.prob_threshold, sampler, run.threads)
    elapsed = perf_counter() - start
    rows = []
    for m in report.rows:
        min_x, min_y, max_x, max_y = m.region
        rows.append({'query': m.query_index, 'min_x': min_x, 'min_y': min_y, 'max_x': max_x, 'max_y': max_y,
                     'raw_count': m.raw_count, 'returned_count': m.returned_count,
                     'precision': m.precision, 'recall': m.recall, 'f1': m.f1})
    summary = {'queries': len(report.rows), 'evaluated': report.evaluated, 'skipped': report.skipped,
               'avg_precision': report.avg_precision, 'avg_recall': report.avg_recall, 'avg_f1': report.avg_f1}
    return Report(summary=summary, rows=rows, timings={'evaluate': elapsed})


def cmd_sweep(run: SweepRun) -> Report:
    values = run.values
    batch = QueryBatchSpec(count=run.queries, area_min=run.area_min, area_max=run.area_max)
    common = {'seed': run.seed}
    if run.kind == 'rate':
        rows = experiments.recall_by_rate(_load_raw(run.raw), values, batch, xi=run.xi, n_samples=run.ns,
                                          probability_threshold=run.prob_threshold, threads=run.threads, **common)
    elif run.kind == 'profile':
        rows = experiments.compression_profile(_load_raw(run.raw), values)
    elif run.kind == 'scaling':
        rows = experiments.size_scaling([int(v) for v in values], run.epsilon, **common)
    elif run.kind == 'xi':
        rows = experiments.sweep_xi(_load_dataset(run.dataset), [int(v) for v in values], batch, n_samples=run.ns,
                                    probability_threshold=run.prob_threshold, **common)
    elif run.kind == 'speedup':
        dataset = _load_dataset(run.dataset)
        rows = [experiments.index_speedup(dataset, _load_index(run.index), batch, n_samples=run.ns,
                                          probability_threshold=run.prob_threshold, **common)]
    else:
        raw_set = _load_raw(run.raw)
        dataset = _load_dataset(run.dataset)
        tree = _load_index(run.index)
        if run.kind == 'region':
            rows = experiments.sweep_region_size(raw_set, dataset, tree, values, run.queries, n_samples=run.ns,
                                                 probability_threshold=run.prob_threshold, threads=run.threads,
                                                 **common)
        elif run.kind == 'ns':
            rows = experiments.sweep_samples(raw_set, dataset, tree, [int(v) for v in values], batch,
                                             probability_threshold=run.prob_threshold, threads=run.threads,
                                             **common)
        else:
            rows = experiments.sweep_threshold(raw_set, dataset, tree, values, batch, n_samples=run.ns,
                                               threads=run.threads, **common)

    timed = run.timings or run.format == 'table'
    out = []
    for row in rows:
        drop = set() if timed else set(experiments.timing_fields(row))
        out.append(row.model_dump(exclude=drop))
    return Report(summary={'rows': len(out)}, rows=out)


# -- parser ---------------------------------------------------------------------------

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma separated numbers, got {text!r}')


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='trajectory-engine',
                                     description='Error-bounded trajectory compression and range queries')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--format', choices=['table', 'csv', 'json'], default=settings.default_format)
    common.add_argument('--report', metavar='PATH', help='write the report to PATH instead of stdout')
    common.add_argument('--threads', type=int, default=settings.default_threads)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', parents=[common], help='write a synthetic raw CSV')
    p.add_argument('--out', required=True)
    p.add_argument('--seed', type=int, default=settings.default_seed)
    p.add_argument('--count', type=int, default=100)
    p.add_argument('--points-min', type=int, default=200)
    p.add_argument('--points-max', type=int, default=400)
    p.add_argument('--extent', type=float, default=5000.0)
    p.add_argument('--step-mean', type=float, default=10.0)
    p.add_argument('--interval', type=float, default=1.0)

    p = sub.add_parser('compress', parents=[common], help='compress a raw CSV')
    p.add_argument('--input', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--epsilon', type=float, default=settings.default_epsilon)
    p.add_argument('--verify', action='store_true', help='re-check the error bound of every output')
    p.add_argument('--project-lonlat', action='store_true', help='treat x,y as lon,lat degrees')

    p = sub.add_parser('index', parents=[common], help='build an index over a compressed dataset')
    p.add_argument('--input', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--xi', type=int, default=settings.default_xi)

    p = sub.add_parser('query', parents=[common], help='run one range query')
    p.add_argument('--index', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--region', type=float, nargs=4, required=True, metavar=('MIN_X', 'MIN_Y', 'MAX_X', 'MAX_Y'))
    p.add_argument('--prob-threshold', type=float, default=settings.default_prob_threshold)
    p.add_argument('--ns', type=int, default=settings.default_ns)
    p.add_argument('--seed', type=int, default=settings.default_seed)

    def batch_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument('--queries', type=int, default=100)
        p.add_argument('--area-min', type=float, default=1.0e4)
        p.add_argument('--area-max', type=float, default=1.0e5)
        p.add_argument('--prob-threshold', type=float, default=settings.default_prob_threshold)
        p.add_argument('--ns', type=int, default=settings.default_ns)
        p.add_argument('--seed', type=int, default=settings.default_seed)

    p = sub.add_parser('eval', parents=[common], help='precision/recall over a random query batch')
    p.add_argument('--raw', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--index')
    p.add_argument('--mode', choices=['traditional', 'probabilistic'], default='probabilistic')
    p.add_argument('--aspect', type=float, default=1.0)
    batch_flags(p)

    p = sub.add_parser('sweep', parents=[common], help='parameter sweeps as plot-ready rows')
    p.add_argument('--kind', choices=list(SWEEP_DEFAULTS), required=True)
    p.add_argument('--raw')
    p.add_argument('--dataset')
    p.add_argument('--index')
    p.add_argument('--values', type=_float_list, default=[])
    p.add_argument('--epsilon', type=float, default=settings.default_epsilon)
    p.add_argument('--xi', type=int, default=settings.default_xi)
    p.add_argument('--timings', action='store_true', help='keep wall-clock columns in csv/json output')
    batch_flags(p)
    return parser


COMMANDS: Dict[str, Tuple[type, Callable[[Any], Report]]] = {
    'generate': (GenerateRun, cmd_generate),
    'compress': (CompressRun, cmd_compress),
    'index': (IndexRun, cmd_build_index),
    'query': (QueryRun, cmd_query),
    'eval': (EvalRun, cmd_evaluate),
    'sweep': (SweepRun, cmd_sweep),
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse usage errors exit with 2, --help with 0
        return e.code if isinstance(e.code, int) else 2
    configure_logging(settings)

    model, handler = COMMANDS[args.command]
    params = {k: v for k, v in vars(args).items() if k in model.model_fields}
    start = perf_counter()
    try:
        run = model(**params)
        report = handler(run)
        emit(run, report)
    except EngineError as e:
        logger.error('cli.command.fail', command=args.command, error=e.detail, exit_code=e.exit_code)
        print(f'error: {e.detail}', file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        err = e.errors()[0]
        where = '.'.join(str(p) for p in err['loc'])
        logger.error('cli.command.invalid', command=args.command, field=where, error=err['msg'])
        print(f'error: invalid {where}: {err["msg"]}', file=sys.stderr)
        return 1
    except OSError as e:
        logger.error('cli.command.io_fail', command=args.command, error=str(e))
        print(f'error: {e}', file=sys.stderr)
        return 2
    logger.info('cli.command.done', command=args.command, duration=perf_counter() - start)
    return 0
