"""Trajectory data model and file formats.

Raw trajectories are read from ``id,x,y,t`` CSV; compressed datasets are
JSON lines with a header line. Both formats are described in
``docs/formats.md``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from functools import cached_property
from pathlib import Path
from typing import Annotated, Any, BinaryIO, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from .errors import DataFormatError, EmptyTrajectoryError, MalformedInputError
from .geometry import Point2, Rect, Segment2

logger = structlog.get_logger()

FORMAT_NAME = 'roce-compressed'
FORMAT_VERSION = 1

TrajectoryId = str
PathLike = Union[str, Path]


class TrajectoryPoint(NamedTuple):
    x: float
    y: float
    t: float


def _as_xy(v: Any) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    return arr.reshape(-1, 2)


def _as_vector(v: Any) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


def _as_counts(v: Any) -> np.ndarray:
    return np.asarray(v, dtype=np.int64).reshape(-1)


XYArray = Annotated[np.ndarray, BeforeValidator(_as_xy)]
TimeArray = Annotated[np.ndarray, BeforeValidator(_as_vector)]
CountArray = Annotated[np.ndarray, BeforeValidator(_as_counts)]


def _check_points(tid: str, xy: np.ndarray, t: np.ndarray) -> None:
    if len(xy) == 0:
        raise EmptyTrajectoryError(f'trajectory {tid!r} has no points')
    if len(t) != len(xy):
        raise MalformedInputError(f'trajectory {tid!r}: {len(xy)} positions but {len(t)} timestamps')
    if not (np.isfinite(xy).all() and np.isfinite(t).all()):
        raise MalformedInputError(f'trajectory {tid!r} has non-finite values')
    steps = np.diff(t)
    if len(steps) and not (steps > 0).all():
        bad = int(np.argmin(steps > 0)) + 1
        raise MalformedInputError(
            f'trajectory {tid!r}: timestamp at index {bad} does not increase ({t[bad - 1]} -> {t[bad]})')


class RawTrajectory(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    id: TrajectoryId
    xy: XYArray
    t: TimeArray

    @model_validator(mode='after')
    def _validate(self) -> 'RawTrajectory':
        _check_points(self.id, self.xy, self.t)
        return self

    @classmethod
    def from_points(cls, tid: TrajectoryId, points: Iterable[Sequence[float]]) -> 'RawTrajectory':
        rows = [tuple(p) for p in points]
        if rows and len(rows[0]) == 2:
            rows = [(x, y, float(i)) for i, (x, y) in enumerate(rows)]
        xy = [(r[0], r[1]) for r in rows]
        t = [r[2] for r in rows]
        return cls(id=tid, xy=xy, t=t)

    def __len__(self) -> int:
        return len(self.xy)

    @cached_property
    def points(self) -> List[Point2]:
        return [Point2(x, y) for x, y in self.xy.tolist()]

    def point(self, i: int) -> TrajectoryPoint:
        return TrajectoryPoint(float(self.xy[i, 0]), float(self.xy[i, 1]), float(self.t[i]))

    def bounds(self) -> Rect:
        return Rect.bounding(self.xy[:, 0], self.xy[:, 1])


class CompressedTrajectory(BaseModel):
    """Retained points plus, per segment, the number of raw points discarded inside it."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    id: TrajectoryId
    xy: XYArray
    t: TimeArray
    discarded: CountArray
    epsilon: float = Field(gt=0)

    @model_validator(mode='after')
    def _validate(self) -> 'CompressedTrajectory':
        _check_points(self.id, self.xy, self.t)
        if len(self.discarded) != len(self.xy) - 1:
            raise MalformedInputError(
                f'trajectory {self.id!r}: {len(self.xy)} retained points need '
                f'{len(self.xy) - 1} discarded counts, got {len(self.discarded)}')
        if len(self.discarded) and int(self.discarded.min()) < 0:
            raise MalformedInputError(f'trajectory {self.id!r} has negative discarded counts')
        return self

    def __len__(self) -> int:
        return len(self.xy)

    @property
    def segment_count(self) -> int:
        return len(self.xy) - 1

    @property
    def raw_point_count(self) -> int:
        return len(self.xy) + int(self.discarded.sum())

    @cached_property
    def raw_indices(self) -> np.ndarray:
        """Position of every retained point in the raw trajectory."""
        idx = np.zeros(len(self.xy), dtype=np.int64)
        if len(self.discarded):
            idx[1:] = np.cumsum(self.discarded + 1)
        return idx

    @property
    def retained(self) -> List[TrajectoryPoint]:
        return [TrajectoryPoint(x, y, t) for (x, y), t in zip(self.xy.tolist(), self.t.tolist())]

    def segment(self, k: int) -> Segment2:
        (x0, y0), (x1, y1) = self.xy[k].tolist(), self.xy[k + 1].tolist()
        return Segment2(Point2(x0, y0), Point2(x1, y1))

    @cached_property
    def query_segments(self) -> np.ndarray:
        """(k, 5) array of x0, y0, x1, y1, n_d.

        A trajectory with a single retained point yields one zero-length
        segment so the point stays visible to the index and to queries.
        """
        xy = self.xy
        if len(xy) == 1:
            return np.array([[xy[0, 0], xy[0, 1], xy[0, 0], xy[0, 1], 0.0]])
        out = np.empty((len(xy) - 1, 5))
        out[:, 0:2] = xy[:-1]
        out[:, 2:4] = xy[1:]
        out[:, 4] = self.discarded
        return out

    def bounds(self) -> Rect:
        return Rect.bounding(self.xy[:, 0], self.xy[:, 1])


class DatasetHeader(BaseModel):
    format: str = FORMAT_NAME
    version: int = FORMAT_VERSION
    epsilon: float = Field(gt=0)
    sigma: float = Field(ge=0)
    trajectory_count: int = Field(ge=0)
    point_count: int = Field(ge=0)
    raw_point_count: int = Field(ge=0)
    checksum: str = ''


class CompressedDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    header: DatasetHeader
    trajectories: List[CompressedTrajectory]

    @classmethod
    def build(cls, trajectories: Sequence[CompressedTrajectory], epsilon: float, sigma: float) -> 'CompressedDataset':
        trajectories = list(trajectories)
        header = DatasetHeader(
            epsilon=epsilon,
            sigma=sigma,
            trajectory_count=len(trajectories),
            point_count=sum(len(c) for c in trajectories),
            raw_point_count=sum(c.raw_point_count for c in trajectories),
        )
        return cls(header=header, trajectories=trajectories)

    @property
    def epsilon(self) -> float:
        return self.header.epsilon

    @property
    def sigma(self) -> float:
        return self.header.sigma

    def __len__(self) -> int:
        return len(self.trajectories)

    @cached_property
    def by_id(self) -> Dict[TrajectoryId, CompressedTrajectory]:
        return {c.id: c for c in self.trajectories}

    @cached_property
    def checksum(self) -> str:
        """SHA-256 of the record lines; equals the header checksum of the written file."""
        return self.header.checksum or records_checksum(self.trajectories)

    def bounds(self) -> Optional[Rect]:
        if not self.trajectories:
            return None
        box = self.trajectories[0].bounds()
        for c in self.trajectories[1:]:
            box = box.union(c.bounds())
        return box


def dataset_bounds(trajectories: Sequence[Union[RawTrajectory, CompressedTrajectory]]) -> Optional[Rect]:
    if not trajectories:
        return None
    box = trajectories[0].bounds()
    for tr in trajectories[1:]:
        box = box.union(tr.bounds())
    return box


def check_unique_ids(trajectories: Sequence[Union[RawTrajectory, CompressedTrajectory]]) -> None:
    seen = set()
    for tr in trajectories:
        if tr.id in seen:
            raise MalformedInputError(f'duplicate trajectory id {tr.id!r}')
        seen.add(tr.id)


# -- raw CSV -----------------------------------------------------------------

def _text_lines(f: BinaryIO, path: str) -> Iterator[str]:
    """Decodes line by line so a bad byte is reported on its own line."""
    for lineno, raw in enumerate(f, start=1):
        try:
            yield raw.decode('utf-8')
        except UnicodeDecodeError as e:
            raise DataFormatError(f'invalid UTF-8 at byte {e.start}', path=path, line=lineno) from None


def _is_header_row(row: List[str]) -> bool:
    try:
        float(row[1])
    except (ValueError, IndexError):
        return True
    return False


def read_raw_csv(path: PathLike) -> List[RawTrajectory]:
    """Rows ``id,x,y,t`` grouped by id in order of first appearance.

    Rows are never re-sorted: timestamps that fail to increase within a
    trajectory raise ``MalformedInputError`` naming the id and index.
    """
    path = Path(path)
    groups: Dict[str, List[Tuple[float, float, float]]] = {}
    with path.open('rb') as f:
        for lineno, row in enumerate(csv.reader(_text_lines(f, str(path))), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and _is_header_row(row):
                continue
            if len(row) != 4:
                raise DataFormatError(f'expected 4 columns id,x,y,t, got {len(row)}', path=str(path), line=lineno)
            tid = row[0].strip()
            try:
                x, y, t = (float(v) for v in row[1:])
            except ValueError:
                raise DataFormatError(f'non-numeric value in {row[1:]}', path=str(path), line=lineno)
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(t)):
                raise MalformedInputError(f'{path}:{lineno}: non-finite value in trajectory {tid!r}')
            groups.setdefault(tid, []).append((x, y, t))

    out = [RawTrajectory.from_points(tid, pts) for tid, pts in groups.items()]
    logger.info('io.raw.read', path=str(path), trajectories=len(out), points=sum(len(r) for r in out))
    return out


def write_raw_csv(path: PathLike, trajectories: Sequence[RawTrajectory]) -> None:
    path = Path(path)
    with path.open('w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['id', 'x', 'y', 't'])
        for tr in trajectories:
            for (x, y), t in zip(tr.xy.tolist(), tr.t.tolist()):
                writer.writerow([tr.id, repr(x), repr(y), repr(t)])
    logger.info('io.raw.written', path=str(path), trajectories=len(trajectories))


# -- compressed JSON lines -----------------------------------------------------

class TrajectoryRecord(BaseModel):
    id: TrajectoryId
    points: List[Tuple[float, float, float]]
    discarded: List[int]


def _record_line(c: CompressedTrajectory) -> str:
    points = [[x, y, t] for (x, y), t in zip(c.xy.tolist(), c.t.tolist())]
    body = {'id': c.id, 'points': points, 'discarded': [int(v) for v in c.discarded.tolist()]}
    return json.dumps(body, separators=(',', ':'))


def _digest_lines(lines: Iterable[str]) -> str:
    digest = hashlib.sha256()
    for line in lines:
        digest.update(line.encode('utf-8') + b'\n')
    return digest.hexdigest()


def records_checksum(trajectories: Sequence[CompressedTrajectory]) -> str:
    return _digest_lines(_record_line(c) for c in trajectories)


def write_compressed(path: PathLike, dataset: CompressedDataset) -> None:
    path = Path(path)
    lines = [_record_line(c) for c in dataset.trajectories]
    header = dataset.header.model_copy(update={'checksum': _digest_lines(lines)})
    with path.open('w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(header.model_dump(), separators=(',', ':')) + '\n')
        for line in lines:
            f.write(line + '\n')
    logger.info('io.compressed.written', path=str(path), trajectories=len(lines))


class CompressedReader:
    """Parses a compressed dataset one line at a time."""

    def __init__(self, path: PathLike):
        self.path = str(path)
        self.header: Optional[DatasetHeader] = None
        self.records: List[CompressedTrajectory] = []
        self._digest = hashlib.sha256()
        self._seen: set = set()

    def _parse(self, line: str, lineno: int) -> Dict[str, Any]:
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataFormatError(f'invalid JSON ({e.msg})', path=self.path, line=lineno)
        if not isinstance(payload, dict):
            raise DataFormatError('expected a JSON object', path=self.path, line=lineno)
        return payload

    def process_line(self, line: str, lineno: int) -> None:
        if not line.endswith('\n'):
            raise DataFormatError('truncated line (missing newline)', path=self.path, line=lineno)
        text = line[:-1]
        payload = self._parse(text, lineno)
        if self.header is None:
            try:
                header = DatasetHeader.model_validate(payload)
            except ValidationError as e:
                raise DataFormatError(f'invalid header: {e.errors()[0]["msg"]}', path=self.path, line=lineno)
            if header.format != FORMAT_NAME:
                raise DataFormatError(f'unknown format {header.format!r}', path=self.path, line=lineno)
            if header.version != FORMAT_VERSION:
                raise DataFormatError(
                    f'format version {header.version} is not supported (expected {FORMAT_VERSION})',
                    path=self.path, line=lineno)
            self.header = header
            return
        self._digest.update(line.encode('utf-8'))
        try:
            record = TrajectoryRecord.model_validate(payload)
        except ValidationError as e:
            raise DataFormatError(f'invalid trajectory record: {e.errors()[0]["msg"]}', path=self.path, line=lineno)
        if record.id in self._seen:
            raise DataFormatError(f'duplicate trajectory id {record.id!r}', path=self.path, line=lineno)
        pts = record.points
        try:
            trajectory = CompressedTrajectory(
                id=record.id,
                xy=[(p[0], p[1]) for p in pts],
                t=[p[2] for p in pts],
                discarded=record.discarded,
                epsilon=self.header.epsilon,
            )
        except (MalformedInputError, EmptyTrajectoryError) as e:
            raise DataFormatError(f'invalid trajectory record: {e.detail}', path=self.path, line=lineno) from None
        except ValidationError as e:
            raise DataFormatError(f'invalid trajectory record: {e.errors()[0]["msg"]}', path=self.path, line=lineno)
        self._seen.add(record.id)
        self.records.append(trajectory)

    def finish(self) -> CompressedDataset:
        if self.header is None:
            raise DataFormatError('missing header line', path=self.path)
        if len(self.records) != self.header.trajectory_count:
            raise DataFormatError(
                f'expected {self.header.trajectory_count} trajectories, found {len(self.records)} (truncated file?)',
                path=self.path)
        if self.header.checksum and self._digest.hexdigest() != self.header.checksum:
            raise DataFormatError('checksum mismatch', path=self.path)
        return CompressedDataset(header=self.header, trajectories=self.records)


def read_compressed(path: PathLike) -> CompressedDataset:
    reader = CompressedReader(path)
    with Path(path).open('rb') as f:
        for lineno, line in enumerate(_text_lines(f, str(path)), start=1):
            reader.process_line(line, lineno)
    dataset = reader.finish()
    logger.info('io.compressed.read', path=str(path), trajectories=len(dataset))
    return dataset
