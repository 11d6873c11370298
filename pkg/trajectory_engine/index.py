"""ASP_tree: an adaptive quadtree over compressed-segment endpoints.

A node with more than ``xi`` retained points in its region is split into
four by coordinate medians, either vertical-then-horizontal (way A) or
horizontal-then-vertical (way B), whichever duplicates fewer segments
across the children. Leaves hold runs of consecutive segments whose
epsilon bounding regions overlap the leaf region.

Split convention: points on a split line belong to the lower/left child.
The left child is closed at the line and the right child open, so the
children tile the parent exactly.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter
from typing import Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, Field, ValidationError, model_validator

from .errors import ConfigurationError, DataFormatError
from .geometry import Rect, segment_rect_distance
from .io_model import CompressedDataset, CompressedTrajectory, records_checksum

logger = structlog.get_logger()

DUMP_FORMAT = 'asp-tree'
DUMP_VERSION = 2
MAX_DEPTH = 64


class SegmentRun(NamedTuple):
    """Segments ``start..end`` (inclusive) of one compressed trajectory."""
    trajectory_id: str
    start: int
    end: int


class IndexConfig(BaseModel):
    xi: int = Field(default=32, ge=1)
    epsilon: float = Field(gt=0)
    max_depth: int = Field(default=MAX_DEPTH, ge=1)


@dataclass(frozen=True, slots=True)
class AspNode:
    region: Rect
    depth: int
    vertex_count: int
    children: Optional[Tuple['AspNode', ...]] = None
    runs: Tuple[SegmentRun, ...] = ()
    # way A: (x, y_left, y_right); way B: (y, x_lower, x_upper)
    way: Optional[str] = None
    lines: Optional[Tuple[float, float, float]] = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


class SplitResult(NamedTuple):
    way: str
    lines: Tuple[float, float, float]
    regions: Tuple[Rect, Rect, Rect, Rect]
    vertex_masks: Tuple[np.ndarray, ...]
    segment_masks: Tuple[np.ndarray, ...]
    overlap_total: int


def median_split(values: np.ndarray, lo: float, hi: float) -> float:
    """Lower median of ``values``; the line keeps at least one value strictly above it.

    Falls back to the midpoint of [lo, hi] when there are no values or they
    are all equal.
    """
    if len(values) == 0:
        return (lo + hi) / 2.0
    ordered = np.sort(values)
    m = float(ordered[(len(ordered) - 1) // 2])
    top = float(ordered[-1])
    if m < top:
        return m
    below = ordered[ordered < top]
    if len(below):
        return float(below[-1])
    return (lo + hi) / 2.0


def _halves(region: Rect, split: float, vertical: bool) -> Tuple[Rect, Rect]:
    if vertical:
        return (Rect(region.min_x, region.min_y, split, region.max_y),
                Rect(split, region.min_y, region.max_x, region.max_y))
    return (Rect(region.min_x, region.min_y, region.max_x, split),
            Rect(region.min_x, split, region.max_x, region.max_y))


def _split_way(region: Rect, xy: np.ndarray, segs: np.ndarray, epsilon: float, way: str) -> SplitResult:
    first, second = (0, 1) if way == 'A' else (1, 0)
    first_vertical = way == 'A'
    lo, hi = (region.min_x, region.max_x) if first_vertical else (region.min_y, region.max_y)
    line = median_split(xy[:, first], lo, hi)
    near = xy[:, first] <= line
    halves = _halves(region, line, first_vertical)

    regions: List[Rect] = []
    vmasks: List[np.ndarray] = []
    secondary: List[float] = []
    for half, side in zip(halves, (near, ~near)):
        lo2, hi2 = (half.min_y, half.max_y) if first_vertical else (half.min_x, half.max_x)
        line2 = median_split(xy[side, second], lo2, hi2)
        secondary.append(line2)
        low = xy[:, second] <= line2
        for quad, mask in zip(_halves(half, line2, not first_vertical), (side & low, side & ~low)):
            regions.append(quad)
            vmasks.append(mask)

    smasks = tuple(segment_rect_distance(segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3], q) <= epsilon
                   for q in regions)
    total = int(sum(int(m.sum()) for m in smasks))
    return SplitResult(way, (line, secondary[0], secondary[1]), tuple(regions), tuple(vmasks), smasks, total)


def split_node(region: Rect, xy: np.ndarray, segs: np.ndarray, epsilon: float) -> SplitResult:
    """Split ``region`` four ways, keeping whichever way duplicates fewer segments.

    ``xy`` are the retained points inside ``region``; ``segs`` the
    (m, 4) segment coordinates whose epsilon regions touch it. Ties go to
    way A.
    """
    a = _split_way(region, xy, segs, epsilon, 'A')
    b = _split_way(region, xy, segs, epsilon, 'B')
    return b if b.overlap_total < a.overlap_total else a


class IndexStats(BaseModel):
    node_count: int
    leaf_count: int
    min_height: int
    max_height: int
    avg_height: float
    vertex_count: int
    max_leaf_vertices: int
    run_count: int


class _Flat(NamedTuple):
    xy: np.ndarray
    segs: np.ndarray
    seg_traj: np.ndarray
    seg_idx: np.ndarray


def _flatten(trajectories: Sequence[CompressedTrajectory]) -> _Flat:
    if not trajectories:
        return _Flat(np.empty((0, 2)), np.empty((0, 4)), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    xy = np.concatenate([c.xy for c in trajectories])
    qs = [c.query_segments for c in trajectories]
    segs = np.concatenate([q[:, :4] for q in qs])
    seg_traj = np.concatenate([np.full(len(q), k, dtype=np.int64) for k, q in enumerate(qs)])
    seg_idx = np.concatenate([np.arange(len(q), dtype=np.int64) for q in qs])
    return _Flat(xy, segs, seg_traj, seg_idx)


def _runs(ids: Sequence[str], seg_traj: np.ndarray, seg_idx: np.ndarray) -> Tuple[SegmentRun, ...]:
    """Maximal runs of consecutive segments; input is in (trajectory, segment) order."""
    if len(seg_traj) == 0:
        return ()
    breaks = np.nonzero((np.diff(seg_traj) != 0) | (np.diff(seg_idx) != 1))[0] + 1
    starts = np.concatenate(([0], breaks))
    ends = np.concatenate((breaks - 1, [len(seg_traj) - 1]))
    return tuple(SegmentRun(ids[int(seg_traj[s])], int(seg_idx[s]), int(seg_idx[e]))
                 for s, e in zip(starts.tolist(), ends.tolist()))


class AspTree:
    """Immutable after build; safe for concurrent readers."""

    def __init__(self, root: AspNode, config: IndexConfig, trajectory_ids: Sequence[str], dataset_checksum: str):
        self.root = root
        self.config = config
        self.trajectory_ids = list(trajectory_ids)
        self.dataset_checksum = dataset_checksum
        self._order = {tid: k for k, tid in enumerate(self.trajectory_ids)}

    @property
    def epsilon(self) -> float:
        return self.config.epsilon

    @classmethod
    def build(cls, dataset: Union[CompressedDataset, Sequence[CompressedTrajectory]], cfg: IndexConfig) -> 'AspTree':
        start = perf_counter()
        if isinstance(dataset, CompressedDataset):
            if dataset.trajectories and dataset.epsilon != cfg.epsilon:
                raise ConfigurationError(
                    f'index epsilon {cfg.epsilon} does not match dataset epsilon {dataset.epsilon}')
            trajectories = dataset.trajectories
            checksum = dataset.checksum
        else:
            trajectories = list(dataset)
            checksum = records_checksum(trajectories)
        for c in trajectories:
            if c.epsilon != cfg.epsilon:
                raise ConfigurationError(
                    f'trajectory {c.id!r} was compressed with epsilon {c.epsilon}, index uses {cfg.epsilon}')
        ids = [c.id for c in trajectories]

        if not trajectories:
            root = AspNode(Rect(0.0, 0.0, 0.0, 0.0), depth=1, vertex_count=0)
            logger.info('index.build.done', trajectories=0, leaves=1, duration=perf_counter() - start)
            return cls(root, cfg, ids, checksum)

        flat = _flatten(trajectories)
        region = Rect.bounding(flat.xy[:, 0], flat.xy[:, 1]).expand(cfg.epsilon)
        seg_rows = np.arange(len(flat.segs))

        def grow(region: Rect, depth: int, xy: np.ndarray, rows: np.ndarray) -> AspNode:
            coincident = len(xy) > 0 and bool(np.all(xy == xy[0]))
            if len(xy) <= cfg.xi or depth >= cfg.max_depth or coincident:
                return AspNode(region, depth, len(xy), runs=_runs(ids, flat.seg_traj[rows], flat.seg_idx[rows]))
            split = split_node(region, xy, flat.segs[rows], cfg.epsilon)
            children = tuple(grow(q, depth + 1, xy[vm], rows[sm])
                             for q, vm, sm in zip(split.regions, split.vertex_masks, split.segment_masks))
            return AspNode(region, depth, len(xy), children=children, way=split.way, lines=split.lines)

        root = grow(region, 1, flat.xy, seg_rows)
        tree = cls(root, cfg, ids, checksum)
        st = tree.stats()
        logger.info('index.build.done', trajectories=len(ids), vertices=len(flat.xy), leaves=st.leaf_count,
                    avg_height=st.avg_height, max_height=st.max_height, duration=perf_counter() - start)
        return tree

    def leaves(self) -> List[AspNode]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out

    def query_leaves(self, r: Rect) -> List[SegmentRun]:
        """Runs stored in every leaf whose region overlaps ``r``, merged per trajectory.

        Overlapping or adjacent runs of one trajectory are merged. Output is
        in trajectory order, then segment order.
        """
        collected: Dict[str, List[Tuple[int, int]]] = {}
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            if not node.region.overlaps(r):
                continue
            if node.is_leaf:
                for run in node.runs:
                    collected.setdefault(run.trajectory_id, []).append((run.start, run.end))
            else:
                queue.extend(node.children)

        out: List[SegmentRun] = []
        for tid in sorted(collected, key=self._order.__getitem__):
            spans = sorted(collected[tid])
            cur_s, cur_e = spans[0]
            for s, e in spans[1:]:
                if s <= cur_e + 1:
                    cur_e = max(cur_e, e)
                else:
                    out.append(SegmentRun(tid, cur_s, cur_e))
                    cur_s, cur_e = s, e
            out.append(SegmentRun(tid, cur_s, cur_e))
        return out

    def stats(self) -> IndexStats:
        leaves = self.leaves()
        heights = [n.depth for n in leaves]
        node_count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            node_count += 1
            if not node.is_leaf:
                stack.extend(node.children)
        return IndexStats(
            node_count=node_count,
            leaf_count=len(leaves),
            min_height=min(heights),
            max_height=max(heights),
            avg_height=sum(heights) / len(heights),
            vertex_count=self.root.vertex_count,
            max_leaf_vertices=max(n.vertex_count for n in leaves),
            run_count=sum(len(n.runs) for n in leaves),
        )

    # -- dump --------------------------------------------------------------

    def to_json(self) -> str:
        dump = TreeDump(
            format=DUMP_FORMAT,
            version=DUMP_VERSION,
            xi=self.config.xi,
            epsilon=self.config.epsilon,
            max_depth=self.config.max_depth,
            trajectory_ids=self.trajectory_ids,
            dataset_checksum=self.dataset_checksum,
            root=_node_dump(self.root),
        )
        return dump.model_dump_json(exclude_none=True)

    @classmethod
    def from_json(cls, text: str, path: Optional[str] = None) -> 'AspTree':
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataFormatError(f'invalid index dump ({e.msg})', path=path, line=e.lineno)
        if not isinstance(payload, dict) or payload.get('format') != DUMP_FORMAT:
            raise DataFormatError(f'not an {DUMP_FORMAT} dump', path=path)
        if payload.get('version') != DUMP_VERSION:
            raise DataFormatError(
                f'index dump version {payload.get("version")} is not supported (expected {DUMP_VERSION})', path=path)
        try:
            dump = TreeDump.model_validate(payload)
        except ValidationError as e:
            err = e.errors()[0]
            where = '.'.join(str(p) for p in err['loc'])
            raise DataFormatError(f'corrupt index dump at {where}: {err["msg"]}', path=path)
        cfg = IndexConfig(xi=dump.xi, epsilon=dump.epsilon, max_depth=dump.max_depth)
        known = set(dump.trajectory_ids)
        root = _node_load(dump.root, 1, known, path)
        return cls(root, cfg, dump.trajectory_ids, dump.dataset_checksum)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + '\n', encoding='utf-8')
        logger.info('index.saved', path=str(path))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'AspTree':
        path = Path(path)
        if not path.is_file():
            raise DataFormatError('index file not found', path=str(path))
        tree = cls.from_json(path.read_text(encoding='utf-8'), path=str(path))
        logger.info('index.loaded', path=str(path), trajectories=len(tree.trajectory_ids))
        return tree


class NodeDump(BaseModel):
    region: Tuple[float, float, float, float]
    vertices: int = Field(ge=0)
    way: Optional[Literal['A', 'B']] = None
    lines: Optional[Tuple[float, float, float]] = None
    children: Optional[List['NodeDump']] = None
    runs: Optional[List[Tuple[str, int, int]]] = None

    @model_validator(mode='after')
    def _shape(self) -> 'NodeDump':
        if self.children is not None:
            if len(self.children) != 4 or self.way is None or self.lines is None:
                raise ValueError('internal node needs 4 children, a way and split lines')
            if self.runs:
                raise ValueError('internal node cannot hold runs')
        for _, s, e in self.runs or ():
            if s < 0 or s > e:
                raise ValueError(f'bad run {s}..{e}')
        return self


class TreeDump(BaseModel):
    format: str
    version: int
    xi: int = Field(ge=1)
    epsilon: float = Field(gt=0)
    max_depth: int = Field(default=MAX_DEPTH, ge=1)
    trajectory_ids: List[str]
    dataset_checksum: str = Field(pattern=r'^[0-9a-f]{64}$')
    root: NodeDump


NodeDump.model_rebuild()
TreeDump.model_rebuild()


def _node_dump(node: AspNode) -> NodeDump:
    if node.is_leaf:
        return NodeDump(region=tuple(node.region), vertices=node.vertex_count,
                        runs=[tuple(r) for r in node.runs])
    return NodeDump(region=tuple(node.region), vertices=node.vertex_count, way=node.way,
                    lines=node.lines, children=[_node_dump(c) for c in node.children])


def _node_load(d: NodeDump, depth: int, known: set, path: Optional[str]) -> AspNode:
    region = Rect(*d.region)
    if d.children is None:
        runs = tuple(SegmentRun(*r) for r in d.runs or ())
        for r in runs:
            if r.trajectory_id not in known:
                raise DataFormatError(f'run references unknown trajectory {r.trajectory_id!r}', path=path)
        return AspNode(region, depth, d.vertices, runs=runs)
    children = tuple(_node_load(c, depth + 1, known, path) for c in d.children)
    return AspNode(region, depth, d.vertices, children=children, way=d.way, lines=d.lines)


def build(dataset: Union[CompressedDataset, Sequence[CompressedTrajectory]], cfg: IndexConfig) -> AspTree:
    return AspTree.build(dataset, cfg)


def query_leaves(tree: AspTree, r: Rect) -> List[SegmentRun]:
    return tree.query_leaves(r)


def stats(tree: AspTree) -> IndexStats:
    return tree.stats()
