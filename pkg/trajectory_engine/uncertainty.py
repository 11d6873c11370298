"""Where did the discarded points go?

Each compressed segment's discarded points lie in its epsilon bounding
region (a stadium around the segment). Their PSEDs are modelled as
``|N(0, sigma)|`` truncated at epsilon by rejection, with positions uniform
by arc length on the level curve at that offset; the fraction of samples in
the query rectangle is lifted to "at least one of n_d points" by
``1 - (1 - rate) ** n_d``.
"""
from __future__ import annotations

import hashlib
import math
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .errors import DegenerateGeometryError, PreconditionError
from .geometry import Point2, Rect, Segment2, psed, segment_rect_distance


class EpsilonBoundingRegion(NamedTuple):
    segment: Segment2
    epsilon: float

    def contains(self, p: Point2) -> bool:
        return psed(p, self.segment) <= self.epsilon

    def bounds(self) -> Rect:
        (x0, y0), (x1, y1) = self.segment
        return Rect(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)).expand(self.epsilon)


class SamplerConfig(BaseModel):
    sigma: float = Field(ge=0)
    n_samples: int = Field(default=15, ge=1)
    rng_seed: int = Field(default=0, ge=0, lt=2 ** 64)


def ebr_intersects_rect(ebr: EpsilonBoundingRegion, r: Rect) -> bool:
    (x0, y0), (x1, y1) = ebr.segment
    return bool(segment_rect_distance(x0, y0, x1, y1, r) <= ebr.epsilon)


def segment_rng(seed: int, query_index: int, trajectory_id: str, segment_index: int) -> np.random.Generator:
    """Generator keyed by (seed, query, trajectory, segment), independent of evaluation order."""
    key = int.from_bytes(hashlib.blake2b(trajectory_id.encode('utf-8'), digest_size=8).digest(), 'little')
    return np.random.default_rng(np.random.SeedSequence([seed, query_index, key, segment_index]))


def draw_offsets(sigma: float, epsilon: float, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """``n`` draws of ``|N(0, sigma)|`` with every draw above epsilon redrawn.

    Returns the accepted offsets and the number of draws consumed.
    """
    if sigma == 0.0:
        return np.zeros(n), n
    chunks = []
    have = 0
    attempts = 0
    while have < n:
        need = n - have
        batch = np.abs(rng.normal(0.0, sigma, size=max(2 * need, 16)))
        ok = np.nonzero(batch <= epsilon)[0]
        if len(ok) >= need:
            take = ok[:need]
            attempts += int(take[-1]) + 1
            chunks.append(batch[take])
            have = n
        else:
            attempts += len(batch)
            chunks.append(batch[ok])
            have += len(ok)
    return np.concatenate(chunks), attempts


def offset_points(seg: Segment2, rd, u) -> np.ndarray:
    """Points at PSED ``rd`` from ``seg``, placed by arc-length fraction ``u`` in [0, 1).

    The level curve is walked as: left side forwards, cap around the end,
    right side backwards, cap around the start.
    """
    length = seg.length
    if length == 0.0:
        raise DegenerateGeometryError(f'offset curve needs a non-degenerate segment, got {tuple(seg.start)} twice')
    rd = np.asarray(rd, dtype=float)
    u = np.asarray(u, dtype=float)
    (sx, sy), (ex, ey) = seg
    dx = (ex - sx) / length
    dy = (ey - sy) / length
    nx, ny = -dy, dx
    cap = math.pi * rd
    s = u * (2.0 * length + 2.0 * cap)

    out = np.empty(s.shape + (2,))
    with np.errstate(divide='ignore', invalid='ignore'):
        phi_end = np.where(rd > 0, (s - length) / rd, 0.0)
        phi_start = np.where(rd > 0, (s - 2.0 * length - cap) / rd, 0.0)

    leg1 = s < length
    cap_end = (~leg1) & (s < length + cap)
    leg2 = (~leg1) & (~cap_end) & (s < 2.0 * length + cap)
    cap_start = ~(leg1 | cap_end | leg2)

    out[..., 0] = np.select(
        [leg1, cap_end, leg2, cap_start],
        [sx + dx * s + nx * rd,
         ex + rd * (nx * np.cos(phi_end) + dx * np.sin(phi_end)),
         ex - dx * (s - length - cap) - nx * rd,
         sx - rd * (nx * np.cos(phi_start) + dx * np.sin(phi_start))])
    out[..., 1] = np.select(
        [leg1, cap_end, leg2, cap_start],
        [sy + dy * s + ny * rd,
         ey + rd * (ny * np.cos(phi_end) + dy * np.sin(phi_end)),
         ey - dy * (s - length - cap) - ny * rd,
         sy - rd * (ny * np.cos(phi_start) + dy * np.sin(phi_start))])
    return out


def sample_offset_point(seg: Segment2, rd: float, rng: np.random.Generator) -> Point2:
    x, y = offset_points(seg, np.array([rd]), np.array([rng.random()]))[0].tolist()
    return Point2(x, y)


def _in_rect(pts: np.ndarray, r: Rect) -> np.ndarray:
    return ((pts[:, 0] >= r.min_x) & (pts[:, 0] <= r.max_x)
            & (pts[:, 1] >= r.min_y) & (pts[:, 1] <= r.max_y))


def sample_rate(seg: Segment2, r: Rect, epsilon: float, cfg: SamplerConfig,
                rng: np.random.Generator) -> float:
    rd, _ = draw_offsets(cfg.sigma, epsilon, cfg.n_samples, rng)
    u = rng.random(cfg.n_samples)
    if seg.is_degenerate:
        # zero-length segment: the level curve is a circle
        theta = u * 2.0 * math.pi
        pts = np.column_stack([seg.start.x + rd * np.cos(theta), seg.start.y + rd * np.sin(theta)])
    else:
        pts = offset_points(seg, rd, u)
    return float(_in_rect(pts, r).mean())


def probability_from_rate(rate: float, n_discarded: int) -> float:
    if n_discarded <= 0:
        return 0.0
    return 1.0 - (1.0 - rate) ** n_discarded


def estimate_segment_probability(seg: Segment2, r: Rect, epsilon: float, n_discarded: int,
                                 cfg: SamplerConfig, rng: Optional[np.random.Generator] = None) -> float:
    if n_discarded < 0:
        raise PreconditionError(f'discarded count must be >= 0, got {n_discarded}')
    if n_discarded == 0:
        return 0.0
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    return probability_from_rate(sample_rate(seg, r, epsilon, cfg, rng), n_discarded)


def compose_trajectory_probability(segment_probs: Sequence[float]) -> float:
    miss = 1.0
    for p in segment_probs:
        if not 0.0 <= p <= 1.0:
            raise PreconditionError(f'probability out of range: {p}')
        miss *= 1.0 - p
    return 1.0 - miss
