"""Seeded synthetic trajectories: smooth walks, zig-zags and U-turn motifs."""
from __future__ import annotations

import math
from typing import List

import numpy as np
import structlog
from pydantic import BaseModel, Field, model_validator

from .errors import InvalidSpecError
from .io_model import RawTrajectory

logger = structlog.get_logger()

MOTIFS = ('smooth', 'zigzag', 'uturn')


class SyntheticSpec(BaseModel):
    count: int = Field(default=100, ge=1)
    points_min: int = Field(default=200, ge=1)
    points_max: int = Field(default=400, ge=1)
    step_mean: float = Field(default=10.0, gt=0)
    step_std: float = Field(default=2.0, ge=0)
    # radians; per-step heading noise
    turn_std: float = Field(default=0.15, ge=0)
    zigzag_angle: float = Field(default=math.pi / 3, ge=0, le=math.pi)
    uturn_leg_min: int = Field(default=10, ge=1)
    uturn_leg_max: int = Field(default=40, ge=1)
    weight_smooth: float = Field(default=0.6, ge=0)
    weight_zigzag: float = Field(default=0.2, ge=0)
    weight_uturn: float = Field(default=0.2, ge=0)
    interval: float = Field(default=1.0, gt=0)
    extent: float = Field(default=5000.0, gt=0)
    id_prefix: str = 'traj-'

    @model_validator(mode='after')
    def _check(self) -> 'SyntheticSpec':
        if self.points_min > self.points_max:
            raise InvalidSpecError(f'points_min {self.points_min} exceeds points_max {self.points_max}')
        if self.uturn_leg_min > self.uturn_leg_max:
            raise InvalidSpecError(f'uturn_leg_min {self.uturn_leg_min} exceeds uturn_leg_max {self.uturn_leg_max}')
        if self.weight_smooth + self.weight_zigzag + self.weight_uturn <= 0:
            raise InvalidSpecError('at least one motif weight must be positive')
        return self

    @property
    def weights(self) -> np.ndarray:
        w = np.array([self.weight_smooth, self.weight_zigzag, self.weight_uturn], dtype=float)
        return w / w.sum()


def _headings(spec: SyntheticSpec, motif: str, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    heading0 = rng.uniform(-math.pi, math.pi)
    noise = np.cumsum(spec.turn_std * rng.standard_normal(n_steps)) if spec.turn_std > 0 else np.zeros(n_steps)
    if motif == 'smooth':
        return heading0 + noise
    if motif == 'zigzag':
        sign = np.where(np.arange(n_steps) % 2 == 0, 1.0, -1.0)
        return heading0 + sign * spec.zigzag_angle + noise
    # uturn: straight legs, heading reversed between legs
    legs = np.empty(n_steps, dtype=float)
    pos = 0
    k = 0
    while pos < n_steps:
        length = int(rng.integers(spec.uturn_leg_min, spec.uturn_leg_max + 1))
        legs[pos:pos + length] = k
        pos += length
        k += 1
    return heading0 + legs * math.pi + noise


def _one(spec: SyntheticSpec, index: int, rng: np.random.Generator) -> RawTrajectory:
    n = int(rng.integers(spec.points_min, spec.points_max + 1))
    motif = MOTIFS[int(rng.choice(len(MOTIFS), p=spec.weights))]
    start = rng.uniform(0.0, spec.extent, size=2)
    xy = np.empty((n, 2))
    xy[0] = start
    if n > 1:
        steps = spec.step_mean + spec.step_std * rng.standard_normal(n - 1)
        steps = np.maximum(steps, 0.05 * spec.step_mean)
        heading = _headings(spec, motif, n - 1, rng)
        xy[1:, 0] = start[0] + np.cumsum(steps * np.cos(heading))
        xy[1:, 1] = start[1] + np.cumsum(steps * np.sin(heading))
    t = spec.interval * np.arange(n, dtype=float)
    return RawTrajectory(id=f'{spec.id_prefix}{index:05d}', xy=xy, t=t)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> List[RawTrajectory]:
    children = np.random.SeedSequence(seed).spawn(spec.count)
    out = [_one(spec, i, np.random.default_rng(ss)) for i, ss in enumerate(children)]
    logger.info('synthetic.generated', trajectories=len(out), points=sum(len(r) for r in out), seed=seed)
    return out
