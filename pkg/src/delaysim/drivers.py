"""Reproducible noise for the Euler-Maruyama solvers.

Every random draw comes from a Philox counter-based stream keyed by
``(seed, purpose tag)`` with the path index placed in the high counter words,
so the stream of a path does not depend on which other paths are simulated,
in what order, or on how many workers share the load.

Noise is sampled once at the finest resolution of an experiment and coarser
levels are obtained by summing consecutive fine steps left to right.  The
coarse and fine solutions therefore see the same underlying driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .time_grid import TimeGrid

BROWNIAN_TAG = 1
JUMP_TAG = 2

_MASK64 = (1 << 64) - 1


def path_rng(seed: int, path: int, tag: int) -> np.random.Generator:
    """Independent generator for one ``(seed, path, tag)`` triple."""
    if path < 0:
        raise ValueError("path index must be non-negative")
    key = np.array([seed & _MASK64, tag & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, path & _MASK64, path >> 64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def aggregate_steps(steps: np.ndarray, factor: int, axis: int = -1) -> np.ndarray:
    """Sum blocks of ``factor`` consecutive entries along ``axis``.

    The block sums are accumulated strictly left to right, so the result is
    bitwise equal to ``((s[0] + s[1]) + s[2]) + ...`` for every block.
    """
    steps = np.asarray(steps)
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"aggregation factor must be a power of 2, got {factor}")
    axis = axis % steps.ndim
    if steps.shape[axis] % factor:
        raise ValueError(
            f"factor {factor} does not divide the {steps.shape[axis]} fine steps"
        )
    if factor == 1:
        return steps.copy()

    def block(j):
        index = [slice(None)] * steps.ndim
        index[axis] = slice(j, None, factor)
        return steps[tuple(index)]

    acc = block(0).copy()
    for j in range(1, factor):
        acc += block(j)
    return acc


# -- Brownian motion ---------------------------------------------------------


@dataclass(frozen=True)
class BrownianBatch:
    """Brownian increments on ``grid``.

    ``increments`` has shape ``(M, m)`` for a single path or ``(P, M, m)`` for
    a stack of paths.
    """

    grid: TimeGrid
    m: int
    increments: np.ndarray = field(repr=False)

    def aggregate(self, factor: int) -> "BrownianBatch":
        return aggregate_brownian(self, factor)


def _brownian_draw(grid: TimeGrid, m: int, seed: int, path: int) -> np.ndarray:
    z = path_rng(seed, path, BROWNIAN_TAG).standard_normal((grid.M, m))
    return z * np.sqrt(grid.dt)


def sample_brownian(grid: TimeGrid, m: int, seed: int, path: int) -> BrownianBatch:
    """One path of i.i.d. ``Normal(0, dt)`` increments in ``m`` dimensions."""
    if m < 1:
        raise ValueError("Brownian dimension must be positive")
    return BrownianBatch(grid, m, _brownian_draw(grid, m, seed, path))


def sample_brownian_paths(
    grid: TimeGrid, m: int, seed: int, paths: Sequence[int]
) -> BrownianBatch:
    """Stacked increments for the given path indices, shape ``(P, M, m)``."""
    if m < 1:
        raise ValueError("Brownian dimension must be positive")
    out = np.empty((len(paths), grid.M, m))
    for row, path in enumerate(paths):
        out[row] = _brownian_draw(grid, m, seed, int(path))
    return BrownianBatch(grid, m, out)


def aggregate_brownian(batch: BrownianBatch, factor: int) -> BrownianBatch:
    """Increments of the same Brownian path on a grid ``factor`` times coarser."""
    coarse = batch.grid.coarsen(factor)
    return BrownianBatch(coarse, batch.m, aggregate_steps(batch.increments, factor, axis=-2))


# -- Compound Poisson jumps --------------------------------------------------


@dataclass(frozen=True)
class MarkDistribution:
    """Law of a jump mark, i.e. the normalised jump measure ``lambda / lambda(U)``.

    Use the ``uniform``, ``normal`` and ``discrete`` constructors.
    """

    kind: str
    params: tuple

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "MarkDistribution":
        if not b > a:
            raise ValueError("uniform marks need a < b")
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def normal(cls, mu: float = 0.0, sigma: float = 1.0) -> "MarkDistribution":
        if not sigma > 0:
            raise ValueError("normal marks need sigma > 0")
        return cls("normal", (float(mu), float(sigma)))

    @classmethod
    def discrete(cls, points, weights=None) -> "MarkDistribution":
        points = tuple(float(v) for v in points)
        if not points:
            raise ValueError("discrete marks need at least one point")
        if weights is None:
            weights = [1.0] * len(points)
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(points),) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("discrete weights must be non-negative, one per point")
        return cls("discrete", (points, tuple(w / w.sum())))

    @classmethod
    def from_config(cls, cfg: dict) -> "MarkDistribution":
        cfg = dict(cfg)
        kind = cfg.pop("kind")
        if kind == "uniform":
            return cls.uniform(**cfg)
        if kind == "normal":
            return cls.normal(**cfg)
        if kind == "discrete":
            return cls.discrete(**cfg)
        raise ValueError(f"unknown mark distribution {kind!r}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            a, b = self.params
            return rng.uniform(a, b, size)
        if self.kind == "normal":
            mu, sigma = self.params
            return rng.normal(mu, sigma, size)
        points, weights = self.params
        return np.asarray(points)[rng.choice(len(points), size=size, p=weights)]

    def moment(self, p: float) -> float:
        """Absolute moment ``E|u|^p`` of one mark."""
        if self.kind == "uniform":
            a, b = self.params

            def F(u):
                return np.sign(u) * abs(u) ** (p + 1) / (p + 1)

            return float((F(b) - F(a)) / (b - a))
        if self.kind == "normal":
            mu, sigma = self.params
            return float(
                sigma**p
                * 2 ** (p / 2)
                * special.gamma((p + 1) / 2)
                / np.sqrt(np.pi)
                * special.hyp1f1(-p / 2, 0.5, -(mu**2) / (2 * sigma**2))
            )
        points, weights = self.params
        return float(np.dot(weights, np.abs(points) ** p))

    @property
    def mean(self) -> float:
        """Signed first moment ``E u``."""
        if self.kind == "uniform":
            a, b = self.params
            return 0.5 * (a + b)
        if self.kind == "normal":
            return self.params[0]
        points, weights = self.params
        return float(np.dot(weights, points))


@dataclass(frozen=True)
class JumpRealization:
    """Jump times in ``(0, horizon]`` with their marks for one path."""

    times: np.ndarray
    marks: np.ndarray
    intensity: float
    mark_mean: float
    horizon: float

    @property
    def compensator_rate(self) -> float:
        """``int u lambda(du)``: the drift removed by compensation, per unit weight."""
        return self.intensity * self.mark_mean


def _jump_draw(grid, intensity, marks, seed, path):
    rng = path_rng(seed, path, JUMP_TAG)
    count = rng.poisson(intensity * grid.T)
    # T - U[0, T) lands in (0, T]
    times = np.sort(grid.T - rng.uniform(0.0, grid.T, count))
    return times, marks.sample(rng, count)


def sample_jumps(
    grid: TimeGrid, intensity: float, marks: MarkDistribution, seed: int, path: int
) -> JumpRealization:
    """Compound Poisson realization on ``(0, T]`` with finite total intensity."""
    if not (intensity > 0 and np.isfinite(intensity)):
        raise ValueError("jump intensity must be finite and positive")
    times, values = _jump_draw(grid, intensity, marks, seed, path)
    return JumpRealization(times, values, float(intensity), marks.mean, grid.T)


def step_jump_sum(jr: JumpRealization, t0: float, t1: float, weight) -> np.ndarray:
    """Compensated integral of ``weight * u`` against the jump measure over ``(t0, t1]``."""
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    inside = (jr.times > t0) & (jr.times <= t1)
    total = 0.0
    for u in jr.marks[inside]:
        total += u
    return np.asarray(weight, dtype=float) * (total - jr.compensator_rate * (t1 - t0))


def bin_marks(jr: JumpRealization, grid: TimeGrid) -> np.ndarray:
    """Per-step mark sums: entry ``k`` collects jumps in ``(t_k, t_{k+1}]``."""
    return _bin(grid, [jr.times], [jr.marks])[0]


def _bin(grid, times_list, marks_list):
    P, M = len(times_list), grid.M
    counts = [len(t) for t in times_list]
    if sum(counts) == 0:
        return np.zeros((P, M))
    times = np.concatenate(times_list)
    values = np.concatenate(marks_list)
    rows = np.repeat(np.arange(P), counts)
    steps = np.clip(np.ceil(times / grid.dt).astype(np.int64) - 1, 0, M - 1)
    # bincount accumulates in input order, i.e. jump-time order within a path
    flat = np.bincount(rows * M + steps, weights=values, minlength=P * M)
    return flat.reshape(P, M)


@dataclass(frozen=True)
class JumpBatch:
    """Per-step mark sums of compound Poisson paths, shape ``(P, M)``."""

    grid: TimeGrid
    mark_sums: np.ndarray = field(repr=False)
    intensity: float
    mark_mean: float

    @property
    def compensator_rate(self) -> float:
        return self.intensity * self.mark_mean

    def aggregate(self, factor: int) -> "JumpBatch":
        coarse = self.grid.coarsen(factor)
        sums = aggregate_steps(self.mark_sums, factor, axis=-1)
        return JumpBatch(coarse, sums, self.intensity, self.mark_mean)


def sample_jump_paths(
    grid: TimeGrid,
    intensity: float,
    marks: MarkDistribution,
    seed: int,
    paths: Sequence[int],
) -> JumpBatch:
    if not (intensity > 0 and np.isfinite(intensity)):
        raise ValueError("jump intensity must be finite and positive")
    draws = [_jump_draw(grid, intensity, marks, seed, int(p)) for p in paths]
    sums = _bin(grid, [d[0] for d in draws], [d[1] for d in draws])
    return JumpBatch(grid, sums, float(intensity), marks.mean)


# -- Driver descriptions -----------------------------------------------------


@dataclass(frozen=True)
class BrownianDriver:
    m: int = 1
    kind: str = field(default="brownian", init=False)

    def sample(self, grid: TimeGrid, seed: int, paths: Sequence[int]) -> BrownianBatch:
        return sample_brownian_paths(grid, self.m, seed, paths)


@dataclass(frozen=True)
class JumpDriver:
    intensity: float = 1.0
    marks: MarkDistribution = field(default_factory=MarkDistribution.uniform)
    kind: str = field(default="jump", init=False)

    def sample(self, grid: TimeGrid, seed: int, paths: Sequence[int]) -> JumpBatch:
        return sample_jump_paths(grid, self.intensity, self.marks, seed, paths)
