"""Euler-Maruyama schemes for delay equations driven by Brownian motion or jumps.

Both schemes freeze the coefficients at the last grid point:

    Y[k+1] = Y[k] + b(Y[k], Y[k-N]) dt + sigma(Y[k], Y[k-N]) dW[k]
    Y[k+1] = Y[k] + b(Y[k], Y[k-N]) dt + G(Y[k], Y[k-N]) (S[k] - lam * m1 * dt)

where ``S[k]`` is the sum of jump marks in ``(t_k, t_{k+1}]`` and ``lam * m1``
the compensator rate.  Indices ``k - N < 0`` read the initial segment.

Paths are simulated as a stack: every array operation acts elementwise along
the path axis, so a path's values do not depend on which other paths share
the stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ._parallel import batch_ranges, ordered_map
from .drivers import BrownianBatch, JumpBatch, JumpRealization, step_jump_sum
from .models import InitialSegment, ModelSpec
from .time_grid import TimeGrid


class DivergenceError(ArithmeticError):
    """A path produced a non-finite value."""

    def __init__(self, step: int, path: int | None = None):
        self.step = step
        self.path = path
        where = f" on path {path}" if path is not None else ""
        super().__init__(f"non-finite state at step {step}{where}")


@dataclass(frozen=True)
class PathLattice:
    """A single trajectory: the initial segment on the grid and ``Y_0..Y_M``."""

    grid: TimeGrid
    history: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    kind: str = "em"

    def full(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and states over ``[-tau, T]`` with ``t = 0`` listed once."""
        t = np.concatenate([self.grid.history_times()[:-1], self.grid.times()])
        return t, np.concatenate([self.history[:-1], self.values])


@dataclass(frozen=True)
class PathBatch:
    """Stack of trajectories; ``values`` has shape ``(P, M + 1, n)``.

    ``divergent_step[i]`` is the first index ``k`` with non-finite ``Y_k`` on
    path ``i``, or ``-1`` for paths that stayed finite.
    """

    grid: TimeGrid
    history: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    divergent_step: np.ndarray = field(repr=False)

    @property
    def divergent(self) -> np.ndarray:
        return self.divergent_step >= 0

    def path(self, i: int) -> PathLattice:
        if self.divergent[i]:
            raise DivergenceError(int(self.divergent_step[i]), i)
        return PathLattice(self.grid, self.history, self.values[i])


Noise = Union[BrownianBatch, JumpBatch]


def _check_noise(model: ModelSpec, grid: TimeGrid, noise: Noise) -> None:
    if noise.grid != grid:
        raise ValueError(f"noise lives on {noise.grid}, solver grid is {grid}")
    if isinstance(noise, BrownianBatch):
        if model.diffusion is None:
            raise ValueError("Brownian noise given to a pure-jump model")
        if noise.m != model.m:
            raise ValueError(f"model needs m={model.m} Brownian components, noise has {noise.m}")
    elif isinstance(noise, JumpBatch):
        if model.jump_gain is None:
            raise ValueError("jump noise given to a Brownian model")
    else:
        raise TypeError(f"unsupported noise type {type(noise).__name__}")


def simulate_paths(
    model: ModelSpec, xi: InitialSegment | np.ndarray, grid: TimeGrid, noise: Noise
) -> PathBatch:
    """Run the scheme for every path in ``noise`` (stacked along axis 0)."""
    _check_noise(model, grid, noise)
    history = xi.on_grid(grid) if isinstance(xi, InitialSegment) else np.asarray(xi, dtype=float)
    if history.shape != (grid.N + 1, model.n):
        raise ValueError(f"history has shape {history.shape}, expected {(grid.N + 1, model.n)}")

    N, M, dt = grid.N, grid.M, grid.dt
    if isinstance(noise, BrownianBatch):
        dW = noise.increments
        if dW.ndim == 2:
            dW = dW[None]
        P = dW.shape[0]
    else:
        S = np.atleast_2d(noise.mark_sums)
        P = S.shape[0]
        jump_comp = noise.compensator_rate * dt

    # history and solution share one buffer: Z[:, N + k] = Y_k, Z[:, k] = Y_{k-N}
    Z = np.empty((P, N + M + 1, model.n))
    Z[:, : N + 1] = history
    drift, diffusion, gain = model.drift, model.diffusion, model.jump_gain
    with np.errstate(over="ignore", invalid="ignore"):
        if diffusion is not None:
            for k in range(M):
                x, y = Z[:, N + k], Z[:, k]
                noise_term = np.sum(diffusion(x, y) * dW[:, k, None, :], axis=-1)
                Z[:, N + k + 1] = x + drift(x, y) * dt + noise_term
        else:
            for k in range(M):
                x, y = Z[:, N + k], Z[:, k]
                Z[:, N + k + 1] = x + drift(x, y) * dt + gain(x, y) * (S[:, k, None] - jump_comp)

    values = Z[:, N:]
    bad = ~np.all(np.isfinite(values), axis=-1)
    first = np.where(bad.any(axis=1), bad.argmax(axis=1), -1)
    return PathBatch(grid, history, values, first)


def em_brownian(
    model: ModelSpec, xi: InitialSegment, grid: TimeGrid, noise: BrownianBatch
) -> PathLattice:
    """Single-path Brownian scheme; raises ``DivergenceError`` on overflow."""
    if noise.increments.ndim != 2:
        raise ValueError("em_brownian takes a single path; use simulate_paths for stacks")
    batch = simulate_paths(model, xi, grid, noise)
    if batch.divergent[0]:
        raise DivergenceError(int(batch.divergent_step[0]))
    return PathLattice(grid, batch.history, batch.values[0])


def em_jump(
    model: ModelSpec, xi: InitialSegment, grid: TimeGrid, jumps: JumpRealization
) -> PathLattice:
    """Single-path jump scheme with each step's compensated integral done exactly."""
    if model.jump_gain is None:
        raise ValueError("em_jump needs a model with a jump gain")
    history = xi.on_grid(grid)
    N, M, dt = grid.N, grid.M, grid.dt
    times = grid.times()
    Z = np.empty((N + M + 1, model.n))
    Z[: N + 1] = history
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(M):
            x, y = Z[N + k], Z[k]
            jump = step_jump_sum(jumps, times[k], times[k + 1], model.jump_gain(x, y))
            Z[N + k + 1] = x + model.drift(x, y) * dt + jump
            if not np.all(np.isfinite(Z[N + k + 1])):
                raise DivergenceError(k + 1)
    return PathLattice(grid, history, Z[N:])


# -- increment probe -----------------------------------------------------------


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate of a moment with its batch-means standard error."""

    dt: float
    p: float
    moment: float
    stderr: float
    paths: int
    divergent: int
    step: int = -1


def batch_stderr(batch_means: np.ndarray) -> float:
    batch_means = batch_means[np.isfinite(batch_means)]
    if batch_means.size < 2:
        return float("nan")
    return float(np.std(batch_means, ddof=1) / np.sqrt(batch_means.size))


def increment_moments(
    model: ModelSpec,
    xi: InitialSegment,
    grid: TimeGrid,
    driver,
    p: float | Sequence[float],
    paths: int,
    seed: int = 0,
    batches: int = 20,
    workers: int = 1,
    estimator: str = "crossfit",
) -> MomentEstimate | list[MomentEstimate]:
    """Estimate ``max_k E|Y_{k+1} - Y_k|^p`` over the grid.

    ``driver`` is a ``BrownianDriver`` or ``JumpDriver``.  Passing a sequence
    of orders reuses one simulation for all of them and returns a list.
    Divergent paths are excluded and counted.

    ``estimator="plugin"`` reports the largest per-step sample mean.  That
    maximum is biased upwards, and for heavy-tailed increments (jumps, p = 4)
    the bias grows with the number of steps, because a single extreme path
    decides which step wins.  The default ``"crossfit"`` picks the step on one
    half of the batches and averages it on the other half, then swaps the
    halves; the batch values entering the mean also give the standard error.
    """
    if estimator not in ("crossfit", "plugin"):
        raise ValueError(f"unknown estimator {estimator!r}")
    orders = [float(p)] if np.isscalar(p) else [float(v) for v in p]
    if any(v < 2 for v in orders):
        raise ValueError("moment order p must be at least 2")
    history = xi.on_grid(grid)

    def work(rows: range):
        batch = simulate_paths(model, history, grid, driver.sample(grid, seed, rows))
        ok = ~batch.divergent
        step_norm = np.sqrt(np.sum(np.diff(batch.values[ok], axis=1) ** 2, axis=-1))
        sums = np.stack([np.sum(step_norm**v, axis=0) for v in orders])
        return sums, int(ok.sum())

    results = ordered_map(work, batch_ranges(paths, batches), workers)
    sums = np.stack([r[0] for r in results])  # (batches, orders, M)
    counts = np.array([r[1] for r in results], dtype=float)
    used = int(counts.sum())
    if used == 0:
        raise DivergenceError(-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        batch_means = sums / counts[:, None, None]
    out = []
    for j, v in enumerate(orders):
        if estimator == "plugin" or batches < 2:
            k = int(np.argmax(sums[:, j].sum(axis=0) / used))
            moment, se = float(np.sum(sums[:, j, k]) / used), batch_stderr(batch_means[:, j, k])
        else:
            half = batches // 2
            first, second = slice(0, half), slice(half, None)
            k_first = int(np.argmax(sums[first, j].sum(axis=0) / max(counts[first].sum(), 1)))
            k_second = int(np.argmax(sums[second, j].sum(axis=0) / max(counts[second].sum(), 1)))
            values = np.concatenate([batch_means[first, j, k_second], batch_means[second, j, k_first]])
            k = k_first
            moment, se = float(np.nanmean(values)), batch_stderr(values)
        out.append(MomentEstimate(grid.dt, v, moment, se, paths, paths - used, k))
    return out[0] if np.isscalar(p) else out
