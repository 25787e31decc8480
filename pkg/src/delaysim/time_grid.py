"""Uniform time grids on [-tau, T] with the delay aligned to the step.

The step is ``dt = tau / N = T / M`` so that ``t - tau`` is always a grid
node.  Only the integers ``N`` and ``M`` and the exact ``tau``/``T`` inputs are
stored; ``dt`` is derived on access.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np


class GridError(ValueError):
    """Raised for grid parameters that violate the step-size constraint."""


def _exact(value) -> Fraction:
    # Floats are read through their shortest repr so that 0.1 means one tenth,
    # matching what a user typed into a config file.
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, Real):
        return Fraction(repr(float(value)))
    raise TypeError(f"cannot interpret {value!r} as an exact number")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``N`` steps per delay and ``M`` steps up to ``T``."""

    tau: float
    T: float
    N: int
    M: int

    @property
    def dt(self) -> float:
        return self.tau / self.N

    def times(self) -> np.ndarray:
        """Solution node times ``k * dt`` for ``k = 0..M``."""
        return np.arange(self.M + 1) * self.dt

    def history_times(self) -> np.ndarray:
        """Initial-segment node times ``-tau, -tau + dt, ..., 0``."""
        return (np.arange(self.N + 1) - self.N) * self.dt

    def refine(self, factor: int) -> "TimeGrid":
        """Grid with ``factor`` times as many steps; ``factor`` a power of 2."""
        _check_power_of_two(factor)
        return TimeGrid(self.tau, self.T, self.N * factor, self.M * factor)

    def coarsen(self, factor: int) -> "TimeGrid":
        _check_power_of_two(factor)
        if self.N % factor:
            raise GridError(f"factor {factor} does not divide N={self.N}")
        return TimeGrid(self.tau, self.T, self.N // factor, self.M // factor)


def _check_power_of_two(factor: int) -> None:
    if not isinstance(factor, (int, np.integer)) or factor < 1 or factor & (factor - 1):
        raise GridError(f"refinement factor must be a power of 2, got {factor!r}")


def make_grid(tau, T, N: int) -> TimeGrid:
    """Build the grid with ``dt = tau / N``, requiring ``T`` to be a multiple of it.

    ``tau`` and ``T`` may be floats, ints, decimal strings or ``Fraction``s;
    divisibility is decided in exact rational arithmetic.
    """
    if not isinstance(N, (int, np.integer)) or isinstance(N, bool) or N < 1:
        raise GridError(f"N must be a positive integer, got {N!r}")
    tau_q, T_q = _exact(tau), _exact(T)
    if tau_q <= 0 or T_q <= 0:
        raise GridError("tau and T must be positive")
    steps = T_q * N / tau_q
    if steps.denominator != 1:
        raise GridError(f"T={T} is not an integer multiple of tau/N={tau}/{N}")
    if tau_q / N >= 1:
        raise GridError(f"step tau/N = {float(tau_q / N)} must lie in (0, 1)")
    return TimeGrid(float(tau_q), float(T_q), int(N), int(steps))


def delayed_index(grid: TimeGrid, k: int) -> int:
    """Index of the node ``t_k - tau``; negative values fall in the initial segment."""
    if not 0 <= k <= grid.M:
        raise IndexError(f"step {k} outside [0, {grid.M}]")
    return k - grid.N
