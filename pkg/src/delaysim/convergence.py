"""Strong-error experiments under coupled noise and log-log order fitting.

For each path the noise is drawn once on the reference grid (``n_ref`` steps
per delay), the reference solution is computed there, and the same noise is
summed down to every coarser level.  The strong error of a level is
``E sup_k |X_ref(t_k) - Y(t_k)|^p`` with the supremum over the level's own
grid points, which the reference grid contains.

Work is split into ``batches`` contiguous path ranges.  Batches are the unit
both of parallel execution and of the batch-means standard errors, and results
are always combined in batch order, so the report does not depend on the
number of workers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ._parallel import batch_ranges, ordered_map
from .drivers import BrownianDriver, JumpDriver, MarkDistribution
from .em_solver import MomentEstimate, simulate_paths, batch_stderr
from .models import InitialSegment, ModelSpec, build_initial, build_model
from .time_grid import TimeGrid, make_grid

MIN_BATCHES = 20


class PlanError(ValueError):
    """An experiment plan violates its own invariants."""


class SlopeFitError(RuntimeError):
    """Not enough usable levels to fit a convergence order."""


@dataclass(frozen=True)
class ExperimentPlan:
    model: str
    model_params: dict
    tau: float
    T: float
    levels: tuple
    n_ref: int
    initial: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.5})
    p: float = 2.0
    paths: int = 1000
    batches: int = MIN_BATCHES
    seed: int = 12345
    intensity: float = 1.0
    marks: dict = field(default_factory=lambda: {"kind": "uniform", "a": 0.0, "b": 1.0})
    theta: Optional[float] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(n) for n in self.levels))
        self.validate()

    def validate(self) -> None:
        if not self.levels:
            raise PlanError("at least one level is required")
        if len(set(self.levels)) != len(self.levels):
            raise PlanError("levels must be distinct")
        for n in self.levels:
            if n < 1 or n >= self.n_ref:
                raise PlanError(f"level N={n} must satisfy 1 <= N < n_ref={self.n_ref}")
            ratio, rem = divmod(self.n_ref, n)
            if rem or ratio & (ratio - 1):
                raise PlanError(f"n_ref={self.n_ref} is not a power-of-2 multiple of N={n}")
        if self.p < 2:
            raise PlanError("p must be at least 2")
        if self.paths < 1:
            raise PlanError("paths must be positive")
        if self.batches < MIN_BATCHES:
            raise PlanError(f"at least {MIN_BATCHES} batches are needed for batch-means errors")
        if self.paths % self.batches:
            raise PlanError(f"paths={self.paths} must be divisible by batches={self.batches}")
        if not self.intensity > 0 or not math.isfinite(self.intensity):
            raise PlanError("jump intensity must be finite and positive")
        for name in ("theta", "alpha"):
            v = getattr(self, name)
            if v is not None and not 0 < v < 1:
                raise PlanError(f"{name} must lie in (0, 1)")
        try:
            for n in self.levels + (self.n_ref,):
                make_grid(self.tau, self.T, n)
        except ValueError as exc:
            raise PlanError(str(exc)) from exc

    def build_model(self) -> ModelSpec:
        return build_model(self.model, self.model_params)

    def build_initial(self) -> InitialSegment:
        return build_initial(self.initial, self.tau)

    def build_driver(self, model: ModelSpec):
        if model.kind == "brownian":
            return BrownianDriver(model.m)
        return JumpDriver(self.intensity, MarkDistribution.from_config(self.marks))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d


@dataclass(frozen=True)
class LevelResult:
    N: int
    dt: float
    p: float
    paths: int
    divergent: int
    error_p: float
    error_root: float
    stderr: float  # of error_root, by the delta method from the batch-means error of error_p

    @property
    def usable(self) -> bool:
        return self.divergent < self.paths


@dataclass(frozen=True)
class RateReport:
    kind: str
    p: float
    levels: list
    slope: float
    slope_stderr: float
    theoretical_order: Optional[float]
    theta: Optional[float] = None
    alpha: Optional[float] = None
    seed: int = 0


def theoretical_order(kind: str, p: float, tau: float, T: float, theta=None, alpha=None):
    """Order of ``error_root`` guaranteed by the strong-error bounds.

    Brownian: 1/2.  Jump: ``1 / ((1 + theta)^([T/tau] (1 + alpha)) p)``,
    available only when both ``theta`` and ``alpha`` are given.
    """
    if kind == "brownian":
        return 0.5
    if theta is None or alpha is None:
        return None
    return 1.0 / ((1 + theta) ** (math.floor(T / tau) * (1 + alpha)) * p)


def fit_order(levels: Sequence[tuple]) -> tuple[float, float]:
    """Least-squares slope of ``log2(error)`` against ``log2(dt)``.

    ``levels`` holds ``(dt, error, stderr)`` triples; the stderr is carried
    for the caller's benefit and does not weight the fit.
    """
    if len(levels) < 3:
        raise SlopeFitError(f"need at least 3 levels to fit an order, got {len(levels)}")
    dt = np.array([lv[0] for lv in levels], dtype=float)
    err = np.array([lv[1] for lv in levels], dtype=float)
    if np.any(~(err > 0)) or np.any(~(dt > 0)):
        raise SlopeFitError("errors and step sizes must be positive to fit an order")
    fit = stats.linregress(np.log2(dt), np.log2(err))
    return float(fit.slope), float(fit.stderr)


def _sup_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.max(np.sqrt(np.sum((a - b) ** 2, axis=-1)), axis=-1)


def level_sup_errors(model, xi, ref_grid, level_Ns, driver, seed, rows):
    """Per-path ``sup_k |X_ref - Y|`` for each level; NaN marks a divergent path.

    Returns an array of shape ``(len(level_Ns), len(rows))``.
    """
    noise = driver.sample(ref_grid, seed, rows)
    ref = simulate_paths(model, xi, ref_grid, noise)
    out = np.empty((len(level_Ns), len(rows)))
    for i, n in enumerate(level_Ns):
        factor = ref_grid.N // n
        grid = ref_grid.coarsen(factor)
        coarse = simulate_paths(model, xi, grid, noise.aggregate(factor))
        with np.errstate(invalid="ignore", over="ignore"):
            sup = _sup_distance(ref.values[:, ::factor], coarse.values)
        sup[ref.divergent | coarse.divergent] = np.nan
        out[i] = sup
    return out


def estimate_levels(plan: ExperimentPlan, workers: int = 1) -> list[LevelResult]:
    """Per-level strong errors, sorted by ``dt`` descending."""
    model = plan.build_model()
    xi = plan.build_initial()
    driver = plan.build_driver(model)
    ref_grid = make_grid(plan.tau, plan.T, plan.n_ref)

    def work(rows):
        return level_sup_errors(model, xi, ref_grid, plan.levels, driver, plan.seed, rows)

    sups = ordered_map(work, batch_ranges(plan.paths, plan.batches), workers)
    results = []
    for i in sorted(range(len(plan.levels)), key=lambda i: plan.levels[i]):
        n = plan.levels[i]
        per_batch = [s[i] for s in sups]
        flat = np.concatenate(per_batch)
        ok = np.isfinite(flat)
        if ok.any():
            error_p = float(np.mean(flat[ok] ** plan.p))
            batch_means = np.array([
                np.mean(b[np.isfinite(b)] ** plan.p) if np.isfinite(b).any() else np.nan
                for b in per_batch
            ])
            se_p = batch_stderr(batch_means)
            root = error_p ** (1 / plan.p)
            se_root = se_p * root / (plan.p * error_p) if error_p > 0 else 0.0
        else:
            error_p = root = se_root = float("nan")
        results.append(LevelResult(n, plan.tau / n, plan.p, plan.paths, int((~ok).sum()), error_p, root, se_root))
    return results


def fit_levels(levels: Sequence[LevelResult]) -> tuple[float, float]:
    usable = [lv for lv in levels if lv.usable]
    return fit_order([(lv.dt, lv.error_root, lv.stderr) for lv in usable])


def run_convergence(plan: ExperimentPlan, workers: int = 1) -> RateReport:
    """Coupled strong-error estimates per level and the fitted order.

    Raises ``SlopeFitError`` when fewer than three levels have usable paths.
    """
    levels = estimate_levels(plan, workers)
    slope, slope_se = fit_levels(levels)
    kind = plan.build_model().kind
    return RateReport(
        kind=kind,
        p=plan.p,
        levels=levels,
        slope=slope,
        slope_stderr=slope_se,
        theoretical_order=theoretical_order(kind, plan.p, plan.tau, plan.T, plan.theta, plan.alpha),
        theta=plan.theta,
        alpha=plan.alpha,
        seed=plan.seed,
    )


def moment_sup_check(
    model: ModelSpec,
    xi: InitialSegment,
    grid: TimeGrid,
    driver,
    p: float,
    paths: int,
    seed: int = 0,
    batches: int = MIN_BATCHES,
    workers: int = 1,
) -> MomentEstimate:
    """Estimate ``E sup_k |Y(t_k)|^p``; divergent paths are counted, not fatal."""
    if p < 2:
        raise ValueError("p must be at least 2")

    def work(rows):
        batch = simulate_paths(model, xi, grid, driver.sample(grid, seed, rows))
        sup = np.max(np.sqrt(np.sum(batch.values**2, axis=-1)), axis=-1)
        return sup[~batch.divergent] ** p

    parts = ordered_map(work, batch_ranges(paths, batches), workers)
    flat = np.concatenate(parts)
    if flat.size == 0:
        return MomentEstimate(grid.dt, p, float("nan"), float("nan"), paths, paths)
    means = np.array([np.mean(v) if v.size else np.nan for v in parts])
    return MomentEstimate(grid.dt, p, float(np.mean(flat)), batch_stderr(means), paths, paths - flat.size)
