"""Coefficient models for delay equations and statistical checks of their bounds.

A model bundles vectorised coefficient functions with the growth metadata its
author claims for them: Lipschitz constants ``L1..L3`` for the current state,
delay moduli ``V1..V3`` for the delayed state, and growth constants
``K_i``/``q_i`` bounding ``V_i(x, y) <= K_i (1 + |x|^q_i + |y|^q_i)``.
``validate_conditions`` tries to falsify those claims by sampling.

Coefficient call conventions (leading batch axes are allowed everywhere)::

    drift(x, y)      (..., n), (..., n) -> (..., n)
    diffusion(x, y)  (..., n), (..., n) -> (..., n, m)
    jump_gain(x, y)  (..., n), (..., n) -> (..., n)   # h(x, y, u) = jump_gain(x, y) * u
    V_i(x, y)        (..., n), (..., n) -> (...)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .time_grid import TimeGrid

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]

RATIO_TOLERANCE = 1e-12


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def _hs_norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def _zero_modulus(x, y):
    return np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])


@dataclass(frozen=True)
class ModelSpec:
    """Drift plus exactly one of a diffusion or a mark-separable jump gain."""

    name: str
    n: int
    m: int
    drift: Coefficient
    diffusion: Optional[Coefficient] = None
    jump_gain: Optional[Coefficient] = None
    L1: float = 0.0
    L2: float = 0.0
    L3: float = 0.0
    K1: float = 0.0
    K2: float = 0.0
    K3: float = 0.0
    q1: float = 1.0
    q2: float = 1.0
    q3: float = 1.0
    V1: Coefficient = _zero_modulus
    V2: Coefficient = _zero_modulus
    V3: Coefficient = _zero_modulus
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if (self.diffusion is None) == (self.jump_gain is None):
            raise ValueError("a model needs exactly one of diffusion or jump_gain")
        if self.jump_gain is not None and self.m != 0:
            raise ValueError("pure-jump models have Brownian dimension m = 0")
        if self.diffusion is not None and self.m < 1:
            raise ValueError("Brownian models need m >= 1")
        for name in ("L1", "L2", "L3", "K1", "K2", "K3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("q1", "q2", "q3"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    @property
    def kind(self) -> str:
        return "brownian" if self.diffusion is not None else "jump"


@dataclass(frozen=True)
class InitialSegment:
    """Deterministic bounded initial path ``xi`` on ``[-tau, 0]``."""

    xi: Callable[[float], np.ndarray]
    n: int
    bound: float
    description: str = "custom"

    @classmethod
    def constant(cls, value) -> "InitialSegment":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(lambda theta: v.copy(), v.size, float(_norm(v)), f"constant {v.tolist()}")

    @classmethod
    def affine(cls, value, slope, tau: float) -> "InitialSegment":
        """``xi(theta) = value + slope * theta``; ``tau`` fixes the sup-norm bound."""
        v = np.atleast_1d(np.asarray(value, dtype=float))
        s = np.broadcast_to(np.asarray(slope, dtype=float), v.shape).copy()
        bound = max(float(_norm(v)), float(_norm(v - s * tau)))
        return cls(lambda theta: v + s * theta, v.size, bound, f"affine {v.tolist()} + {s.tolist()} theta")

    def on_grid(self, grid: TimeGrid) -> np.ndarray:
        """Values at ``-tau, -tau + dt, ..., 0`` as an ``(N + 1, n)`` array."""
        hist = np.array([np.atleast_1d(self.xi(t)) for t in grid.history_times()], dtype=float)
        if hist.shape != (grid.N + 1, self.n):
            raise ValueError(f"initial segment returned shape {hist.shape[1:]}, expected ({self.n},)")
        if not np.all(np.isfinite(hist)):
            raise ValueError("initial segment is not finite on the grid")
        if np.max(_norm(hist)) > self.bound * (1 + 1e-12) + 1e-300:
            raise ValueError("initial segment exceeds its declared bound")
        return hist


# -- shipped models ------------------------------------------------------------


def cubic_delay_model(a: float, b: float, c: float) -> ModelSpec:
    """``dX = (a X(t) + b X(t - tau)^3) dt + c X(t - tau)^2 dW`` on the real line."""
    a, b, c = float(a), float(b), float(c)

    def drift(x, y):
        return a * x + b * (y * y * y)

    def diffusion(x, y):
        return (c * (y * y))[..., None]

    def V1(x, y):
        return 1.5 * abs(b) * (np.sum(x * x, axis=-1) + np.sum(y * y, axis=-1))

    def V2(x, y):
        return abs(c) * (_norm(x) + _norm(y))

    return ModelSpec(
        name="cubic_delay",
        n=1,
        m=1,
        drift=drift,
        diffusion=diffusion,
        L1=abs(a),
        L2=0.0,
        K1=1.5 * abs(b),
        K2=abs(c),
        q1=2.0,
        q2=2.0,
        V1=V1,
        V2=V2,
        params={"a": a, "b": b, "c": c},
    )


def _signed_power(y, q):
    if float(q).is_integer():
        return np.power(y, int(q))
    return np.sign(y) * np.abs(y) ** q


def power_delay_jump_model(theta: float, q: float, a: float = 0.0) -> ModelSpec:
    """Pure-jump model ``h(x, y, u) = theta * y^q * u`` with linear drift ``a x``.

    For non-integer ``q`` the power is extended oddly, ``sign(y) |y|^q``.  The
    delay modulus comes from the mean value theorem,
    ``V3(x, y) = |theta| q max(|x|, |y|)^(q - 1)``.
    """
    theta, q, a = float(theta), float(q), float(a)
    if q < 1:
        raise ValueError(f"power q must be at least 1, got {q}")

    def drift(x, y):
        return a * x

    def jump_gain(x, y):
        return theta * _signed_power(y, q)

    def V3(x, y):
        return abs(theta) * q * np.maximum(_norm(x), _norm(y)) ** (q - 1)

    return ModelSpec(
        name="power_delay_jump",
        n=1,
        m=0,
        drift=drift,
        jump_gain=jump_gain,
        L1=abs(a),
        L3=0.0,
        K3=abs(theta) * q,
        q3=q - 1 if q >= 2 else 1.0,
        V3=V3,
        params={"theta": theta, "q": q, "a": a},
    )


MODELS = {
    "cubic_delay": cubic_delay_model,
    "power_delay_jump": power_delay_jump_model,
}


def build_model(name: str, params: dict | None = None) -> ModelSpec:
    """Look up a shipped model by name.

    ``v1_scale``/``v2_scale``/``v3_scale`` multiply the declared delay moduli,
    which lets a config declare deliberately wrong metadata for validation runs.
    """
    params = dict(params or {})
    scales = {k: float(params.pop(f"{k.lower()}_scale")) for k in ("V1", "V2", "V3") if f"{k.lower()}_scale" in params}
    if name == "zero":
        model = cubic_delay_model(0.0, 0.0, 0.0)
    elif name in MODELS:
        model = MODELS[name](**params)
    else:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS) + ['zero']}")
    if scales:
        overrides = {}
        for key, s in scales.items():
            base = getattr(model, key)
            overrides[key] = lambda x, y, base=base, s=s: s * base(x, y)
        model = dataclasses.replace(model, **overrides)
    return model


def build_initial(cfg: dict, tau: float) -> InitialSegment:
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        return InitialSegment.constant(cfg["value"])
    if kind == "affine":
        return InitialSegment.affine(cfg["value"], cfg["slope"], tau)
    raise ValueError(f"unknown initial segment kind {kind!r}")


# -- condition validation ------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    samples: int
    max_ratio: float

    @property
    def passed(self) -> bool:
        return bool(self.max_ratio <= 1 + RATIO_TOLERANCE)


@dataclass
class ValidationReport:
    model: str
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "samples": c.samples, "max_ratio": c.max_ratio, "passed": c.passed}
                for c in self.checks
            ],
        }


def stratified_normal_sampler(scales=(0.5, 2.0, 8.0)):
    """Quadruples ``(x1, y1, x2, y2)`` of i.i.d. ``Normal(0, s^2)`` coordinates.

    Trial ``i`` uses scale ``scales[i % len(scales)]``.
    """

    def sample(rng: np.random.Generator, trials: int, n: int):
        s = np.asarray(scales, dtype=float)[np.arange(trials) % len(scales)]
        z = rng.standard_normal((4, trials, n)) * s[None, :, None]
        return z[0], z[1], z[2], z[3]

    return sample


# lhs of a Lipschitz-type check is a difference f1 - f2 of computed values; its
# rounding error is a few ulps of |f1| + |f2|, which the rhs is allowed to absorb
ROUNDING_SLACK = 4 * np.finfo(float).eps


def _ratio(lhs, rhs) -> float:
    lhs, rhs = np.broadcast_arrays(np.asarray(lhs, float), np.asarray(rhs, float))
    r = np.zeros(lhs.shape)
    pos = rhs > 0
    r[pos] = lhs[pos] / rhs[pos]
    r[~pos & (lhs > 0)] = np.inf
    return float(r.max()) if r.size else 0.0


def validate_conditions(
    model: ModelSpec, sampler=None, trials: int = 10_000, seed: int = 0
) -> ValidationReport:
    """Largest observed ``lhs / rhs`` for each declared inequality.

    Checked: the Lipschitz-type conditions on drift, diffusion (Hilbert-Schmidt
    norm) or jump gain; the polynomial growth of each relevant ``V_i``; and the
    polynomial growth of each coefficient implied by them, with constant
    ``max(|f(0, 0)|, L_i, K_i)``.  A check passes iff its ratio is at most
    ``1 + 1e-12``.  The Lipschitz-type right-hand sides carry a rounding
    allowance of ``4 eps (|f1| + |f2|)``, because ``f1 - f2`` cancels when the
    sampled points nearly coincide.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    sampler = sampler or stratified_normal_sampler()
    x1, y1, x2, y2 = sampler(np.random.default_rng(seed), trials, model.n)
    dx, dy = _norm(x1 - x2), _norm(y1 - y2)
    zero = np.zeros((1, model.n))

    def growth(V, K, q):
        # V is probed on both (x, y) and (y1, y2) pairs
        a = np.concatenate([x1, y1])
        b = np.concatenate([y1, y2])
        return _ratio(V(a, b), K * (1 + _norm(a) ** q + _norm(b) ** q))

    def implied(fn, f_norm, L, K, q):
        C = max(float(f_norm(fn(zero, zero))[0]), L, K)
        rhs = C * (1 + _norm(x1) + _norm(y1) + _norm(y1) ** (q + 1))
        return _ratio(f_norm(fn(x1, y1)), rhs)

    def lipschitz(fn, f_norm, L, V):
        f1, f2 = fn(x1, y1), fn(x2, y2)
        slack = ROUNDING_SLACK * (f_norm(f1) + f_norm(f2))
        return _ratio(f_norm(f1 - f2), L * dx + V(y1, y2) * dy + slack)

    checks = []
    checks.append(CheckResult("A1", trials, lipschitz(model.drift, _norm, model.L1, model.V1)))
    checks.append(CheckResult("V1_growth", 2 * trials, growth(model.V1, model.K1, model.q1)))
    checks.append(CheckResult("drift_growth", trials, implied(model.drift, _norm, model.L1, model.K1, model.q1)))
    if model.diffusion is not None:
        s = model.diffusion
        checks.append(CheckResult("A2", trials, lipschitz(s, _hs_norm, model.L2, model.V2)))
        checks.append(CheckResult("V2_growth", 2 * trials, growth(model.V2, model.K2, model.q2)))
        checks.append(CheckResult("diffusion_growth", trials, implied(s, _hs_norm, model.L2, model.K2, model.q2)))
    else:
        g = model.jump_gain
        # h = g * u, so the |u| factor cancels on both sides
        checks.append(CheckResult("A4", trials, lipschitz(g, _norm, model.L3, model.V3)))
        checks.append(CheckResult("V3_growth", 2 * trials, growth(model.V3, model.K3, model.q3)))
        checks.append(CheckResult("jump_gain_growth", trials, implied(g, _norm, model.L3, model.K3, model.q3)))
    return ValidationReport(model.name, checks)
