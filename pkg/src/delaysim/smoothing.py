"""Yamada-Watanabe smoothing of ``|x|``.

``psi`` is a bump supported on ``[eps/delta, eps]`` with unit mass and
``psi(x) <= 2 / (x ln delta)``.  It is built as a tent in the log variable

    s(x) = ln(x delta / eps) / ln(delta),     g(s) = 4 min(s, 1 - s) on [0, 1],
    psi(x) = g(s(x)) / (x ln delta),

so ``int psi dx = int g ds = 1`` and ``psi(x) x ln delta = g(s) <= 2``, with
equality at the peak ``x = eps / sqrt(delta)``.  ``phi`` integrates ``psi``
twice from 0; the inner integral is closed form and the outer one uses
Gauss-Legendre quadrature on the two smooth pieces of the support.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

GAUSS_POINTS = 64
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_POINTS)


@dataclass(frozen=True)
class SmoothingParams:
    delta: float
    epsilon: float

    def __post_init__(self):
        if not self.delta > 1:
            raise ValueError(f"delta must exceed 1, got {self.delta}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def log_delta(self) -> float:
        return float(np.log1p(self.delta - 1))

    @property
    def lower(self) -> float:
        return self.epsilon / self.delta

    @property
    def peak(self) -> float:
        return self.epsilon / np.sqrt(self.delta)

    @cached_property
    def phi_at_epsilon(self) -> float:
        return float(_phi_support(self, np.array([self.epsilon]))[0])


def _log_coordinate(params: SmoothingParams, x: np.ndarray) -> np.ndarray:
    # log1p keeps s accurate when delta is close to 1 and the support is narrow
    lo = params.lower
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log1p((x - lo) / lo) / params.log_delta


def _tent(s: np.ndarray) -> np.ndarray:
    return np.where((s >= 0) & (s <= 1), 4 * np.minimum(s, 1 - s), 0.0)


def psi_log_weight(params: SmoothingParams, x) -> np.ndarray:
    """``psi(x) * x * ln(delta)`` evaluated in closed form, i.e. the tent ``g(s(x))``."""
    x = np.asarray(x, dtype=float)
    return _tent(_log_coordinate(params, x))


def psi(params: SmoothingParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = psi_log_weight(params, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(g > 0, g / (x * params.log_delta), 0.0)


def psi_antiderivative(params: SmoothingParams, y) -> np.ndarray:
    """``int_0^y psi``, which is also ``phi'(y)``; takes values in ``[0, 1]``."""
    y = np.asarray(y, dtype=float)
    s = np.clip(_log_coordinate(params, y), 0.0, 1.0)
    return np.where(s <= 0.5, 2 * s * s, 1 - 2 * (1 - s) * (1 - s))


phi_prime = psi_antiderivative
phi_second = psi


def _gauss_integral(f, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[:, None] + half[:, None] * _NODES[None, :]
    return half * (f(pts) @ _WEIGHTS)


def _phi_support(params: SmoothingParams, x: np.ndarray) -> np.ndarray:
    # x in [eps/delta, eps]; integrate Psi over [eps/delta, x], split at the peak
    def F(y):
        return psi_antiderivative(params, y)

    lo, pk = params.lower, params.peak
    first_end = np.minimum(x, pk)
    out = _gauss_integral(F, np.full_like(x, lo), first_end)
    upper = x > pk
    if np.any(upper):
        out[upper] += _gauss_integral(F, np.full(upper.sum(), pk), x[upper])
    return out


def phi(params: SmoothingParams, x) -> np.ndarray:
    """``phi(x) = int_0^x int_0^y psi(z) dz dy`` for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    out = np.zeros_like(flat)
    inside = (flat > params.lower) & (flat <= params.epsilon)
    if np.any(inside):
        out[inside] = _phi_support(params, flat[inside])
    tail = flat > params.epsilon
    out[tail] = params.phi_at_epsilon + (flat[tail] - params.epsilon)
    return out.reshape(x.shape)


def hessian(params: SmoothingParams, x) -> np.ndarray:
    """Hessian of ``V(x) = phi(|x|)``; zero at the origin.

    ``x`` has shape ``(..., n)`` and the result ``(..., n, n)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    r = np.sqrt(np.sum(x * x, axis=-1))[..., None, None]
    d1 = phi_prime(params, r)
    d2 = phi_second(params, r)
    outer = x[..., :, None] * x[..., None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        h = d1 * (np.eye(n) * r * r - outer) / r**3 + d2 * outer / r**2
    return np.where(r > 0, h, 0.0)


def hessian_bound(params: SmoothingParams, r: float, n: int) -> float:
    """``2n (1 + 1/ln delta) / r``."""
    return 2 * n * (1 + 1 / params.log_delta) / r


@dataclass(frozen=True)
class LiftValue:
    value: float
    gradient: np.ndarray
    hessian_ok: bool


def v_lift(params: SmoothingParams, x) -> LiftValue:
    """``V(x) = phi(|x|)`` with its gradient and a Hessian-norm bound check.

    On the support ``eps/delta <= |x| <= eps`` the Hilbert-Schmidt norm of the
    Hessian is compared with ``2n (1 + 1/ln delta) / |x|``.  Outside it the
    same bound is checked without the support indicator: for ``|x| > eps`` and
    ``n >= 2`` the Hessian is ``(I - x x^T/|x|^2)/|x|``, which is not zero.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = float(np.sqrt(x @ x))
    if r == 0.0:
        return LiftValue(0.0, np.zeros_like(x), True)
    value = float(phi(params, r))
    gradient = float(phi_prime(params, r)) * x / r
    h = hessian(params, x)
    ok = bool(np.sqrt(np.sum(h * h)) <= hessian_bound(params, r, x.size))
    return LiftValue(value, gradient, ok)


# -- property report -------------------------------------------------------------


def sample_points(n: int, low: float = 1e-6, high: float = 1e2, seed: int = 0) -> np.ndarray:
    """Log-uniform samples in ``(low, high]``."""
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random(n)  # (0, 1]
    return low * (high / low) ** u


def check_properties(params: SmoothingParams, samples: int = 10_000, seed: int = 0, tol: float = 1e-9) -> dict:
    """Evaluate the smoothing inequalities on log-uniform samples.

    Returns a JSON-ready dict with one entry per inequality: the largest
    violation found (0 when none) and whether it is within tolerance.
    """
    x = sample_points(samples, seed=seed)
    ph = phi(params, x)
    d1 = phi_prime(params, x)
    w = psi_log_weight(params, x)
    ps = psi(params, x)

    # unit mass: the tent integral in s is exactly 1; check it by quadrature in x
    mass = float(_gauss_integral(lambda z: psi(params, z), np.array([params.lower]), np.array([params.peak]))[0]
                 + _gauss_integral(lambda z: psi(params, z), np.array([params.peak]), np.array([params.epsilon]))[0])

    # the lift is checked on the support, where the Hessian bound is claimed
    rng = np.random.default_rng(seed + 1)
    grad_excess, hess_excess = 0.0, 0.0
    for n in (1, 2, 3):
        r = params.lower * params.delta ** rng.random(samples)
        directions = rng.standard_normal((r.size, n))
        directions /= np.sqrt(np.sum(directions**2, axis=1, keepdims=True))
        v = r[:, None] * directions
        grad = phi_prime(params, r)[:, None] * directions
        grad_excess = max(grad_excess, float(np.max(np.sqrt(np.sum(grad * grad, axis=1)) - 1)))
        h = hessian(params, v)
        norm = np.sqrt(np.sum(h * h, axis=(1, 2)))
        hess_excess = max(hess_excess, float(np.max(norm - hessian_bound(params, r, n))))

    checks = [
        ("phi_upper", "phi(x) <= x", float(np.max(np.maximum(ph - x, 0))), tol),
        ("phi_lower", "x - eps <= phi(x)", float(np.max(np.maximum(x - params.epsilon - ph, 0))), tol),
        ("phi_prime_range", "0 <= phi'(x) <= 1", float(max(np.max(-d1), np.max(d1 - 1), 0.0)), 0.0),
        ("psi_bound", "psi(x) x ln(delta) <= 2", float(max(np.max(w - 2), 0.0)), 0.0),
        ("psi_nonnegative", "psi(x) >= 0", float(max(np.max(-ps), 0.0)), 0.0),
        ("psi_unit_mass", "int psi = 1", abs(mass - 1.0), 1e-10),
        ("gradient_bound", "|grad V| <= 1", grad_excess, 0.0),
        ("hessian_bound", "||Hess V|| <= 2n(1 + 1/ln delta)/|x| on the support", hess_excess, 0.0),
    ]
    rows = []
    for name, text, viol, t in checks:
        viol = viol if viol > 0 else 0.0
        rows.append({"name": name, "inequality": text, "max_violation": viol, "tolerance": t, "passed": viol <= t})
    report = {"delta": params.delta, "epsilon": params.epsilon, "samples": samples, "checks": rows}
    report["passed"] = all(c["passed"] for c in report["checks"])
    return report
