"""Running cost ``psi(y, u) = int_Q L(t, x, y, u) dt dx`` and its integrands.

Two integrands are supported:

``tracking``
    ``L = (y - y_d)^2 / 2 + gamma u^2 / 2``
``polynomial``
    ``L = (y - y_d)^p + sum_{j=2}^{p-1} y^j + y u + sum_{i=1}^{p} u^(2i)``

Space-time integrals use trapezoidal weights in time (half weight at
``t = 0`` and ``t = T``) times the cell volume ``h^d`` in space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, ShapeError
from .fracops import TimeMesh
from .grid import SpaceGrid

__all__ = [
    "CostModel",
    "IntegrandDerivs",
    "A4Report",
    "time_weights",
    "quadrature_weights",
    "inner_q",
    "eval_cost",
    "eval_integrand",
    "eval_derivs",
    "check_A4_bounds",
]

VARIANTS = ("tracking", "polynomial")


def time_weights(mesh: TimeMesh) -> np.ndarray:
    w = np.full(mesh.N + 1, mesh.tau)
    w[0] = w[-1] = 0.5 * mesh.tau
    return w


def quadrature_weights(mesh: TimeMesh, grid: SpaceGrid) -> np.ndarray:
    """Weights of the discrete ``L2(Q)`` inner product, broadcastable to ``(N + 1, dof)``."""
    return (time_weights(mesh) * grid.cell_volume)[:, None]


def inner_q(a, b, mesh: TimeMesh, grid: SpaceGrid) -> float:
    return float(np.sum(quadrature_weights(mesh, grid) * np.asarray(a) * np.asarray(b)))


def norm_q(a, mesh: TimeMesh, grid: SpaceGrid) -> float:
    return math.sqrt(inner_q(a, a, mesh, grid))


@dataclass(frozen=True)
class IntegrandDerivs:
    L: np.ndarray
    L_y: np.ndarray
    L_u: np.ndarray
    L_yy: np.ndarray
    L_yu: np.ndarray
    L_uu: np.ndarray


@dataclass(frozen=True)
class CostModel:
    """Integrand selection plus its parameters.

    ``target`` is the desired state ``y_d``: a constant, a callable of
    ``(t, *coords)`` evaluated on the mesh, or an ``(N + 1, dof)`` array.
    """

    variant: str = "tracking"
    gamma: float = 1.0
    p: int = 2
    target: float | Callable | np.ndarray = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown integrand {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "tracking":
            if not (math.isfinite(self.gamma) and self.gamma > 0):
                raise DomainError(f"tracking cost needs gamma > 0, got {self.gamma}")
            object.__setattr__(self, "p", 2)
        else:
            if int(self.p) != self.p or self.p < 2:
                raise DomainError(f"polynomial cost needs an integer p >= 2, got {self.p}")
            object.__setattr__(self, "p", int(self.p))
        if isinstance(self.target, np.ndarray) and not np.all(np.isfinite(self.target)):
            raise DomainError("target contains non-finite values")

    @classmethod
    def tracking(cls, gamma: float, target=0.0) -> "CostModel":
        return cls("tracking", gamma=gamma, target=target)

    @classmethod
    def polynomial(cls, p: int, target=0.0) -> "CostModel":
        return cls("polynomial", p=p, target=target)

    @property
    def jointly_convex(self) -> bool:
        # for p = 2 the Hessian [[2, 1], [1, 2 + 12u^2]] is positive definite
        return self.variant == "tracking" or self.p == 2

    @property
    def convex_in_u(self) -> bool:
        return True

    @property
    def uu_lower_bound(self) -> float:
        """A constant ``Lambda`` with ``L_uu >= Lambda`` everywhere."""
        return self.gamma if self.variant == "tracking" else 2.0

    def target_values(self, mesh: TimeMesh, grid: SpaceGrid) -> np.ndarray:
        shape = (mesh.N + 1, grid.dof)
        tg = self.target
        if callable(tg):
            coords = grid.coordinates()
            t = mesh.nodes[:, None]
            vals = np.asarray(tg(t, *[c[None, :] for c in coords]), dtype=float)
            return np.broadcast_to(vals, shape).copy()
        arr = np.asarray(tg, dtype=float)
        if arr.ndim == 0:
            return np.full(shape, float(arr))
        if arr.shape != shape:
            raise ShapeError(f"target shape {arr.shape} does not match {shape}")
        return arr

    def growth_constants(self, yd_abs_max: float) -> dict:
        """Constants of the two-sided bound
        ``phi1 - a1|y|^p - b1|u|^beta1 <= L <= phi2 + a2|y|^p + b2|u|^beta2``
        valid whenever ``|y_d| <= yd_abs_max``."""
        p, yd = self.p, yd_abs_max
        if self.variant == "tracking":
            return dict(p=2, phi1=0.0, a1=0.0, b1=0.0, beta1=2.0,
                        phi2=yd**2, a2=1.0, b2=self.gamma / 2.0, beta2=2.0)
        lower_poly = 2.0 ** (p - 1) + (p - 2) + 0.5
        return dict(p=p,
                    phi1=-(2.0 ** (p - 1) * yd**p + (p - 2) + 0.5), a1=lower_poly, b1=0.5, beta1=2.0,
                    phi2=2.0 ** (p - 1) * yd**p + (p - 2) + p + 1.0, a2=lower_poly, b2=p + 0.5,
                    beta2=2.0 * p)


def eval_integrand(m: CostModel, y, u, yd) -> np.ndarray:
    y, u, yd = np.asarray(y, float), np.asarray(u, float), np.asarray(yd, float)
    if m.variant == "tracking":
        return 0.5 * (y - yd) ** 2 + 0.5 * m.gamma * u**2
    p = m.p
    out = (y - yd) ** p + y * u
    for j in range(2, p):
        out = out + y**j
    for i in range(1, p + 1):
        out = out + u ** (2 * i)
    return out


def eval_derivs(m: CostModel, y, u, yd=None) -> IntegrandDerivs:
    """Closed-form partial derivatives of the integrand, pointwise.

    ``yd`` defaults to the model's target when that is a constant.
    """
    if yd is None:
        if callable(m.target) or np.ndim(m.target) > 0:
            raise ShapeError("pass yd explicitly for a space-time target")
        yd = float(m.target)
    y, u, yd = np.broadcast_arrays(np.asarray(y, float), np.asarray(u, float), np.asarray(yd, float))
    L = eval_integrand(m, y, u, yd)
    if m.variant == "tracking":
        one = np.ones_like(y)
        return IntegrandDerivs(L, y - yd, m.gamma * u, one, 0.0 * one, m.gamma * one)
    p = m.p
    r = y - yd
    L_y = p * r ** (p - 1) + u
    L_yy = p * (p - 1) * r ** (p - 2)
    for j in range(2, p):
        L_y = L_y + j * y ** (j - 1)
        L_yy = L_yy + j * (j - 1) * y ** (j - 2)
    L_u = np.array(y, copy=True)
    L_uu = np.zeros_like(y)
    for i in range(1, p + 1):
        L_u = L_u + 2 * i * u ** (2 * i - 1)
        L_uu = L_uu + 2 * i * (2 * i - 1) * u ** (2 * i - 2)
    return IntegrandDerivs(L, L_y, L_u, L_yy, np.ones_like(y), L_uu)


def _field(v) -> np.ndarray:
    return np.asarray(getattr(v, "values", v), dtype=float)


def eval_cost(m: CostModel, y, u, mesh: TimeMesh | None = None, grid: SpaceGrid | None = None) -> float:
    """Discrete ``psi(y, u)``; ``mesh``/``grid`` default to those carried by ``y``."""
    mesh = mesh or y.mesh
    grid = grid or y.grid
    Y, U = _field(y), _field(u)
    if Y.shape != (mesh.N + 1, grid.dof) or U.shape != Y.shape:
        raise ShapeError(f"state {Y.shape} / control {U.shape} do not match the space-time mesh")
    yd = m.target_values(mesh, grid)
    return float(np.sum(quadrature_weights(mesh, grid) * eval_integrand(m, Y, U, yd)))


@dataclass(frozen=True)
class A4Report:
    satisfied: bool
    k_LM: float
    r_M: float
    lipschitz_u: float
    samples: int
    counterexample: tuple | None = None


def _r_M(m: CostModel, M: float, yd: float) -> float:
    if m.variant == "tracking":
        return abs(yd)
    p = m.p
    u_part = sum(2 * i * M ** (2 * i - 1) for i in range(1, p + 1))
    return p * 2.0 ** (p - 2) * abs(yd) ** (p - 1) + sum(range(2, p)) + 1.0 + u_part


def check_A4_bounds(m: CostModel, M: float, samples: int = 2000, rng=None,
                    yd: float | None = None, y_range: float = 1e3) -> A4Report:
    """Sample the growth and Lipschitz parts of the regularity assumption on ``L``.

    Draws ``(y, u)`` with ``|u| <= M`` and ``|y| <= y_range`` (log-uniform in
    magnitude) and reports the smallest ``k_LM`` compatible with
    ``|L_y| + |L_u| <= k_LM (|y|^(p-1) + |u|) + r_M`` and with the Lipschitz
    bound on ``L_u``. The constant is checked for stability by doubling the
    sampled ``y`` range; growth of ``k_LM`` with the range is a counterexample.
    """
    if not (math.isfinite(M) and M > 0):
        raise DomainError(f"M must be positive, got {M}")
    rng = np.random.default_rng(rng)
    if yd is None:
        yd = float(np.max(np.abs(m.target))) if not callable(m.target) else 1.0
    r_M = _r_M(m, M, yd)
    p = m.p

    def fit(yr):
        mag = np.exp(rng.uniform(math.log(1e-3), math.log(yr), samples))
        y = mag * rng.choice([-1.0, 1.0], samples)
        u = rng.uniform(-M, M, samples)
        d = eval_derivs(m, y, u, yd)
        lhs = np.abs(d.L_y) + np.abs(d.L_u)
        k = np.max(np.maximum(lhs - r_M, 0.0) / (np.abs(y) ** (p - 1) + np.abs(u)))
        i = int(np.argmax(np.maximum(lhs - r_M, 0.0) / (np.abs(y) ** (p - 1) + np.abs(u))))
        return k, (float(y[i]), float(u[i]))

    k1, _ = fit(y_range)
    k2, worst = fit(2.0 * y_range)

    y1, y2 = rng.uniform(-y_range, y_range, (2, samples))
    u1, u2 = rng.uniform(-M, M, (2, samples))
    dl = np.abs(eval_derivs(m, y1, u1, yd).L_u - eval_derivs(m, y2, u2, yd).L_u)
    lip = float(np.max(dl / (np.abs(y1 - y2) + np.abs(u1 - u2))))

    k = max(k1, k2, lip, 1e-300)
    stable = k2 <= 1.1 * max(k1, 1e-12) + 1e-12
    return A4Report(bool(stable and math.isfinite(k)), float(k), float(r_M), lip, 2 * samples,
                    None if stable else worst)
