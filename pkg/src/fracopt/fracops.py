r"""Fractional calculus on uniform time meshes.

Sequences are numpy arrays whose leading axis runs over the time nodes
``t_0 .. t_N``; any trailing axes (e.g. spatial degrees of freedom) are
carried along untouched, so every operator here also acts on space-time
fields.

The left Caputo derivative uses the L1 scheme

.. math::

    \frac{d^\alpha f}{dt^\alpha}(t_n) \approx \frac{\tau^{-\alpha}}{\Gamma(2-\alpha)}
        \sum_{k=0}^{n-1} b_k \bigl(f(t_{n-k}) - f(t_{n-k-1})\bigr),
    \qquad b_k = (k+1)^{1-\alpha} - k^{1-\alpha},

and Riemann-Liouville integrals use product trapezoidal quadrature (the
kernel is integrated exactly against the piecewise-linear interpolant).
Right-sided operators are obtained by reversing time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gamma as _sp_gamma

from . import _mittag_leffler
from .errors import DomainError, ShapeError

__all__ = [
    "TimeMesh",
    "FracOrder",
    "gamma",
    "mittag_leffler",
    "kernel_k",
    "rl_integral_left",
    "rl_integral_right",
    "caputo_left",
    "caputo_right",
    "l1_weights",
]


@dataclass(frozen=True)
class TimeMesh:
    """Uniform mesh ``t_n = n * tau`` of ``[0, T]`` with ``N`` steps."""

    T: float
    N: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise DomainError(f"horizon T must be positive and finite, got {self.T}")
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"step count N must be an integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.tau
        t[-1] = self.T
        return t

    def refine(self, factor: int = 2) -> "TimeMesh":
        return TimeMesh(self.T, self.N * factor)


def l1_weights(alpha: float, n: int) -> np.ndarray:
    """``b_k = (k+1)^(1-alpha) - k^(1-alpha)`` for ``k = 0 .. n-1``."""
    k = np.arange(n, dtype=float)
    return (k + 1.0) ** (1.0 - alpha) - k ** (1.0 - alpha)


@dataclass(frozen=True)
class FracOrder:
    """Fractional order ``alpha`` with the L1 weights for an ``N``-step mesh.

    ``alpha = 1`` is accepted only with ``classical=True``; the weights then
    collapse to ``(1, 0, 0, ...)`` and the L1 scheme becomes backward Euler.
    """

    alpha: float
    N: int
    classical: bool = False
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = self.alpha
        if not math.isfinite(a) or a <= 0.0 or a > 1.0:
            raise DomainError(f"fractional order must lie in (0, 1], got {a}")
        if a == 1.0 and not self.classical:
            raise DomainError("alpha = 1 requires the classical-limit mode (classical=True)")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        w = l1_weights(a, int(self.N))
        w[0] = 1.0
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def for_mesh(cls, alpha: float, mesh: TimeMesh) -> "FracOrder":
        return cls(alpha, mesh.N, classical=(alpha == 1.0))

    def sigma(self, tau: float) -> float:
        """Diagonal coefficient ``tau^(-alpha) / Gamma(2 - alpha)`` of the L1 scheme."""
        return tau ** (-self.alpha) / math.gamma(2.0 - self.alpha)


def gamma(x):
    """Gamma function for positive real arguments (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("gamma is only defined here for finite x > 0")
    if arr.ndim == 0:
        return math.gamma(float(arr))
    return _sp_gamma(arr)


def mittag_leffler(alpha: float, beta: float, z):
    r"""Two-parameter Mittag-Leffler function :math:`E_{\alpha,\beta}(z)` for real ``z``.

    Accepts a scalar or an array ``z`` and returns the same shape.
    """
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not (math.isfinite(beta) and beta > 0.0):
        raise DomainError(f"beta must be positive, got {beta}")
    zz = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(zz)):
        raise DomainError("Mittag-Leffler argument must be finite")
    out = _mittag_leffler.evaluate(float(alpha), float(beta), zz.ravel()).reshape(zz.shape)
    if zz.ndim == 0:
        return float(out)
    return out


def kernel_k(alpha: float, t):
    """Weakly singular kernel ``1 / (Gamma(alpha) t^(1-alpha))``."""
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    tt = np.asarray(t, dtype=float)
    if np.any(tt <= 0) or not np.all(np.isfinite(tt)):
        raise DomainError("kernel_k is only evaluated at t > 0")
    out = tt ** (alpha - 1.0) / math.gamma(alpha)
    return float(out) if tt.ndim == 0 else out


def _as_sequence(f, mesh: TimeMesh) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0 or arr.shape[0] != mesh.N + 1:
        raise ShapeError(f"expected {mesh.N + 1} time nodes, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("sequence contains non-finite values")
    return arr


def _causal_conv(kernel: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``y[n] = sum_{k<=n} kernel[k] x[n-k]`` along axis 0."""
    n = x.shape[0]
    flat = x.reshape(n, -1)
    if n <= 512:
        # exact summation order for small problems
        mat = np.zeros((n, n))
        idx = np.arange(n)
        diff = idx[:, None] - idx[None, :]
        mask = diff >= 0
        mat[mask] = kernel[diff[mask]]
        out = mat @ flat
    else:
        out = fftconvolve(kernel[:n, None], flat, axes=0)[:n]
    return out.reshape(x.shape)


def _check_order(theta: float):
    if not (0.0 < theta <= 1.0):
        raise DomainError(f"integration order must lie in (0, 1], got {theta}")


def rl_integral_left(theta: float, f, mesh: TimeMesh) -> np.ndarray:
    r"""Left Riemann-Liouville integral :math:`I_{0+}^\theta f` at the mesh nodes."""
    _check_order(theta)
    f = _as_sequence(f, mesh)
    N = mesh.N
    n = np.arange(1, N + 1, dtype=float)
    m = np.arange(N, dtype=float)
    p = theta + 1.0
    c = (m + 1.0) ** p - 2.0 * m**p + np.abs(m - 1.0) ** p
    c[0] = 1.0
    d = (n - 1.0) ** p - (n - theta - 1.0) * n**theta
    scale = mesh.tau**theta / math.gamma(theta + 2.0)

    out = np.zeros_like(f)
    body = _causal_conv(c, f[1:])
    out[1:] = scale * (body + np.multiply.outer(d, f[0]).reshape(body.shape))
    return out


def rl_integral_right(theta: float, f, mesh: TimeMesh) -> np.ndarray:
    r"""Right Riemann-Liouville integral :math:`I_{T-}^\theta f`; zero at ``t = T``."""
    f = _as_sequence(f, mesh)
    return rl_integral_left(theta, f[::-1], mesh)[::-1].copy()


def caputo_left(frac: FracOrder, f, mesh: TimeMesh) -> np.ndarray:
    """L1 approximation of the left Caputo derivative.

    The value at ``t_0`` is undefined and returned as NaN.
    """
    f = _as_sequence(f, mesh)
    if frac.N < mesh.N:
        raise ShapeError(f"FracOrder holds {frac.N} weights but the mesh has {mesh.N} steps")
    out = np.empty_like(f)
    out[0] = np.nan
    out[1:] = frac.sigma(mesh.tau) * _causal_conv(np.asarray(frac.weights), np.diff(f, axis=0))
    return out


def caputo_right(frac: FracOrder, f, mesh: TimeMesh) -> np.ndarray:
    """Right Caputo derivative via time reversal; NaN at ``t = T``."""
    f = _as_sequence(f, mesh)
    return caputo_left(frac, f[::-1], mesh)[::-1].copy()
