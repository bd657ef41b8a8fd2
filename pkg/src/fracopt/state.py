r"""Forward solvers for :math:`d^\alpha y/dt^\alpha = \Delta y + u`, ``y(0) = y0``.

:func:`solve_state` is the production path (L1 in time, finite differences
in space). :func:`spectral_oracle` is an independent construction: it
expands the data in the discrete sine eigenbasis and advances every mode
with the exact Mittag-Leffler relaxation and Duhamel formula, so the only
time-discretisation error it makes is the piecewise-linear interpolation
of the control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, SolverError
from .fracops import FracOrder, TimeMesh, mittag_leffler, rl_integral_left, _causal_conv
from .grid import SpaceGrid, apply_laplacian, eigensystem, solve_shifted

__all__ = [
    "Trajectory",
    "StateProblem",
    "solve_state",
    "spectral_oracle",
    "mild_residual",
    "state_operator",
]


@dataclass(frozen=True)
class Trajectory:
    """Space-time field sampled at every time node; ``values`` has shape ``(N + 1, dof)``."""

    values: np.ndarray
    mesh: TimeMesh
    grid: SpaceGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.N + 1, self.grid.dof):
            raise ShapeError(
                f"trajectory shape {v.shape} does not match ({self.mesh.N + 1}, {self.grid.dof})"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mesh: TimeMesh, grid: SpaceGrid) -> "Trajectory":
        return cls(np.zeros((mesh.N + 1, grid.dof)), mesh, grid)

    def at(self, n: int) -> np.ndarray:
        """Field at time node ``n`` reshaped onto the grid."""
        return self.values[n].reshape(self.grid.shape)

    def with_values(self, values) -> "Trajectory":
        return Trajectory(values, self.mesh, self.grid)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def sup_h_norm(self) -> float:
        """``max_n ||y(t_n)||_h``."""
        return float(np.sqrt(self.grid.cell_volume * np.max(np.sum(self.values**2, axis=1))))


@dataclass(frozen=True)
class StateProblem:
    """Data of one forward solve.

    ``corrected=True`` adds ``(Delta_h y0 + u0) / 2`` to the right-hand side of
    the first L1 step. This standard start-up correction restores the
    ``tau^(2 - alpha)`` rate for data that are not compatible at ``t = 0``.
    It is off by default.
    """

    frac: FracOrder
    mesh: TimeMesh
    grid: SpaceGrid
    y0: np.ndarray
    u: np.ndarray | None = None
    corrected: bool = False
    _u: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        y0 = self.grid.check(self.y0, "y0")
        if y0.shape != (self.grid.dof,):
            raise ShapeError(f"y0 must have shape ({self.grid.dof},), got {y0.shape}")
        if self.frac.N < self.mesh.N:
            raise ShapeError("FracOrder was built for a coarser mesh than the problem uses")
        if self.u is None:
            u = np.zeros((self.mesh.N + 1, self.grid.dof))
        else:
            u = np.asarray(self.u.values if isinstance(self.u, Trajectory) else self.u, dtype=float)
            if u.shape != (self.mesh.N + 1, self.grid.dof):
                raise ShapeError(f"control shape {u.shape} does not match the space-time mesh")
        if not (np.all(np.isfinite(y0)) and np.all(np.isfinite(u))):
            raise SolverError("non-finite problem data")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "_u", u)

    @property
    def control(self) -> np.ndarray:
        return self._u

    @property
    def alpha(self) -> float:
        return self.frac.alpha

    def replace(self, **changes) -> "StateProblem":
        kw = dict(frac=self.frac, mesh=self.mesh, grid=self.grid, y0=self.y0, u=self._u,
                  corrected=self.corrected)
        kw.update(changes)
        return StateProblem(**kw)


def _l1_march(frac: FracOrder, mesh: TimeMesh, grid: SpaceGrid, y0: np.ndarray,
              forcing: np.ndarray, first_extra: np.ndarray | None) -> np.ndarray:
    N = mesh.N
    b = np.asarray(frac.weights[:N])
    d = np.zeros(N)
    d[1:] = b[:-1] - b[1:]
    sigma = frac.sigma(mesh.tau)
    Y = np.empty((N + 1, grid.dof))
    Y[0] = y0
    for n in range(1, N + 1):
        hist = b[n - 1] * y0
        if n > 1:
            hist = hist + d[1:n] @ Y[n - 1:0:-1]
        rhs = forcing[n] + sigma * hist
        if n == 1 and first_extra is not None:
            rhs = rhs + first_extra
        Y[n] = solve_shifted(grid, sigma, rhs)
    if not np.all(np.isfinite(Y)):
        raise SolverError("L1 time stepping produced non-finite values")
    return Y


def solve_state(p: StateProblem) -> Trajectory:
    """L1-implicit time stepping; every step is one shifted Laplacian solve."""
    extra = None
    if p.corrected:
        extra = 0.5 * (apply_laplacian(p.grid, p.y0) + p.control[0])
    Y = _l1_march(p.frac, p.mesh, p.grid, p.y0, p.control, extra)
    return Trajectory(Y, p.mesh, p.grid)


def state_operator(p: StateProblem, v) -> Trajectory:
    """Linear part of the control-to-state map: the solve with ``y0 = 0`` and control ``v``."""
    return solve_state(p.replace(y0=np.zeros(p.grid.dof), u=np.asarray(v, dtype=float)))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def _duhamel_weights(alpha: float, lam: np.ndarray, mesh: TimeMesh) -> tuple[np.ndarray, np.ndarray]:
    """Product-quadrature weights of the Duhamel integral for piecewise-linear controls.

    Returns ``A, B`` of shape ``(len(lam), N)`` such that the forced response at
    ``t_n`` is ``sum_m A[m] u_{n-m-1} + B[m] u_{n-m}`` with ``m = 0 .. n-1``.
    """
    tau, N = mesh.tau, mesh.N
    lam = np.asarray(lam, dtype=float)[:, None]
    A = np.empty((lam.shape[0], N))
    B = np.empty_like(A)

    # first interval: exact moments of the kernel s^(a-1) E_{a,a}(-lam s^a)
    z0 = -lam[:, 0] * tau**alpha
    f1 = tau**alpha * mittag_leffler(alpha, alpha + 1.0, z0)
    f2_over_tau = tau**alpha * mittag_leffler(alpha, alpha + 2.0, z0)
    B[:, 0] = f2_over_tau
    A[:, 0] = f1 - f2_over_tau

    if N > 1:
        m = np.arange(1, N)
        s = (m[:, None] + _GL_NODES[None, :]) * tau  # (N-1, Q)
        sa = s**alpha
        kern = s ** (alpha - 1.0) * mittag_leffler(alpha, alpha, -lam[:, :, None] * sa[None])
        A[:, 1:] = tau * np.sum(kern * (_GL_WEIGHTS * _GL_NODES), axis=-1)
        B[:, 1:] = tau * np.sum(kern * (_GL_WEIGHTS * (1.0 - _GL_NODES)), axis=-1)
    return A, B


def spectral_oracle(p: StateProblem) -> Trajectory:
    """Per-eigenmode Mittag-Leffler solution on the same grid as :func:`solve_state`."""
    eig = eigensystem(p.grid)
    t = p.mesh.nodes
    a = p.alpha
    c0 = eig.coefficients(p.y0)
    cu = eig.coefficients(p.control)  # (N+1, dof)

    scale = max(np.max(np.abs(c0)), np.max(np.abs(cu)), 1e-300)
    active = np.flatnonzero((np.abs(c0) > 1e-14 * scale) | (np.max(np.abs(cu), axis=0) > 1e-14 * scale))

    coef = np.zeros((p.mesh.N + 1, eig.values.size))
    if active.size:
        lam = eig.values[active]
        ta = t**a
        relax = mittag_leffler(a, 1.0, -np.outer(ta, lam))
        coef[:, active] = relax * c0[active]
        forced = np.flatnonzero(np.max(np.abs(cu[:, active]), axis=0) > 1e-14 * scale)
        if forced.size:
            idx = active[forced]
            A, B = _duhamel_weights(a, eig.values[idx], p.mesh)
            for j, k in enumerate(idx):
                uk = cu[:, k]
                resp = np.zeros(p.mesh.N + 1)
                resp[1:] = _causal_conv(A[j], uk[:-1]) + _causal_conv(B[j], uk[1:])
                coef[:, k] += resp
    Y = eig.synthesize(coef)
    Y[0] = p.y0
    if not np.all(np.isfinite(Y)):
        raise SolverError("spectral oracle produced non-finite values")
    return Trajectory(Y, p.mesh, p.grid)


def mild_residual(frac: FracOrder, mesh: TimeMesh, grid: SpaceGrid, y, u=None) -> float:
    r"""``max_n || y_n - y_0 - I^\alpha(\Delta_h y + u)(t_n) ||_h`` for a discrete trajectory."""
    Y = np.asarray(y.values if isinstance(y, Trajectory) else y, dtype=float)
    if Y.shape != (mesh.N + 1, grid.dof):
        raise ShapeError(f"trajectory shape {Y.shape} does not match mesh/grid")
    if u is None:
        U = np.zeros_like(Y)
    else:
        U = np.asarray(u.values if isinstance(u, Trajectory) else u, dtype=float)
        if U.shape != Y.shape:
            raise ShapeError(f"control shape {U.shape} does not match trajectory {Y.shape}")
    rhs = apply_laplacian(grid, Y) + U
    res = Y - Y[0] - rl_integral_left(frac.alpha, rhs, mesh)
    return float(math.sqrt(grid.cell_volume) * np.max(np.linalg.norm(res, axis=1)))
