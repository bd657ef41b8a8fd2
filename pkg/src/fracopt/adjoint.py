r"""Adjoint solvers for :math:`\hat d^\alpha \varphi/dt^\alpha = \Delta\varphi - L_y`, ``phi(T) = 0``.

Sign convention: ``source`` is ``L_y`` itself. Cast as a forward problem in
reversed time the right-hand side is ``-L_y``, and the reduced gradient is
``L_u - phi``. Both solvers below return ``phi`` with this sign.

``solve_adjoint_reversal`` discretises the continuous adjoint equation:
substituting ``zeta(t) = phi(T - t)`` turns it into a forward problem that
:func:`~fracopt.state.solve_state` handles.

``solve_adjoint_transpose`` is the exact transpose of the discrete
control-to-state map with respect to the ``L2(Q)`` quadrature inner
product. It is what makes reduced gradients match finite differences of the
discrete objective to rounding. It satisfies ``phi(T) = 0`` only up to
``O(tau^alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import quadrature_weights
from .errors import ShapeError, SolverError
from .fracops import FracOrder, TimeMesh
from .grid import SpaceGrid, solve_shifted
from .state import StateProblem, Trajectory, solve_state

__all__ = [
    "AdjointProblem",
    "solve_adjoint_reversal",
    "solve_adjoint_transpose",
    "transpose_apply",
]


@dataclass(frozen=True)
class AdjointProblem:
    frac: FracOrder
    mesh: TimeMesh
    grid: SpaceGrid
    source: np.ndarray
    corrected: bool = False

    def __post_init__(self):
        src = np.asarray(getattr(self.source, "values", self.source), dtype=float)
        if src.shape != (self.mesh.N + 1, self.grid.dof):
            raise ShapeError(f"adjoint source shape {src.shape} does not match the space-time mesh")
        if not np.all(np.isfinite(src)):
            raise SolverError("non-finite adjoint source")
        object.__setattr__(self, "source", src)


def solve_adjoint_reversal(p: AdjointProblem) -> Trajectory:
    """Continuous adjoint via time reversal; ``phi(T) = 0`` exactly."""
    forcing = -p.source[::-1]
    fwd = StateProblem(p.frac, p.mesh, p.grid, np.zeros(p.grid.dof), forcing, corrected=p.corrected)
    zeta = solve_state(fwd).values
    return Trajectory(zeta[::-1].copy(), p.mesh, p.grid)


def transpose_apply(frac: FracOrder, mesh: TimeMesh, grid: SpaceGrid, s, corrected: bool = False) -> np.ndarray:
    """``S^* s`` for the linear map ``S: u -> solve_state(y0=0, u)``.

    The adjoint is taken in the discrete ``L2(Q)`` inner product, so
    ``<S u, s>_Q == <u, S^* s>_Q`` holds to rounding for all ``u, s``.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (mesh.N + 1, grid.dof):
        raise ShapeError(f"source shape {s.shape} does not match the space-time mesh")
    N = mesh.N
    W = quadrature_weights(mesh, grid)
    r = W * s
    b = np.asarray(frac.weights[:N])
    d = np.zeros(N)
    d[1:] = b[:-1] - b[1:]
    sigma = frac.sigma(mesh.tau)

    P = np.zeros((N + 1, grid.dof))
    for n in range(N, 0, -1):
        rhs = r[n]
        if n < N:
            rhs = rhs + sigma * (d[1:N - n + 1] @ P[n + 1:N + 1])
        P[n] = solve_shifted(grid, sigma, rhs)
    # B^T: u_n drives step n; with the start-up correction u_0 also enters step 1 with weight 1/2
    BtP = P.copy()
    BtP[0] = 0.5 * P[1] if corrected else 0.0
    if not np.all(np.isfinite(BtP)):
        raise SolverError("transposed recurrence produced non-finite values")
    return BtP / W


def solve_adjoint_transpose(p: AdjointProblem) -> Trajectory:
    """Discrete adjoint ``phi = -S^* L_y``, consistent with the discrete objective."""
    phi = -transpose_apply(p.frac, p.mesh, p.grid, p.source, corrected=p.corrected)
    return Trajectory(phi, p.mesh, p.grid)
