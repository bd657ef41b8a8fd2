"""Reduced-space projected gradient for ``min f(u) = psi(G(u), u)`` over ``a <= u <= b``."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .adjoint import AdjointProblem, solve_adjoint_reversal, solve_adjoint_transpose
from .cost import CostModel, eval_derivs, eval_integrand, inner_q, norm_q, quadrature_weights
from .errors import DomainError, ShapeError, SolverError
from .fracops import FracOrder, TimeMesh
from .grid import SpaceGrid
from .state import StateProblem, Trajectory, solve_state, state_operator

__all__ = [
    "ControlBounds",
    "ControlProblem",
    "OptimizeConfig",
    "IterRecord",
    "OptimizeTrace",
    "project_box",
    "reduced_gradient",
    "linearized_state",
    "stationarity_residual",
    "projected_gradient",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlBounds:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise DomainError("control bounds must be finite")
        if not self.a < self.b:
            raise DomainError(f"control bounds need a < b, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class ControlProblem:
    """Everything needed to evaluate the reduced objective of one control problem."""

    frac: FracOrder
    mesh: TimeMesh
    grid: SpaceGrid
    y0: np.ndarray
    cost: CostModel
    bounds: ControlBounds
    corrected: bool = False
    target: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        y0 = self.grid.check(self.y0, "y0")
        if y0.shape != (self.grid.dof,):
            raise ShapeError(f"y0 must have shape ({self.grid.dof},)")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "target", self.cost.target_values(self.mesh, self.grid))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.mesh.N + 1, self.grid.dof)

    @property
    def weights(self) -> np.ndarray:
        return quadrature_weights(self.mesh, self.grid)

    @property
    def measure(self) -> float:
        """``|Q_h|``, the sum of the space-time quadrature weights."""
        return self.mesh.T * self.grid.measure

    def state_problem(self, u) -> StateProblem:
        return StateProblem(self.frac, self.mesh, self.grid, self.y0, self.check(u), corrected=self.corrected)

    def check(self, u) -> np.ndarray:
        u = np.asarray(getattr(u, "values", u), dtype=float)
        if u.shape != self.shape:
            raise ShapeError(f"control shape {u.shape} does not match {self.shape}")
        return u

    def state(self, u) -> Trajectory:
        return solve_state(self.state_problem(u))

    def objective(self, u, y: Trajectory | None = None) -> float:
        u = self.check(u)
        y = self.state(u) if y is None else y
        val = float(np.sum(self.weights * eval_integrand(self.cost, y.values, u, self.target)))
        if not math.isfinite(val):
            raise SolverError("objective evaluated to a non-finite value")
        return val

    def derivs(self, y, u):
        return eval_derivs(self.cost, getattr(y, "values", y), self.check(u), self.target)

    def adjoint(self, y, u, kind: str = "transpose") -> Trajectory:
        src = self.derivs(y, u).L_y
        p = AdjointProblem(self.frac, self.mesh, self.grid, src, corrected=self.corrected)
        if kind == "transpose":
            return solve_adjoint_transpose(p)
        if kind == "reversal":
            return solve_adjoint_reversal(p)
        raise DomainError(f"unknown adjoint kind {kind!r}")

    def inner(self, a, b) -> float:
        return inner_q(a, b, self.mesh, self.grid)

    def norm(self, a) -> float:
        return norm_q(a, self.mesh, self.grid)


@dataclass(frozen=True)
class OptimizeConfig:
    max_iters: int = 200
    step0: float = 1.0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    tol_stationarity: float = 1e-8
    tol_step: float = 1e-14
    barzilai_borwein: bool = True

    def __post_init__(self):
        if self.max_iters < 1 or self.step0 <= 0 or self.tol_stationarity <= 0 or self.tol_step <= 0:
            raise DomainError("optimizer budgets, step and tolerances must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.backtrack < 1):
            raise DomainError("armijo_c and backtrack must lie in (0, 1)")


@dataclass(frozen=True)
class IterRecord:
    iter: int
    f: float
    residual: float
    step: float
    du_norm: float


@dataclass
class OptimizeTrace:
    records: list[IterRecord] = field(default_factory=list)
    converged: bool = False
    status: str = "running"

    @property
    def final(self) -> IterRecord:
        return self.records[-1]

    def f_values(self) -> np.ndarray:
        return np.array([r.f for r in self.records])

    def csv_rows(self):
        yield ("iter", "f", "residual", "step", "du_norm")
        for r in self.records:
            yield (r.iter, r.f, r.residual, r.step, r.du_norm)


def project_box(u, bounds: ControlBounds) -> np.ndarray:
    return np.clip(np.asarray(getattr(u, "values", u), dtype=float), bounds.a, bounds.b)


def reduced_gradient(u, problem: ControlProblem, adjoint: str = "transpose",
                     return_all: bool = False):
    """``L_u - phi``: the ``L2(Q)`` Riesz representative of ``f'(u)``.

    With ``adjoint="transpose"`` this is the exact gradient of the discrete
    objective; ``"reversal"`` uses the discretised continuous adjoint.
    """
    u = problem.check(u)
    y = problem.state(u)
    d = problem.derivs(y, u)
    phi = problem.adjoint(y, u, adjoint)
    g = d.L_u - phi.values
    if return_all:
        return g, y, phi
    return g


def linearized_state(problem: ControlProblem, v) -> Trajectory:
    """``z_v`` solving the linearised equation with ``z(0) = 0``; equals ``G(u + v) - G(u)``."""
    return state_operator(problem.state_problem(np.zeros(problem.shape)), problem.check(v))


def stationarity_residual(u, g, problem: ControlProblem) -> float:
    """``|| u - P(u - g) ||_Q``; zero exactly at points satisfying the variational inequality."""
    u = problem.check(u)
    return problem.norm(u - project_box(u - g, problem.bounds))


def projected_gradient(problem: ControlProblem, config: OptimizeConfig = OptimizeConfig(),
                       u0=None) -> tuple[np.ndarray, OptimizeTrace]:
    """Projected gradient with Armijo backtracking along the projection arc.

    The trial step is ``config.step0`` on the first iteration and the
    Barzilai-Borwein step afterwards (if enabled); it is then halved until
    ``f(P(u - s g)) <= f(u) + c <g, P(u - s g) - u>``.
    """
    bnd = problem.bounds
    u = project_box(np.zeros(problem.shape) if u0 is None else problem.check(u0), bnd)
    y = problem.state(u)
    f = problem.objective(u, y)
    g = reduced_gradient(u, problem)
    res = stationarity_residual(u, g, problem)
    trace = OptimizeTrace()
    trace.records.append(IterRecord(0, f, res, 0.0, 0.0))
    s_prev = config.step0
    u_old = g_old = None
    f_floor = 64.0 * np.finfo(float).eps

    for k in range(1, config.max_iters + 1):
        if res <= config.tol_stationarity:
            break
        s = config.step0
        if config.barzilai_borwein and u_old is not None:
            du, dg = u - u_old, g - g_old
            curv = problem.inner(du, dg)
            s = problem.inner(du, du) / curv if curv > 0 else s_prev
            s = min(max(s, 1e-10), 1e10)
        accepted = floor = False
        for _ in range(60):
            u_new = project_box(u - s * g, bnd)
            step = u_new - u
            pred = problem.inner(g, step)
            y_new = problem.state(u_new)
            f_new = problem.objective(u_new, y_new)
            if f_new < f and f_new <= f + config.armijo_c * pred:
                accepted = True
                break
            if -pred <= f_floor * max(abs(f), 1.0):
                # predicted decrease is below the rounding level of f
                accepted = f_new < f
                floor = not accepted
                break
            s *= config.backtrack
        if not accepted:
            trace.status = "stalled at rounding level" if floor else "line search failed"
            if not floor:
                log.warning("line search failed at iteration %d (residual %.3e)", k, res)
            break
        du_norm = problem.norm(step)
        u_old, g_old = u, g
        u, y, f, s_prev = u_new, y_new, f_new, s
        g = reduced_gradient(u, problem)
        res = stationarity_residual(u, g, problem)
        trace.records.append(IterRecord(k, f, res, s, du_norm))
        if du_norm <= config.tol_step:
            trace.status = "step below tolerance"
            break
    trace.converged = res <= config.tol_stationarity
    if trace.converged:
        trace.status = "converged"
    elif trace.status == "running":
        trace.status = "budget exhausted"
    return u, trace
