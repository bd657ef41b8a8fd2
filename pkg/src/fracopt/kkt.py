"""Optimality checks at a candidate control: multiplier, critical cone, second-order tests.

The multiplier is ``e = L_u - phi`` and nodes are classified as lower-active,
upper-active or inactive. Second-order conditions are probed on randomly
sampled critical directions ``(z_v, v)``: these respect the sign pattern on
the active sets and vanish wherever ``e != 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .optimize import ControlProblem, linearized_state, reduced_gradient, stationarity_residual

__all__ = [
    "LOWER",
    "INACTIVE",
    "UPPER",
    "Multiplier",
    "ActiveSets",
    "CriticalDirection",
    "ConeSample",
    "SONCReport",
    "GrowthReport",
    "KKTReport",
    "extract_multiplier",
    "complementarity_violation",
    "sample_critical_cone",
    "check_critical_direction",
    "quadratic_form",
    "check_sonc",
    "check_ssc_growth",
    "kkt_report",
]

log = logging.getLogger(__name__)

LOWER, INACTIVE, UPPER = -1, 0, 1


@dataclass(frozen=True)
class Multiplier:
    e: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class ActiveSets:
    labels: np.ndarray  # int8, values in {LOWER, INACTIVE, UPPER}
    tol_a: float

    @property
    def lower(self) -> np.ndarray:
        return self.labels == LOWER

    @property
    def upper(self) -> np.ndarray:
        return self.labels == UPPER

    @property
    def inactive(self) -> np.ndarray:
        return self.labels == INACTIVE

    def counts(self) -> dict:
        return dict(lower=int(self.lower.sum()), upper=int(self.upper.sum()),
                    inactive=int(self.inactive.sum()))


@dataclass(frozen=True)
class CriticalDirection:
    v: np.ndarray
    z: np.ndarray


@dataclass
class ConeSample:
    """Sampled critical directions; ``note`` explains an empty sample."""

    directions: list[CriticalDirection] = field(default_factory=list)
    note: str | None = None

    def __len__(self):
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)

    def __getitem__(self, i):
        return self.directions[i]


@dataclass(frozen=True)
class SONCReport:
    status: str
    passed: bool
    min_quadratic_form: float
    samples: int
    values: tuple[float, ...] = ()
    note: str | None = None


@dataclass(frozen=True)
class GrowthReport:
    status: str
    passed: bool
    rho: float
    worst_radius: float
    worst_trial: int
    per_radius: tuple[tuple[float, float], ...] = ()
    note: str | None = None


@dataclass(frozen=True)
class KKTReport:
    stationarity_residual: float
    complementarity_violation: float
    cone_samples_tested: int
    min_quadratic_form: float
    ssc_gamma_bound: float
    growth_check: str
    sonc_check: str
    adjoint_gap: float
    active_lower: int
    active_upper: int
    inactive: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            lines.append(f"{k} = {v:.17g}" if isinstance(v, float) else f"{k} = {v}")
        return "\n".join(lines) + "\n"


def extract_multiplier(u, problem: ControlProblem, tol_a: float | None = None,
                       adjoint: str = "transpose") -> tuple[Multiplier, ActiveSets]:
    """``e = L_u - phi`` and the active-set partition of the nodes.

    ``adjoint="transpose"`` gives the multiplier of the discrete problem
    (the one the optimizer drives to stationarity); ``"reversal"`` uses the
    discretised continuous adjoint.
    """
    u = problem.check(u)
    a, b = problem.bounds.a, problem.bounds.b
    tol_a = 1e-8 * (b - a) if tol_a is None else float(tol_a)
    if tol_a < 0:
        raise DomainError("tol_a must be non-negative")
    viol = float(max(np.max(a - u), np.max(u - b), 0.0))
    if viol > tol_a:
        raise DomainError(f"control violates the bounds by {viol:.3e} (tolerance {tol_a:.3e})")
    g, _, phi = reduced_gradient(u, problem, adjoint=adjoint, return_all=True)
    labels = np.zeros(u.shape, dtype=np.int8)
    labels[np.abs(u - a) <= tol_a] = LOWER
    labels[np.abs(u - b) <= tol_a] = UPPER
    return Multiplier(g, phi.values), ActiveSets(labels, tol_a)


def complementarity_violation(mult: Multiplier, active: ActiveSets, problem: ControlProblem) -> float:
    """Quadrature of the sign violations of ``e``: ``e >= 0`` on the lower set,
    ``e <= 0`` on the upper set, ``e = 0`` elsewhere."""
    e = mult.e
    pen = np.where(active.lower, np.maximum(0.0, -e), 0.0)
    pen += np.where(active.upper, np.maximum(0.0, e), 0.0)
    pen += np.where(active.inactive, np.abs(e), 0.0)
    return float(np.sum(problem.weights * pen))


def _e_tol(e: np.ndarray) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(e))))


def _smooth_field(shape, rng) -> np.ndarray:
    n, dof = shape
    t = np.linspace(0.0, 1.0, n)[:, None]
    x = (np.arange(dof) + 1.0) / (dof + 1.0)
    kt, kx = rng.integers(1, 5, 2)
    return np.cos(kt * math.pi * t + rng.uniform(0, math.pi)) * np.sin(kx * math.pi * x)[None, :]


def sample_critical_cone(u, problem: ControlProblem, active: ActiveSets, mult: Multiplier,
                         count: int, rng=None, tol_e: float | None = None) -> ConeSample:
    """Random critical directions at ``u``.

    Directions are supported on ``{|e| <= tol_e}``, non-negative on the lower
    set and non-positive on the upper set, so ``int e v = 0``. Half are
    white noise, half smooth space-time modes; near-zero draws are dropped.
    """
    if count < 1:
        raise DomainError("count must be at least 1")
    rng = np.random.default_rng(rng)
    u = problem.check(u)
    e = mult.e
    tol_e = _e_tol(e) if tol_e is None else float(tol_e)
    support = np.abs(e) <= tol_e
    if not support.any():
        return ConeSample([], "critical cone is {0}: every node carries a nonzero multiplier")
    out = []
    for i in range(count):
        raw = rng.uniform(-1.0, 1.0, u.shape) if i % 2 == 0 else _smooth_field(u.shape, rng)
        v = np.where(support, raw, 0.0)
        v = np.where(active.lower, np.abs(v), v)
        v = np.where(active.upper, -np.abs(v), v)
        if problem.norm(v) <= 1e-12:
            continue
        out.append(CriticalDirection(v, linearized_state(problem, v).values))
    note = None if out else "all sampled directions were numerically zero"
    return ConeSample(out, note)


def check_critical_direction(d: CriticalDirection, u, problem: ControlProblem, active: ActiveSets,
                             tol_c: float = 1e-8) -> dict:
    """Independent re-check of the three cone conditions for one direction."""
    u = problem.check(u)
    y = problem.state(u)
    der = problem.derivs(y, u)
    c1 = problem.inner(der.L_y, d.z) + problem.inner(der.L_u, d.v)
    z_ref = linearized_state(problem, d.v).values
    c2 = float(np.max(np.abs(z_ref - d.z))) <= 1e-12 * max(1.0, float(np.max(np.abs(z_ref))))
    c3 = bool(np.all(d.v[active.lower] >= 0) and np.all(d.v[active.upper] <= 0))
    return dict(c1_value=c1, c1=c1 <= tol_c, c2=bool(c2), c3=c3)


def quadratic_form(d: CriticalDirection, problem: ControlProblem, u) -> float:
    """``int_Q L_yy z^2 + 2 L_yu z v + L_uu v^2`` at ``(G(u), u)``."""
    u = problem.check(u)
    if d.v.shape != u.shape or d.z.shape != u.shape:
        raise ShapeError("direction shape does not match the control")
    der = problem.derivs(problem.state(u), u)
    dens = der.L_yy * d.z**2 + 2.0 * der.L_yu * d.z * d.v + der.L_uu * d.v**2
    return float(np.sum(problem.weights * dens))


def check_sonc(u, problem: ControlProblem, count: int = 16, rng=None, tol_sonc: float = 1e-8,
               tol_stationary: float = 1e-6, sample: ConeSample | None = None) -> SONCReport:
    """Smallest ``Q[v] / ||v||^2`` over sampled critical directions; passes iff ``>= -tol_sonc``."""
    u = problem.check(u)
    res = stationarity_residual(u, reduced_gradient(u, problem), problem)
    if res > tol_stationary:
        return SONCReport("not stationary; SONC not applicable", False, math.nan, 0,
                          note=f"stationarity residual {res:.3e} exceeds {tol_stationary:.1e}")
    if sample is None:
        mult, active = extract_multiplier(u, problem)
        sample = sample_critical_cone(u, problem, active, mult, count, rng)
    if not len(sample):
        return SONCReport("PASS (empty cone)", True, math.inf, 0, note=sample.note)
    vals = tuple(quadratic_form(d, problem, u) / problem.inner(d.v, d.v) for d in sample)
    m = min(vals)
    ok = m >= -tol_sonc
    return SONCReport("PASS" if ok else "FAIL", ok, m, len(vals), vals)


def check_ssc_growth(u, problem: ControlProblem, trial_count: int = 16, radius=(1e-1, 1e-2, 1e-3),
                     rng=None) -> GrowthReport:
    """Fit the largest ``rho`` with ``f(u') - f(u) >= rho ||u' - u||^2`` on feasible
    ``u'`` drawn from ``L_inf`` balls around ``u``.

    The growth theorem behind this check only covers ``1/2 < alpha < 1`` with
    quadratic growth exponent; other orders are refused.
    """
    alpha = problem.frac.alpha
    if alpha <= 0.5:
        return GrowthReport("refused", False, math.nan, math.nan, -1,
                            note=f"alpha = {alpha} <= 1/2: quadratic growth from second-order "
                                 "sufficiency is not available for this order")
    if problem.cost.p != 2:
        return GrowthReport("refused", False, math.nan, math.nan, -1,
                            note=f"p = {problem.cost.p}: the growth check covers p = 2 only")
    if problem.cost.uu_lower_bound <= 0:
        return GrowthReport("refused", False, math.nan, math.nan, -1, note="L_uu is not bounded below")
    rng = np.random.default_rng(rng)
    u = problem.check(u)
    f0 = problem.objective(u)
    radii = np.atleast_1d(np.asarray(radius, dtype=float))
    best = (math.inf, math.nan, -1)
    per = []
    for r in radii:
        rmin = math.inf
        for i in range(trial_count):
            up = np.clip(u + r * rng.uniform(-1.0, 1.0, u.shape), problem.bounds.a, problem.bounds.b)
            d2 = problem.inner(up - u, up - u)
            if d2 <= 0:
                continue
            rho = (problem.objective(up) - f0) / d2
            rmin = min(rmin, rho)
            if rho < best[0]:
                best = (rho, float(r), i)
        per.append((float(r), rmin))
    rho = best[0]
    ok = math.isfinite(rho) and rho > 0
    return GrowthReport("PASS" if ok else "FAIL", ok, rho, best[1], best[2], tuple(per))


def kkt_report(u, problem: ControlProblem, count: int = 16, trial_count: int = 16,
               radius=(1e-1, 1e-2, 1e-3), rng=None) -> tuple[KKTReport, SONCReport, GrowthReport]:
    rng = np.random.default_rng(rng)
    u = problem.check(u)
    mult, active = extract_multiplier(u, problem)
    res = stationarity_residual(u, mult.e, problem)
    comp = complementarity_violation(mult, active, problem)
    g_rev = reduced_gradient(u, problem, adjoint="reversal")
    gap = problem.norm(g_rev - mult.e)
    sample = sample_critical_cone(u, problem, active, mult, count, rng)
    sonc = check_sonc(u, problem, count, rng, sample=sample)
    growth = check_ssc_growth(u, problem, trial_count, radius, rng)
    c = active.counts()
    rep = KKTReport(res, comp, sonc.samples, float(sonc.min_quadratic_form), float(growth.rho),
                    growth.status, sonc.status, gap, c["lower"], c["upper"], c["inactive"])
    return rep, sonc, growth
