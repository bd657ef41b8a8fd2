"""Finite-difference Dirichlet Laplacian on intervals and rectangles.

Fields live on the interior nodes only (boundary values are implicitly
zero) and are stored flat, in C order for rectangles, so that a space-time
field is simply an ``(N + 1, dof)`` array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.fft import dstn, idstn
from scipy.linalg import solve_banded

from .errors import DomainError, ShapeError

__all__ = ["SpaceGrid", "EigenSystem", "apply_laplacian", "solve_shifted", "eigensystem"]


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid of ``(0, l_1) x ... x (0, l_d)`` with ``counts`` interior nodes per axis."""

    extents: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in np.atleast_1d(self.extents))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if len(extents) not in (1, 2) or len(extents) != len(counts):
            raise DomainError("grid must be 1D or 2D with one extent and one count per axis")
        if any(not math.isfinite(e) or e <= 0 for e in extents):
            raise DomainError(f"extents must be positive, got {extents}")
        if any(c < 3 for c in counts):
            raise DomainError(f"need at least 3 interior nodes per axis, got {counts}")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def interval(cls, length: float, count: int) -> "SpaceGrid":
        return cls((length,), (count,))

    @classmethod
    def rectangle(cls, lx: float, ly: float, mx: int, my: int) -> "SpaceGrid":
        return cls((lx, ly), (mx, my))

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(e / (c + 1) for e, c in zip(self.extents, self.counts))

    @property
    def dof(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        """Quadrature weight ``h_x`` (1D) or ``h_x h_y`` (2D) of one interior node."""
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        """Discrete measure of the domain, ``dof * cell_volume``."""
        return self.dof * self.cell_volume

    def axes(self) -> list[np.ndarray]:
        return [h * np.arange(1, c + 1) for h, c in zip(self.h, self.counts)]

    def coordinates(self) -> list[np.ndarray]:
        """Flat coordinate arrays of the interior nodes, one per axis."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return [m.ravel() for m in mesh]

    def inner(self, f, g) -> float:
        """Discrete L2(Omega) inner product ``h^d * sum(f g)``."""
        return float(self.cell_volume * np.dot(np.ravel(f), np.ravel(g)))

    def norm(self, f) -> float:
        return math.sqrt(self.inner(f, f))

    def check(self, f, name: str = "field") -> np.ndarray:
        arr = np.asarray(f, dtype=float)
        if arr.shape[-1:] != (self.dof,):
            raise ShapeError(f"{name} has trailing size {arr.shape[-1:]} but grid has {self.dof} dof")
        return arr

    @cached_property
    def eigenvalues_axes(self) -> list[np.ndarray]:
        out = []
        for ell, c, h in zip(self.extents, self.counts, self.h):
            k = np.arange(1, c + 1)
            out.append(4.0 / h**2 * np.sin(k * math.pi * h / (2.0 * ell)) ** 2)
        return out

    @cached_property
    def eigenvalues_grid(self) -> np.ndarray:
        """Eigenvalues of ``-Delta_h`` arranged on the mode grid (same layout as fields)."""
        lam = self.eigenvalues_axes
        if self.dim == 1:
            return lam[0]
        return lam[0][:, None] + lam[1][None, :]


@dataclass(frozen=True)
class EigenSystem:
    """Sine eigenpairs of ``-Delta_h``, sorted by eigenvalue.

    ``vectors[:, k]`` is orthonormal under :meth:`SpaceGrid.inner`;
    ``modes[k]`` holds the wave numbers of that column.
    """

    grid: SpaceGrid
    values: np.ndarray
    vectors: np.ndarray
    modes: np.ndarray

    def coefficients(self, f) -> np.ndarray:
        """Expansion coefficients ``<f, v_k>_h`` along the last axis of ``f``."""
        f = self.grid.check(f)
        return self.grid.cell_volume * f @ self.vectors

    def synthesize(self, coef) -> np.ndarray:
        return np.asarray(coef) @ self.vectors.T


def _laplacian_1d(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(f, axis, -1)
    out = -2.0 * f
    out[..., 1:] += f[..., :-1]
    out[..., :-1] += f[..., 1:]
    return np.moveaxis(out / h**2, -1, axis)


def apply_laplacian(g: SpaceGrid, f) -> np.ndarray:
    """Three-point (1D) or five-point (2D) Dirichlet Laplacian along the last axis."""
    f = g.check(f)
    lead = f.shape[:-1]
    u = f.reshape(lead + g.shape)
    out = np.zeros_like(u)
    for ax, h in enumerate(g.h):
        out += _laplacian_1d(u, h, len(lead) + ax)
    return out.reshape(f.shape)


def solve_shifted(g: SpaceGrid, sigma: float, rhs) -> np.ndarray:
    """Solve ``(sigma I - Delta_h) w = rhs``; ``rhs`` may carry leading batch axes."""
    if not (math.isfinite(sigma) and sigma > 0):
        raise DomainError(f"shift sigma must be positive, got {sigma}")
    rhs = g.check(rhs, "rhs")
    if g.dim == 1:
        h2 = g.h[0] ** 2
        m = g.dof
        ab = np.empty((3, m))
        ab[0] = -1.0 / h2
        ab[1] = sigma + 2.0 / h2
        ab[2] = -1.0 / h2
        flat = rhs.reshape(-1, m).T
        return solve_banded((1, 1), ab, flat, check_finite=False).T.reshape(rhs.shape)
    lead = rhs.shape[:-1]
    axes = tuple(range(len(lead), len(lead) + g.dim))
    r = rhs.reshape(lead + g.shape)
    coef = dstn(r, type=1, axes=axes)
    coef /= sigma + g.eigenvalues_grid
    return idstn(coef, type=1, axes=axes).reshape(rhs.shape)


def eigensystem(g: SpaceGrid) -> EigenSystem:
    """Closed-form eigenpairs of ``-Delta_h`` on ``g``."""
    basis = []
    for ell, c in zip(g.extents, g.counts):
        x = (ell / (c + 1)) * np.arange(1, c + 1)
        k = np.arange(1, c + 1)
        basis.append(math.sqrt(2.0 / ell) * np.sin(np.pi * np.outer(x, k) / ell))
    if g.dim == 1:
        vectors = basis[0]
        values = g.eigenvalues_axes[0]
        modes = np.arange(1, g.counts[0] + 1)[:, None]
    else:
        vectors = np.kron(basis[0], basis[1])
        values = g.eigenvalues_grid.ravel()
        kx, ky = np.meshgrid(np.arange(1, g.counts[0] + 1), np.arange(1, g.counts[1] + 1), indexing="ij")
        modes = np.stack([kx.ravel(), ky.ravel()], axis=1)
    order = np.argsort(values, kind="stable")
    vectors = vectors[:, order]
    # re-normalise so the Gram matrix is the identity to rounding
    vectors = vectors / np.sqrt(g.cell_volume * np.sum(vectors**2, axis=0))
    return EigenSystem(g, values[order], vectors, modes[order])
