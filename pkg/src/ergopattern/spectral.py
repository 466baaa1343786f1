"""Cosine basis on a rectangle, target transforms and running trajectory statistics.

Modes are ordered row-major over ``(k1, k2)``: index ``k1 * K + k2``, where
``k1`` is the horizontal (x) frequency and ``k2`` the vertical (y) one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DomainViolationError, NormalizationError

# Spatial dimension of the workspace; sets the Sobolev exponent of the weights.
NDIM = 2
MASS_TOL = 1e-9


@dataclass(frozen=True)
class SpectralBasis:
    extents: tuple[float, float] = (1.0, 1.0)
    modes_per_axis: int = 10

    def __post_init__(self):
        L1, L2 = (float(v) for v in self.extents)
        if not (L1 > 0 and L2 > 0 and np.isfinite(L1) and np.isfinite(L2)):
            raise ValueError(f"extents must be positive, got {self.extents}")
        if not 1 <= int(self.modes_per_axis) <= 32:
            raise ValueError(f"modes_per_axis must be in [1, 32], got {self.modes_per_axis}")
        object.__setattr__(self, "extents", (L1, L2))
        object.__setattr__(self, "modes_per_axis", int(self.modes_per_axis))

        K = self.modes_per_axis
        k1, k2 = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
        modes = np.stack([k1.ravel(), k2.ravel()], axis=1)
        # per-axis factor of h_k^2 is L_i for the constant mode, L_i/2 otherwise
        fx = np.where(np.arange(K) == 0, L1, L1 / 2)
        fy = np.where(np.arange(K) == 0, L2, L2 / 2)
        hk = np.sqrt(np.outer(fx, fy)).ravel()
        lam = (1.0 + np.sum(modes.astype(float) ** 2, axis=1)) ** (-(NDIM + 1) / 2)
        object.__setattr__(self, "_modes", modes)
        object.__setattr__(self, "_hk", hk)
        object.__setattr__(self, "_lam", lam)
        object.__setattr__(self, "_wx", np.pi * np.arange(K) / L1)
        object.__setattr__(self, "_wy", np.pi * np.arange(K) / L2)

    @property
    def modes(self) -> np.ndarray:
        """(M, 2) integer array of mode indices."""
        return self._modes

    @property
    def normalizers(self) -> np.ndarray:
        return self._hk

    @property
    def weights(self) -> np.ndarray:
        return self._lam

    @property
    def size(self) -> int:
        return self.modes_per_axis**2

    def mode_index(self, k) -> int:
        k1, k2 = (int(v) for v in k)
        K = self.modes_per_axis
        if not (0 <= k1 < K and 0 <= k2 < K):
            raise IndexError(f"mode {k} outside the {K}x{K} mode set")
        return k1 * K + k2

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        L = np.asarray(self.extents)
        return bool(np.all((x >= -tol) & (x <= L + tol)))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (2,) or not np.all(np.isfinite(x)) or not self.contains(x):
            raise DomainViolationError(f"point {x.tolist()} outside domain [0, {self.extents[0]}] x [0, {self.extents[1]}]")
        return x

    def check_coeffs(self, *vectors) -> None:
        for v in vectors:
            if np.shape(v)[-1] != self.size:
                raise DimensionMismatchError(f"expected {self.size} coefficients, got {np.shape(v)[-1]}")

    # Unchecked, batched evaluation. Points may lie outside the domain; the
    # cosine basis then acts as its mirror extension, which the planner relies on.
    def values(self, points) -> np.ndarray:
        """Evaluate every basis function at ``points`` of shape (..., 2) -> (..., M)."""
        p = np.asarray(points, dtype=float)
        cx = np.cos(p[..., 0, None] * self._wx)
        cy = np.cos(p[..., 1, None] * self._wy)
        out = (cx[..., :, None] * cy[..., None, :]).reshape(p.shape[:-1] + (self.size,))
        return out / self._hk

    def gradients(self, points) -> np.ndarray:
        """Spatial gradients of every basis function: (..., 2) -> (..., M, 2)."""
        p = np.asarray(points, dtype=float)
        ax = p[..., 0, None] * self._wx
        ay = p[..., 1, None] * self._wy
        cx, sx = np.cos(ax), -np.sin(ax) * self._wx
        cy, sy = np.cos(ay), -np.sin(ay) * self._wy
        shape = p.shape[:-1] + (self.size,)
        gx = (sx[..., :, None] * cy[..., None, :]).reshape(shape)
        gy = (cx[..., :, None] * sy[..., None, :]).reshape(shape)
        return np.stack([gx, gy], axis=-1) / self._hk[:, None]


def eval_basis(basis: SpectralBasis, k, x) -> float:
    """Value of basis function ``k`` at point ``x``."""
    x = basis.check_point(x)
    i = basis.mode_index(k)
    k1, k2 = basis.modes[i]
    L1, L2 = basis.extents
    return float(np.cos(k1 * np.pi * x[0] / L1) * np.cos(k2 * np.pi * x[1] / L2) / basis.normalizers[i])


def eval_basis_gradient(basis: SpectralBasis, k, x) -> np.ndarray:
    x = basis.check_point(x)
    i = basis.mode_index(k)
    k1, k2 = basis.modes[i]
    L1, L2 = basis.extents
    hk = basis.normalizers[i]
    a1, a2 = k1 * np.pi / L1, k2 * np.pi / L2
    return np.array(
        [
            -a1 / hk * np.sin(a1 * x[0]) * np.cos(a2 * x[1]),
            -a2 / hk * np.cos(a1 * x[0]) * np.sin(a2 * x[1]),
        ]
    )


@dataclass
class DensityMap:
    """Piecewise-constant density on a pixel grid.

    ``grid[r, c]`` is the density of the cell in row ``r`` counted from the TOP
    of the domain and column ``c`` counted from the left, i.e. image order.
    """

    grid: np.ndarray
    extents: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 2 or 0 in self.grid.shape:
            raise ValueError(f"density grid must be a non-empty 2D array, got shape {self.grid.shape}")
        if not np.all(np.isfinite(self.grid)) or np.any(self.grid < 0):
            raise NormalizationError("density values must be finite and nonnegative")
        self.extents = (float(self.extents[0]), float(self.extents[1]))

    @classmethod
    def from_values(cls, values, extents=(1.0, 1.0)) -> "DensityMap":
        """Build a unit-mass density from arbitrary nonnegative weights."""
        dm = cls(np.array(values, dtype=float), extents)
        mass = dm.mass
        if mass <= 0:
            raise NormalizationError("density has zero mass")
        dm.grid = dm.grid / mass
        return dm

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def cell_area(self) -> float:
        R, C = self.grid.shape
        return self.extents[0] * self.extents[1] / (R * C)

    @property
    def mass(self) -> float:
        return float(self.grid.sum() * self.cell_area)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """x coordinates of columns and y coordinates of rows (row 0 at the top)."""
        R, C = self.grid.shape
        L1, L2 = self.extents
        xs = (np.arange(C) + 0.5) * (L1 / C)
        ys = L2 - (np.arange(R) + 0.5) * (L2 / R)
        return xs, ys

    def check_normalized(self) -> None:
        if abs(self.mass - 1.0) > MASS_TOL:
            raise NormalizationError(f"density mass is {self.mass!r}, expected 1")


def transform_density(basis: SpectralBasis, density: DensityMap) -> np.ndarray:
    """Fourier coefficients of a density by midpoint quadrature over its cells."""
    if not np.allclose(density.extents, basis.extents, rtol=0, atol=1e-12):
        raise DimensionMismatchError(f"density extents {density.extents} differ from basis extents {basis.extents}")
    density.check_normalized()
    xs, ys = density.cell_centers()
    cx = np.cos(xs[:, None] * basis._wx)  # (C, K)
    cy = np.cos(ys[:, None] * basis._wy)  # (R, K)
    # phi[k1, k2] = sum_rc grid[r, c] cos(k1 pi x_c / L1) cos(k2 pi y_r / L2)
    phi = cx.T @ density.grid.T @ cy
    phi = phi.ravel() * density.cell_area / basis.normalizers
    # unit mass against the constant mode, exactly
    phi[0] = 1.0 / basis.normalizers[0]
    return phi


@dataclass
class TrajectoryStats:
    """Running time integral of basis evaluations along a trajectory.

    Keeps compensated sums so that very long runs do not lose precision.
    """

    sums: np.ndarray
    elapsed: float = 0.0
    _comp: np.ndarray = field(default=None, repr=False)
    _tcomp: float = field(default=0.0, repr=False)

    def __post_init__(self):
        self.sums = np.array(self.sums, dtype=float)
        if self._comp is None:
            self._comp = np.zeros_like(self.sums)

    @classmethod
    def empty(cls, basis: SpectralBasis) -> "TrajectoryStats":
        return cls(np.zeros(basis.size))

    @property
    def coefficients(self) -> np.ndarray:
        if self.elapsed <= 0:
            raise ValueError("trajectory statistics have no elapsed time")
        return self.sums / self.elapsed

    def add(self, values: np.ndarray, dt: float) -> None:
        """Fold pre-evaluated basis values held for ``dt`` into the sums."""
        y = values * dt - self._comp
        t = self.sums + y
        self._comp = (t - self.sums) - y
        self.sums = t
        yt = dt - self._tcomp
        tt = self.elapsed + yt
        self._tcomp = (tt - self.elapsed) - yt
        self.elapsed = tt

    def copy(self) -> "TrajectoryStats":
        return TrajectoryStats(self.sums.copy(), self.elapsed, self._comp.copy(), self._tcomp)

    @classmethod
    def pooled(cls, stats) -> "TrajectoryStats":
        """Union of several trajectories: sums and times add."""
        stats = list(stats)
        sums = np.sum([s.sums for s in stats], axis=0)
        return cls(sums, float(sum(s.elapsed for s in stats)))


def accumulate_trajectory(basis: SpectralBasis, stats: TrajectoryStats, x, dt: float) -> TrajectoryStats:
    """Add the sample ``x`` held for ``dt`` to ``stats`` in place and return it."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = basis.check_point(x)
    basis.check_coeffs(stats.sums)
    stats.add(basis.values(x), dt)
    return stats
