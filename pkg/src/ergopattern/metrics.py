"""Coverage and task-division scores."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InsufficientAgentsError, UndefinedDistributionError
from .spectral import SpectralBasis

# world steps between samples of the dimple-distribution score
PERFORMANCE_CADENCE = 10


@dataclass
class MetricSeries:
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ergodic_metric: np.ndarray = field(default_factory=lambda: np.zeros(0))
    heterogeneity: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    dimple_performance: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _weighted_sq(a, b, basis: SpectralBasis) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"coefficient shapes differ: {a.shape} vs {b.shape}")
    basis.check_coeffs(a)
    return float(np.dot(basis.weights, (a - b) ** 2))


def ergodic_metric(c, phi, basis: SpectralBasis) -> float:
    """Weighted squared distance between trajectory and target coefficients."""
    return _weighted_sq(c, phi, basis)


def heterogeneity(c_i, c_j, basis: SpectralBasis) -> float:
    return _weighted_sq(c_i, c_j, basis)


def team_heterogeneity(coeffs, basis: SpectralBasis) -> float:
    """Mean pairwise heterogeneity over all unordered agent pairs."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[0]
    if n < 2:
        raise InsufficientAgentsError(f"team heterogeneity needs at least 2 agents, got {n}")
    basis.check_coeffs(coeffs)
    i, j = _pairs(n)
    return float(((coeffs[i] - coeffs[j]) ** 2 @ basis.weights).mean())


_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pairs(n: int):
    if n not in _PAIR_CACHE:
        idx = np.array(list(itertools.combinations(range(n), 2)), dtype=int).reshape(-1, 2)
        _PAIR_CACHE[n] = (idx[:, 0], idx[:, 1])
    return _PAIR_CACHE[n]


def smoothing_factors(basis: SpectralBasis, sigma: float) -> np.ndarray:
    """Per-mode attenuation of a Gaussian bump of width ``sigma`` in the cosine basis."""
    w = np.pi * basis.modes / np.asarray(basis.extents)
    return np.exp(-0.5 * sigma**2 * (w**2).sum(axis=1))


def dimple_coeffs(positions, basis: SpectralBasis, sigma: float = 0.0) -> np.ndarray:
    """Coefficients of the empirical measure placing equal mass on each dimple.

    ``positions`` is an (M, 2) array or a sequence of events with a
    ``position`` attribute. ``sigma > 0`` replaces each delta by a Gaussian.
    """
    pts = _positions(positions)
    if len(pts) == 0:
        raise UndefinedDistributionError("no dimples to build a distribution from")
    d = basis.values(pts).mean(axis=0)
    if sigma > 0:
        d = d * smoothing_factors(basis, sigma)
    return d


def _positions(events) -> np.ndarray:
    if isinstance(events, np.ndarray):
        return events.reshape(-1, 2)
    return np.array([getattr(e, "position", e) for e in events], dtype=float).reshape(-1, 2)


def performance_samples(n_steps: int, cadence: int = PERFORMANCE_CADENCE) -> np.ndarray:
    """1-based world steps at which the dimple score is sampled; always includes the last."""
    if n_steps <= 0:
        return np.zeros(0, dtype=int)
    steps = np.arange(cadence, n_steps + 1, cadence)
    if steps.size == 0 or steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


def dimple_performance_series(dimple_steps, dimple_positions, n_steps, phi, basis: SpectralBasis,
                              sigma: float = 0.0, cadence: int = PERFORMANCE_CADENCE):
    """Dimple-distribution ergodic metric at each sample step holding at least one dimple.

    ``dimple_steps`` are the 1-based world steps at which each dimple landed.
    Returns (sample_steps, values).
    """
    dimple_steps = np.asarray(dimple_steps, dtype=int)
    pts = np.asarray(dimple_positions, dtype=float).reshape(-1, 2)
    order = np.argsort(dimple_steps, kind="stable")
    dimple_steps, pts = dimple_steps[order], pts[order]
    F = basis.values(pts) if len(pts) else np.zeros((0, basis.size))
    csum = np.cumsum(F, axis=0)
    atten = smoothing_factors(basis, sigma) if sigma > 0 else 1.0
    samples = performance_samples(n_steps, cadence)
    m = np.searchsorted(dimple_steps, samples, side="right")
    keep = m > 0
    samples, m = samples[keep], m[keep]
    if not len(m):
        return samples.astype(int), np.zeros(0)
    d = csum[m - 1] / m[:, None] * atten
    basis.check_coeffs(d)
    return samples.astype(int), ((d - phi) ** 2) @ basis.weights


def trial_performance(record, phi, basis: SpectralBasis, sigma: float = 0.0,
                      cadence: int = PERFORMANCE_CADENCE) -> float:
    """Time-averaged ergodic metric of the dimples laid so far.

    ``record`` is a TrialRecord; samples taken before the first dimple are skipped.
    """
    steps = [e.step for e in record.dimples]
    pts = [e.position for e in record.dimples]
    if not steps:
        raise UndefinedDistributionError("trial produced no dimples")
    _, vals = dimple_performance_series(steps, pts, record.n_steps, phi, basis, sigma, cadence)
    return float(vals.mean())
