"""Rendered views of a trial: dimple map, per-agent trajectories, target heat map."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ImageFormatError
from .pnm import write_pgm, write_ppm
from .spectral import DensityMap


def _canvas_shape(size: int, extents) -> tuple[int, int]:
    if size < 1:
        raise ImageFormatError(f"image size must be positive, got {size}")
    L1, L2 = extents
    return max(1, int(round(size * L2 / L1))), size


def to_pixels(points, extents, shape):
    """(row, col) indices of world points; row 0 is the top of the domain."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    H, W = shape
    L1, L2 = extents
    col = np.clip(np.floor(p[:, 0] / L1 * W).astype(int), 0, W - 1)
    row = np.clip(np.floor((L2 - p[:, 1]) / L2 * H).astype(int), 0, H - 1)
    return row, col


def dimple_image(positions, extents, size: int) -> np.ndarray:
    shape = _canvas_shape(size, extents)
    img = np.zeros(shape, dtype=np.uint8)
    if len(positions):
        r, c = to_pixels(positions, extents, shape)
        img[r, c] = 255
    return img


def agent_levels(n_agents: int) -> np.ndarray:
    """Distinct, nonzero gray level per agent."""
    return np.rint(255.0 * np.arange(1, n_agents + 1) / n_agents).astype(np.uint8)


def trajectory_image(positions, extents, size: int) -> np.ndarray:
    """``positions`` is (steps, agents, 2); each agent's path drawn in its own gray level."""
    shape = _canvas_shape(size, extents)
    img = np.zeros(shape, dtype=np.uint8)
    positions = np.asarray(positions, dtype=float)
    if positions.size == 0:
        return img
    levels = agent_levels(positions.shape[1])
    for a in range(positions.shape[1]):
        path = positions[:, a]
        if len(path) > 1:
            # sample each segment densely enough to leave no pixel gaps
            seg = np.diff(path, axis=0)
            px = np.abs(seg / np.asarray(extents) * np.array(shape[::-1])).max(axis=1)
            n = np.maximum(np.ceil(px).astype(int), 1)
            t = np.concatenate([np.arange(k) / k for k in n])
            start = np.repeat(path[:-1], n, axis=0)
            pts = np.vstack([start + np.repeat(seg, n, axis=0) * t[:, None], path[-1:]])
        else:
            pts = path
        r, c = to_pixels(pts, extents, shape)
        img[r, c] = levels[a]
    return img


def density_heat(density: DensityMap, size: int) -> np.ndarray:
    """Black-red-yellow-white heat map of a density, nearest-neighbour resampled."""
    shape = _canvas_shape(size, density.extents)
    R, C = density.shape
    rows = np.minimum((np.arange(shape[0]) + 0.5) * R / shape[0], R - 1).astype(int)
    cols = np.minimum((np.arange(shape[1]) + 0.5) * C / shape[1], C - 1).astype(int)
    g = density.grid[np.ix_(rows, cols)]
    v = g / g.max() if g.max() > 0 else g
    rgb = np.stack([np.clip(3 * v, 0, 1), np.clip(3 * v - 1, 0, 1), np.clip(3 * v - 2, 0, 1)], axis=-1)
    return np.rint(255 * rgb).astype(np.uint8)


def render(record, target: DensityMap | None, size: int, out_dir, prefix: str = "") -> dict[str, Path]:
    """Write the dimple map, trajectory overlay and (if given) target heat map."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    extents = target.extents if target is not None else tuple(record.meta.get("extents", (1.0, 1.0)))
    stem = f"{prefix}_" if prefix else ""
    paths = {
        "dimples": write_pgm(out_dir / f"{stem}dimples.pgm",
                             dimple_image([e.position for e in record.dimples], extents, size)),
        "trajectories": write_pgm(out_dir / f"{stem}trajectories.pgm",
                                  trajectory_image(record.positions, extents, size)),
    }
    if target is not None:
        paths["target"] = write_ppm(out_dir / f"{stem}target.ppm", density_heat(target, size))
    return paths
