"""Built-in coverage objectives and graymap ingestion.

No club or balloon-dog artwork ships with the package, so ``two_lobe`` and
``ring_blob`` stand in for those objectives. They are proxies; supply a
graymap to pattern a real image.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .pnm import read_pgm
from .spectral import DensityMap

BUILTIN = ("uniform", "gradient", "two_lobe", "ring_blob")


def _grid(resolution: int, extents):
    L1, L2 = extents
    R = C = int(resolution)
    xs = (np.arange(C) + 0.5) * (L1 / C)
    ys = L2 - (np.arange(R) + 0.5) * (L2 / R)
    return np.meshgrid(xs / L1, ys / L2)  # normalised coordinates, row 0 at the top


def _gauss(x, y, cx, cy, s):
    return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s**2))


def builtin_target(name: str, extents=(1.0, 1.0), resolution: int = 128) -> DensityMap:
    x, y = _grid(resolution, extents)
    if name == "uniform":
        w = np.ones_like(x)
    elif name == "gradient":
        # high density on the left falling linearly to the right
        w = 1.0 - 0.9 * x
    elif name == "two_lobe":
        w = _gauss(x, y, 0.3, 0.3, 0.1) + _gauss(x, y, 0.7, 0.7, 0.1)
    elif name == "ring_blob":
        r = np.hypot(x - 0.45, y - 0.5)
        w = np.exp(-((r - 0.3) ** 2) / (2 * 0.05**2)) + 1.5 * _gauss(x, y, 0.75, 0.75, 0.07)
    else:
        raise ConfigurationError("target", f"unknown built-in target {name!r}; choose from {BUILTIN}")
    return DensityMap.from_values(w, extents)


def load_density_image(path, extents=(1.0, 1.0), invert: bool = False) -> DensityMap:
    """Density proportional to pixel intensity (white = dense unless ``invert``).

    Row 0 of the image is the top of the domain. Raises if the image has no mass.
    """
    pixels, maxval = read_pgm(path)
    values = pixels.astype(float) / maxval
    if invert:
        values = 1.0 - values
    return DensityMap.from_values(values, extents)


def resolve_target(spec: str, extents=(1.0, 1.0), resolution: int = 128, invert: bool = False) -> DensityMap:
    if spec in BUILTIN:
        return builtin_target(spec, extents, resolution)
    if not Path(spec).is_file():
        raise ConfigurationError("target", f"{spec!r} is neither a built-in target nor an existing file")
    return load_density_image(spec, extents, invert)


def objective_name(spec: str) -> str:
    return spec if spec in BUILTIN else Path(spec).stem
