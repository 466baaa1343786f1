"""Sharing of trajectory statistics between agents."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError
from .spectral import TrajectoryStats

MODES = ("none", "full")


@dataclass(frozen=True)
class CommConfig:
    mode: str = "full"
    exchange_period_steps: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError("comm", f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.exchange_period_steps) < 1:
            raise ConfigurationError("exchange_period_steps", "must be >= 1")

    @property
    def shares(self) -> bool:
        return self.mode == "full"


def _check_dims(stats: Sequence[TrajectoryStats]) -> None:
    sizes = {s.sums.shape for s in stats}
    if len(sizes) > 1:
        raise DimensionMismatchError(f"agents hold statistics of different sizes: {sorted(sizes)}")


def exchange(stats: Sequence[TrajectoryStats], config: CommConfig) -> list[np.ndarray]:
    """Coefficient vector each agent receives in one exchange round.

    Without communication agents keep their own coefficients. With full sharing
    everyone gets the time-weighted team mean, which is the coefficient vector
    of the pooled trajectory.
    """
    _check_dims(stats)
    if not config.shares:
        return [s.coefficients.copy() for s in stats]
    pooled = TrajectoryStats.pooled(stats).coefficients
    return [pooled.copy() for _ in stats]


class CommChannel:
    """Per-agent view of the statistics used for planning.

    On exchange steps every view is reset to the team pool; in between, each
    agent folds only its own new samples into its last received pool.
    Views are kept as (sum, elapsed) pairs, so the coefficient vector of a view
    is ``sums / elapsed`` and ``elapsed / n_eff`` is the per-agent history length.
    """

    def __init__(self, config: CommConfig, n_agents: int, size: int):
        self.config = config
        self.n_agents = n_agents
        self.views = [TrajectoryStats(np.zeros(size)) for _ in range(n_agents)]

    @property
    def n_eff(self) -> int:
        return self.n_agents if self.config.shares else 1

    def update(self, step: int, stats: Sequence[TrajectoryStats], samples: Sequence[np.ndarray], dt: float) -> None:
        """Advance views after world step ``step`` (1-based).

        ``samples`` are the basis values each agent just accumulated.
        """
        _check_dims(stats)
        if not self.config.shares:
            self.views = list(stats)
            return
        if step % self.config.exchange_period_steps == 0:
            pooled = TrajectoryStats.pooled(stats)
            self.views = [pooled.copy() for _ in stats]
        else:
            for view, sample in zip(self.views, samples):
                view.add(sample, dt)
