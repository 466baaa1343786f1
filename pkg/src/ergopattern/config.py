"""Experiment configuration: flat ``key = value`` files plus command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .comm import MODES, CommConfig
from .controller import DYNAMICS, STRATEGIES, ControlConfig
from .errors import ConfigurationError
from .spectral import SpectralBasis
from .swarm import WorldConfig
from .targets import BUILTIN


@dataclass
class ExperimentConfig:
    targets: list[str] = field(default_factory=lambda: ["two_lobe"])
    comm: list[str] = field(default_factory=lambda: ["full"])
    trials: int = 25
    seed: int = 0
    out: str = "out"
    jobs: int = 1

    agents: int = 4
    duration: float = 900.0
    extents: tuple[float, float] = (1.0, 1.0)
    dynamics: str = "single_integrator"
    agent_radius: float = 0.075
    dimple_period: float = 0.5
    escape_time: float = 1.0
    safe_margin: float = 0.0

    modes: int = 10
    resolution: int = 128
    invert: bool = False

    strategy: str = "mpc"
    dt: float = 0.1
    horizon: int = 20
    u_max: float = 0.08
    omega_max: float = 1.5707963267948966
    descent_iters: int = 30
    descent_tol: float = 1e-4
    step_size: float = 1.0
    barrier_weight: float = 1e3
    control_weight: float = 1e-4

    exchange_period: int = 1
    dimple_sigma: float = 0.0
    render_size: int = 256

    def validate(self) -> "ExperimentConfig":
        def need(cond, name, msg):
            if not cond:
                raise ConfigurationError(name, msg)

        need(len(self.targets) >= 1, "target", "at least one target is required")
        for t in self.targets:
            need(t in BUILTIN or Path(t).is_file(), "target", f"{t!r} is not a built-in target or an existing file")
        need(len(self.comm) >= 1, "comm", "at least one communication mode is required")
        for m in self.comm:
            need(m in MODES, "comm", f"{m!r} not in {MODES}")
        need(self.trials >= 1, "trials", "must be >= 1")
        need(self.seed >= 0, "seed", "must be >= 0")
        need(self.jobs >= 1, "jobs", "must be >= 1")
        need(1 <= self.agents <= 64, "agents", "must be in [1, 64]")
        need(self.duration >= 0, "duration", "must be >= 0")
        need(len(self.extents) == 2 and min(self.extents) > 0, "extents", "must be two positive lengths")
        need(self.dynamics in DYNAMICS, "dynamics", f"must be one of {DYNAMICS}")
        need(0 < self.agent_radius < min(self.extents) / 10, "agent_radius", "must be in (0, extent/10)")
        need(self.dimple_period >= self.dt, "dimple_period", "must be >= dt (at most one dimple per step)")
        need(self.escape_time >= 0, "escape_time", "must be >= 0")
        need(0 <= self.safe_margin < min(self.extents) / 2, "safe_margin", "must be in [0, extent/2)")
        need(1 <= self.modes <= 32, "modes", "must be in [1, 32]")
        need(2 <= self.resolution <= 4096, "resolution", "must be in [2, 4096]")
        need(self.strategy in STRATEGIES, "strategy", f"must be one of {STRATEGIES}")
        need(0 < self.dt <= 10, "dt", "must be in (0, 10]")
        need(1 <= self.horizon <= 500, "horizon", "must be in [1, 500]")
        need(self.u_max > 0, "u_max", "must be > 0")
        need(self.omega_max > 0, "omega_max", "must be > 0")
        need(0 <= self.descent_iters <= 10000, "descent_iters", "must be in [0, 10000]")
        need(self.descent_tol >= 0, "descent_tol", "must be >= 0")
        need(self.step_size > 0, "step_size", "must be > 0")
        need(self.barrier_weight >= 0, "barrier_weight", "must be >= 0")
        need(self.control_weight >= 0, "control_weight", "must be >= 0")
        need(self.exchange_period >= 1, "exchange_period", "must be >= 1")
        need(self.dimple_sigma >= 0, "dimple_sigma", "must be >= 0")
        need(8 <= self.render_size <= 8192, "render_size", "must be in [8, 8192]")
        return self

    def world(self) -> WorldConfig:
        return WorldConfig(
            dynamics=self.dynamics, agent_radius=self.agent_radius, dimple_period=self.dimple_period,
            n_agents=self.agents, duration=self.duration, extents=tuple(self.extents),
            escape_time=self.escape_time, safe_margin=self.safe_margin,
        )

    def control(self) -> ControlConfig:
        return ControlConfig(
            horizon_steps=self.horizon, dt=self.dt, u_max=self.u_max, descent_iters=self.descent_iters,
            step_size=self.step_size, barrier_weight=self.barrier_weight, control_weight=self.control_weight,
            strategy=self.strategy, omega_max=self.omega_max, descent_tol=self.descent_tol,
        )

    def comm_config(self, mode: str) -> CommConfig:
        return CommConfig(mode, self.exchange_period)

    def basis(self) -> SpectralBasis:
        return SpectralBasis(tuple(self.extents), self.modes)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_ALIASES = {"target": "targets", "modes_per_axis": "modes", "n_agents": "agents", "horizon_steps": "horizon"}


def _coerce(name: str, raw: str):
    default = getattr(ExperimentConfig(), name)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [v.strip() for v in raw.split(",") if v.strip()]
        if isinstance(default, tuple):
            vals = tuple(float(v) for v in raw.split(","))
            if len(vals) != 2:
                raise ValueError(raw)
            return vals
        return raw
    except ValueError:
        raise ConfigurationError(name, f"cannot parse {raw!r}") from None


def apply_overrides(cfg: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    """Return a copy of ``cfg`` with string-valued fields parsed and applied."""
    updates = {}
    for key, raw in pairs.items():
        name = _ALIASES.get(key.strip().replace("-", "_"), key.strip().replace("-", "_"))
        if name not in _FIELDS:
            raise ConfigurationError(key, "unknown configuration field")
        updates[name] = _coerce(name, raw)
    return dataclasses.replace(cfg, **updates)


def parse_config_text(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError("config", f"{path} does not exist")
        cfg = apply_overrides(cfg, parse_config_text(p.read_text()))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg.validate()


def to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"
