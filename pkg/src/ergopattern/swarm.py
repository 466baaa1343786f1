"""World stepping for a team of patterning robots."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import controller as ctl
from .comm import CommChannel, CommConfig
from .errors import ConfigurationError, ControllerError
from .metrics import _pairs
from .spectral import SpectralBasis, TrajectoryStats

TWO_PI = 2.0 * math.pi
# dimple phase slack absorbing float error in repeated dt additions
PHASE_EPS = 1e-9


@dataclass
class WorldConfig:
    dynamics: str = "single_integrator"
    agent_radius: float = 0.075
    dimple_period: float = 0.5
    n_agents: int = 4
    duration: float = 900.0
    extents: tuple[float, float] = (1.0, 1.0)
    escape_time: float = 1.0
    safe_margin: float = 0.0
    substeps: int = 1
    snapshot_every: int = 10

    def __post_init__(self):
        self.extents = (float(self.extents[0]), float(self.extents[1]))
        self.validate()

    def validate(self) -> None:
        if self.dynamics not in ctl.DYNAMICS:
            raise ConfigurationError("dynamics", f"must be one of {ctl.DYNAMICS}")
        if not (self.extents[0] > 0 and self.extents[1] > 0):
            raise ConfigurationError("extents", "must be positive")
        if not 0 < self.agent_radius < min(self.extents) / 10:
            raise ConfigurationError("agent_radius", "must be positive and below a tenth of the domain extent")
        if not self.dimple_period > 0:
            raise ConfigurationError("dimple_period", "must be > 0")
        if int(self.n_agents) < 1:
            raise ConfigurationError("agents", "must be >= 1")
        if not self.duration >= 0:
            raise ConfigurationError("duration", "must be >= 0")
        if not self.escape_time >= 0:
            raise ConfigurationError("escape_time", "must be >= 0")
        if not 0 <= self.safe_margin < min(self.extents) / 2:
            raise ConfigurationError("safe_margin", "must be in [0, half the domain extent)")
        if int(self.substeps) < 1:
            raise ConfigurationError("substeps", "must be >= 1")
        if int(self.snapshot_every) < 1:
            raise ConfigurationError("snapshot_every", "must be >= 1")

    def safe_region(self) -> ctl.SafeRegion:
        return ctl.SafeRegion(self.extents, "rect", self.safe_margin)


@dataclass
class AgentState:
    agent_id: int
    position: np.ndarray
    heading: float = 0.0
    stats: TrajectoryStats | None = None
    dimple_phase: float = 0.0
    rng: np.random.Generator | None = field(default=None, repr=False)
    collided: bool = False
    escape_remaining: int = 0
    plan: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.heading = float(self.heading) % TWO_PI


@dataclass(frozen=True)
class DimpleEvent:
    position: tuple[float, float]
    time: float
    agent_id: int
    step: int = 0


@dataclass(frozen=True)
class CollisionEvent:
    step: int
    agent_a: int
    agent_b: int


@dataclass(frozen=True)
class Decorrelation:
    step: int
    agent_id: int
    pre_heading: float
    new_heading: float

    @property
    def offset(self) -> float:
        """New heading relative to the reversed pre-collision heading, in (-pi/2, pi/2)."""
        return (self.new_heading - self.pre_heading) % TWO_PI - math.pi


def _integrate(pos, heading, u, dt, dynamics, extents, substeps=1):
    """Pure Euler step shared by ``step_dynamics`` and the trial loop."""
    if dynamics == "single_integrator":
        ux, uy = float(u[0]), float(u[1])
        x, y = pos[0] + ux * dt, pos[1] + uy * dt
        if ux != 0.0 or uy != 0.0:
            heading = math.atan2(uy, ux)
    elif dynamics == "unicycle":
        h = dt / substeps
        v, w = float(u[0]), float(u[1])
        x, y = float(pos[0]), float(pos[1])
        for _ in range(substeps):
            # heading at the middle of the sub-step keeps arcs second-order accurate
            mid = heading + 0.5 * w * h
            x += v * h * math.cos(mid)
            y += v * h * math.sin(mid)
            heading += w * h
    else:
        raise ConfigurationError("dynamics", f"unknown dynamics {dynamics!r}")
    # mirror back off whichever wall was crossed (clipping would park agents on
    # the wall, where every basis gradient has zero normal component)
    L1, L2 = extents
    if x < 0.0 or x > L1:
        x = min(max(-x if x < 0.0 else 2.0 * L1 - x, 0.0), L1)
        heading = math.pi - heading
    if y < 0.0 or y > L2:
        y = min(max(-y if y < 0.0 else 2.0 * L2 - y, 0.0), L2)
        heading = -heading
    return np.array([x, y]), heading % TWO_PI


def step_dynamics(state: AgentState, u, dt: float, dynamics: str = "single_integrator",
                  extents=(1.0, 1.0), substeps: int = 1) -> AgentState:
    """Advance one agent by ``dt`` under control ``u``; returns a new state.

    Single integrator: ``u`` is a planar velocity and the heading follows it.
    Unicycle: ``u = (v, omega)``, integrated with ``substeps`` Euler sub-steps.
    A step that crosses a wall is mirrored back inside and the heading reflected.
    """
    pos, heading = _integrate(state.position, state.heading, np.asarray(u, dtype=float), dt, dynamics,
                              extents, substeps)
    return replace(state, position=pos, heading=heading)


def detect_collisions(positions, r_c: float) -> set[tuple[int, int]]:
    """Unordered pairs ``(i, j)``, ``i < j``, closer than ``r_c``."""
    P = np.asarray([getattr(p, "position", p) for p in positions], dtype=float).reshape(-1, 2)
    pairs = set()
    for i, j in itertools.combinations(range(len(P)), 2):
        if np.hypot(*(P[i] - P[j])) < r_c:
            pairs.add((i, j))
    return pairs


def decorrelate(state: AgentState, rng: np.random.Generator | None = None, escape_steps: int = 10) -> AgentState:
    """Pick a fresh heading in the half plane behind the agent.

    The draw uses only this agent's generator, so colliding agents choose
    independently. The agent then holds that heading for ``escape_steps``.
    """
    rng = state.rng if rng is None else rng
    offset = rng.uniform(-math.pi / 2, math.pi / 2)
    return replace(
        state,
        heading=(state.heading + math.pi + offset) % TWO_PI,
        collided=True,
        escape_remaining=escape_steps,
    )


def _advance_phase(phase: float, dt: float, period: float) -> tuple[float, int]:
    phase += dt
    count = 0
    while phase >= period - PHASE_EPS:
        phase -= period
        count += 1
    return max(phase, 0.0), count


def deposit_dimples(state: AgentState, dt: float, period: float, time: float, step: int = 0):
    """Advance the dimple clock by ``dt``; returns (new_state, events).

    The phase keeps its remainder, so the long-run rate is exactly ``1 / period``.
    """
    if not period > 0:
        raise ConfigurationError("dimple_period", "must be > 0")
    phase, count = _advance_phase(state.dimple_phase, dt, period)
    pos = (float(state.position[0]), float(state.position[1]))
    events = [DimpleEvent(pos, time, state.agent_id, step) for _ in range(count)]
    return replace(state, dimple_phase=phase), events


@dataclass
class TrialRecord:
    """Everything logged during one trial; per-step arrays are indexed [step, agent]."""

    dt: float
    n_agents: int
    times: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    controls: np.ndarray
    collided: np.ndarray
    dimple_flags: np.ndarray
    ergodic_metric: np.ndarray
    heterogeneity: np.ndarray
    dimples: list[DimpleEvent]
    collisions: list[CollisionEvent]
    decorrelations: list[Decorrelation]
    snapshot_steps: np.ndarray
    snapshots: np.ndarray
    final_coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.times)


def _initial_positions(region: ctl.SafeRegion, n: int, r_c: float, rng: np.random.Generator, extents):
    L = np.asarray(extents)
    pts = []
    for _ in range(n):
        for attempt in range(1000):
            p = rng.uniform(0.0, 1.0, 2) * L
            if region.value(p) <= 0:
                continue
            if attempt < 999 and any(np.hypot(*(p - q)) < r_c for q in pts):
                continue
            break
        pts.append(p)
    return pts


def _separate(agents, pairs, r_c, extents, region, guard):
    """Push overlapping pairs apart along their centre line to distance ``r_c``."""
    for i, j in sorted(pairs):
        a, b = agents[i], agents[j]
        d = b.position - a.position
        dist = float(np.hypot(*d))
        if dist >= r_c:
            continue
        n = d / dist if dist > 0 else np.array([1.0, 0.0])
        push = 0.5 * (r_c - dist) * n
        for agent, delta in ((a, -push), (b, push)):
            new = np.clip(agent.position + delta, 0.0, np.asarray(extents))
            if guard:
                h_old, h_new = float(region.value(agent.position)), float(region.value(new))
                if h_new < 0 and h_new < h_old:
                    continue
            agent.position = new


def run_trial(world: WorldConfig, control: ctl.ControlConfig, comm: CommConfig, target_coeffs,
              basis: SpectralBasis, seed: int, region: ctl.SafeRegion | None = None) -> TrialRecord:
    """Simulate one seeded trial; a pure function of its arguments."""
    dt = control.dt
    N = int(world.n_agents)
    n_steps = int(round(world.duration / dt))
    escape_steps = int(round(world.escape_time / dt))
    region = world.safe_region() if region is None else region
    barrier_on = control.barrier_weight > 0
    phi = np.asarray(target_coeffs, dtype=float)
    basis.check_coeffs(phi)

    seqs = np.random.SeedSequence(int(seed)).spawn(N + 1)
    world_rng = np.random.default_rng(seqs[0])
    starts = _initial_positions(region, N, world.agent_radius, world_rng, world.extents)
    agents = []
    for i in range(N):
        rng = np.random.default_rng(seqs[i + 1])
        agents.append(AgentState(i, starts[i], rng.uniform(0, TWO_PI), TrajectoryStats.empty(basis), rng=rng,
                                 plan=np.zeros((control.horizon_steps, 2))))
    channel = CommChannel(comm, N, basis.size)
    channel.views = [a.stats for a in agents] if not comm.shares else channel.views

    positions = np.zeros((n_steps, N, 2))
    headings = np.zeros((n_steps, N))
    controls = np.zeros((n_steps, N, 2))
    collided = np.zeros((n_steps, N), dtype=bool)
    dimple_flags = np.zeros((n_steps, N), dtype=bool)
    erg = np.zeros(n_steps)
    het = np.full(n_steps, np.nan)
    dimples, collisions, decorrs = [], [], []
    snap_steps, snaps = [], []
    bounds = control.control_bounds(world.dynamics)

    weights = basis.weights
    pair_i, pair_j = _pairs(N) if N >= 2 else (None, None)
    for s in range(n_steps):
        step = s + 1
        t = step * dt
        # escaping agents follow their new heading unless that would leave the safe set
        u = np.zeros((N, 2))
        needs_plan = []
        for a in agents:
            if a.escape_remaining > 0:
                direction = np.array([math.cos(a.heading), math.sin(a.heading)])
                nxt = a.position + control.u_max * dt * direction
                if barrier_on and region.value(nxt) < 0 and region.value(nxt) < region.value(a.position):
                    a.escape_remaining = 0
                else:
                    u[a.agent_id] = (control.u_max, 0.0) if world.dynamics == "unicycle" else control.u_max * direction
                    a.escape_remaining -= 1
                    continue
            needs_plan.append(a.agent_id)

        if needs_plan:
            try:
                u[needs_plan] = _plan(agents, needs_plan, channel, phi, basis, control, region, world.dynamics)
            except ControllerError as exc:
                raise ControllerError(str(exc), step=step) from exc
        u = np.clip(u, -bounds, bounds)

        for a in agents:
            a.position, a.heading = _integrate(a.position, a.heading, u[a.agent_id], dt, world.dynamics,
                                               world.extents, world.substeps)
            a.collided = False

        pairs = detect_collisions([a.position for a in agents], world.agent_radius) if N >= 2 else ()
        if pairs:
            _separate(agents, pairs, world.agent_radius, world.extents, region, barrier_on)
            for i, j in sorted(pairs):
                collisions.append(CollisionEvent(step, i, j))
            for i in sorted({i for p in pairs for i in p}):
                pre = agents[i].heading
                agents[i] = decorrelate(agents[i], escape_steps=escape_steps)
                decorrs.append(Decorrelation(step, i, pre, agents[i].heading))

        P = np.array([a.position for a in agents])
        F = basis.values(P)
        for a in agents:
            a.dimple_phase, count = _advance_phase(a.dimple_phase, dt, world.dimple_period)
            if count:
                pos = (float(P[a.agent_id, 0]), float(P[a.agent_id, 1]))
                dimples.extend(DimpleEvent(pos, t, a.agent_id, step) for _ in range(count))
                dimple_flags[s, a.agent_id] = True
            a.stats.add(F[a.agent_id], dt)
        channel.update(step, [a.stats for a in agents], F, dt)

        positions[s] = P
        headings[s] = [a.heading for a in agents]
        controls[s] = u
        collided[s] = [a.collided for a in agents]
        coeffs = np.array([a.stats.coefficients for a in agents])
        pooled = TrajectoryStats.pooled(a.stats for a in agents).coefficients
        erg[s] = float(weights @ (pooled - phi) ** 2)
        if N >= 2:
            het[s] = float(((coeffs[pair_i] - coeffs[pair_j]) ** 2 @ weights).mean())
        if step % world.snapshot_every == 0 or step == n_steps:
            snap_steps.append(step)
            snaps.append(coeffs)

    final = np.array([a.stats.coefficients for a in agents]) if n_steps else np.zeros((N, basis.size))
    return TrialRecord(
        dt=dt,
        n_agents=N,
        times=np.arange(1, n_steps + 1) * dt,
        positions=positions,
        headings=headings,
        controls=controls,
        collided=collided,
        dimple_flags=dimple_flags,
        ergodic_metric=erg,
        heterogeneity=het,
        dimples=dimples,
        collisions=collisions,
        decorrelations=decorrs,
        snapshot_steps=np.array(snap_steps, dtype=int),
        snapshots=np.array(snaps).reshape(len(snaps), N, basis.size),
        final_coeffs=final,
        meta={"seed": int(seed), "comm": comm.mode, "n_agents": N},
    )


def _plan(agents, ids, channel: CommChannel, phi, basis, control, region, dynamics):
    """Controls for the agents in ``ids``; the MPC batch is solved in one call."""
    n_eff = channel.n_eff
    views = [channel.views[i] for i in ids]
    if control.strategy == "spectral_feedback":
        out = []
        for i, view in zip(ids, views):
            v = ctl.spectral_feedback(agents[i].position, view, phi, basis, control)
            out.append(ctl.velocity_to_unicycle(v, agents[i].heading, control) if dynamics == "unicycle" else v)
        return np.array(out)

    past = [ctl._past_view(v, n_eff, basis) for v in views]
    c_past = np.array([p[0] for p in past])
    T = np.array([p[1] for p in past])
    if dynamics == "unicycle":
        x0 = np.array([[*agents[i].position, agents[i].heading] for i in ids])
    else:
        x0 = np.array([agents[i].position for i in ids])
    prob = ctl.MPCProblem(basis, phi, control, region, x0, c_past, T, n_eff, dynamics)
    U0 = np.array([agents[i].plan for i in ids])
    U = prob.descend(U0)
    for k, i in enumerate(ids):
        agents[i].plan = ctl.shift_plan(U[k])
    return U[:, 0, :]
