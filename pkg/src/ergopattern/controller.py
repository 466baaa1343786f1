"""Receding-horizon ergodic planner with a barrier penalty, and a closed-form fallback.

The planner minimises, per agent and over an ``H``-step control window,

    J(u) = sum_k lam_k (chat_k - phi_k)^2
           + w_u * sum_m |u_m|^2 dt
           + w_b * sum_m max(0, -h(x_m))^2 dt

where ``chat`` blends the (possibly team-pooled) history with the planned
window, weighting the agent's own planned samples by ``1 / n_eff``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, ControllerError
from .spectral import SpectralBasis, TrajectoryStats

try:
    from . import _fastplan
except ImportError:  # numba missing: numpy path only
    _fastplan = None

STRATEGIES = ("mpc", "spectral_feedback")
DYNAMICS = ("single_integrator", "unicycle")


@dataclass
class ControlConfig:
    horizon_steps: int = 20
    dt: float = 0.1
    u_max: float = 0.08
    descent_iters: int = 30
    step_size: float = 1.0
    barrier_weight: float = 1e3
    control_weight: float = 1e-4
    strategy: str = "mpc"
    omega_max: float = np.pi / 2
    max_halvings: int = 20
    descent_tol: float = 1e-4

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if int(self.horizon_steps) < 1:
            raise ConfigurationError("horizon_steps", "must be >= 1")
        if not self.dt > 0:
            raise ConfigurationError("dt", "must be > 0")
        if not self.u_max > 0:
            raise ConfigurationError("u_max", "must be > 0")
        if not self.omega_max > 0:
            raise ConfigurationError("omega_max", "must be > 0")
        if int(self.descent_iters) < 0:
            raise ConfigurationError("descent_iters", "must be >= 0")
        if not self.step_size > 0:
            raise ConfigurationError("step_size", "must be > 0")
        if not self.barrier_weight >= 0:
            raise ConfigurationError("barrier_weight", "must be >= 0")
        if not self.control_weight >= 0:
            raise ConfigurationError("control_weight", "must be >= 0")
        if not self.descent_tol >= 0:
            raise ConfigurationError("descent_tol", "must be >= 0")
        if int(self.max_halvings) < 0:
            raise ConfigurationError("max_halvings", "must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError("strategy", f"must be one of {STRATEGIES}")

    @property
    def horizon(self) -> float:
        return self.horizon_steps * self.dt

    def control_bounds(self, dynamics: str = "single_integrator") -> np.ndarray:
        if dynamics == "unicycle":
            return np.array([self.u_max, self.omega_max])
        return np.array([self.u_max, self.u_max])


@dataclass
class SafeRegion:
    """Region agents must not leave, described by a barrier ``h`` (> 0 inside).

    ``kind="rect"`` insets the domain by ``margins`` (left, right, bottom, top;
    a scalar applies to all four). ``kind="mask"`` takes a boolean image
    (row 0 at the top, True = safe) and uses its signed distance transform,
    Gaussian-smoothed over ``smoothing`` length units.
    """

    extents: tuple[float, float] = (1.0, 1.0)
    kind: str = "rect"
    margins: tuple[float, float, float, float] | float = 0.0
    mask: np.ndarray | None = None
    smoothing: float = 0.01
    _sdf: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.extents = (float(self.extents[0]), float(self.extents[1]))
        L1, L2 = self.extents
        if self.kind == "rect":
            m = np.broadcast_to(np.asarray(self.margins, dtype=float), (4,))
            if np.any(m < 0) or m[0] + m[1] >= L1 or m[2] + m[3] >= L2:
                raise ConfigurationError("margins", f"inset {m.tolist()} leaves an empty safe set")
            self.margins = tuple(float(v) for v in m)
        elif self.kind == "mask":
            if self.mask is None:
                raise ConfigurationError("mask", "mask kind requires a boolean grid")
            mask = np.asarray(self.mask, dtype=bool)
            if mask.ndim != 2 or not mask.any():
                raise ConfigurationError("mask", "safe set is empty")
            if not self.smoothing > 0:
                raise ConfigurationError("smoothing", "must be > 0")
            self.mask = mask
            R, C = mask.shape
            px, py = L1 / C, L2 / R
            inside = ndimage.distance_transform_edt(mask, sampling=(py, px))
            outside = ndimage.distance_transform_edt(~mask, sampling=(py, px))
            # zero level halfway between a safe pixel centre and an unsafe one
            sdf = np.where(mask, inside - 0.5 * min(px, py), -(outside - 0.5 * min(px, py)))
            sigma = (self.smoothing / py, self.smoothing / px)
            sdf = ndimage.gaussian_filter(sdf, sigma=sigma, mode="nearest")
            # flip rows so index 0 is the bottom of the domain
            self._sdf = sdf[::-1].copy()
        else:
            raise ConfigurationError("kind", "must be 'rect' or 'mask'")

    @classmethod
    def whole_domain(cls, extents=(1.0, 1.0)) -> "SafeRegion":
        return cls(extents, "rect", 0.0)

    def _rect_terms(self, p):
        L1, L2 = self.extents
        ml, mr, mb, mt = self.margins
        return np.stack([p[..., 0] - ml, L1 - mr - p[..., 0], p[..., 1] - mb, L2 - mt - p[..., 1]], axis=-1)

    def _grid_coords(self, p):
        R, C = self._sdf.shape
        L1, L2 = self.extents
        gx = np.clip(p[..., 0] / L1 * C - 0.5, 0, C - 1)
        gy = np.clip(p[..., 1] / L2 * R - 0.5, 0, R - 1)
        i0 = np.minimum(np.floor(gy).astype(int), max(R - 2, 0))
        j0 = np.minimum(np.floor(gx).astype(int), max(C - 2, 0))
        return gx, gy, i0, j0

    def value(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if self.kind == "rect":
            return self._rect_terms(p).min(axis=-1)
        gx, gy, i0, j0 = self._grid_coords(p)
        s = self._sdf
        i1 = np.minimum(i0 + 1, s.shape[0] - 1)
        j1 = np.minimum(j0 + 1, s.shape[1] - 1)
        ty, tx = gy - i0, gx - j0
        top = s[i0, j0] * (1 - tx) + s[i0, j1] * tx
        bot = s[i1, j0] * (1 - tx) + s[i1, j1] * tx
        return top * (1 - ty) + bot * ty

    def gradient(self, points) -> np.ndarray:
        """(Sub)gradient of ``value`` with respect to position."""
        p = np.asarray(points, dtype=float)
        if self.kind == "rect":
            active = self._rect_terms(p).argmin(axis=-1)
            dirs = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
            return dirs[active]
        R, C = self._sdf.shape
        L1, L2 = self.extents
        gx, gy, i0, j0 = self._grid_coords(p)
        s = self._sdf
        i1 = np.minimum(i0 + 1, R - 1)
        j1 = np.minimum(j0 + 1, C - 1)
        ty, tx = gy - i0, gx - j0
        dtx = (s[i0, j1] - s[i0, j0]) * (1 - ty) + (s[i1, j1] - s[i1, j0]) * ty
        dty = (s[i1, j0] - s[i0, j0]) * (1 - tx) + (s[i1, j1] - s[i0, j1]) * tx
        return np.stack([dtx * C / L1, dty * R / L2], axis=-1)


def barrier_value(region: SafeRegion, x) -> float:
    return float(region.value(np.asarray(x, dtype=float)))


def _rollout(x0, U, dt, dynamics):
    """Euler rollout. x0: (A, d), U: (A, H, 2) -> states (A, H, d) after each control."""
    if dynamics == "single_integrator":
        return x0[:, None, :] + dt * np.cumsum(U, axis=1)
    A, H, _ = U.shape
    S = np.empty((A, H, 3))
    s = x0.copy()
    for m in range(H):
        v, w = U[:, m, 0], U[:, m, 1]
        mid = s[:, 2] + 0.5 * w * dt
        s = np.stack([s[:, 0] + v * np.cos(mid) * dt, s[:, 1] + v * np.sin(mid) * dt, s[:, 2] + w * dt], axis=1)
        S[:, m] = s
    return S


class MPCProblem:
    """Batched planning problem for ``A`` independent agents sharing one target."""

    def __init__(
        self,
        basis: SpectralBasis,
        target_coeffs,
        config: ControlConfig,
        region: SafeRegion | None,
        x0,
        past_coeffs,
        past_time,
        n_eff: float = 1.0,
        dynamics: str = "single_integrator",
    ):
        if dynamics not in DYNAMICS:
            raise ConfigurationError("dynamics", f"must be one of {DYNAMICS}")
        self.basis = basis
        self.phi = np.asarray(target_coeffs, dtype=float)
        self.config = config
        self.region = region
        self.dynamics = dynamics
        self.x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        self.c_past = np.atleast_2d(np.asarray(past_coeffs, dtype=float))
        self.T = np.broadcast_to(np.asarray(past_time, dtype=float), (self.x0.shape[0],)).copy()
        basis.check_coeffs(self.phi, self.c_past)
        self.n_eff = float(n_eff)
        self.bounds = config.control_bounds(dynamics)
        dt, H = config.dt, config.horizon_steps
        self.sample_weight = dt / self.n_eff
        self.denom = self.T + H * self.sample_weight  # (A,)
        self.history = self.T[:, None] * self.c_past  # (A, M)

    def _terms(self, U):
        cfg = self.config
        S = _rollout(self.x0, U, cfg.dt, self.dynamics)
        P = S[..., :2]
        F = self.basis.values(P)  # (A, H, M)
        chat = (self.history + self.sample_weight * F.sum(axis=1)) / self.denom[:, None]
        diff = chat - self.phi
        J = (self.basis.weights * diff**2).sum(axis=1)
        J = J + cfg.control_weight * cfg.dt * (U**2).sum(axis=(1, 2))
        h = None
        if self.region is not None and cfg.barrier_weight > 0:
            h = self.region.value(P)
            J = J + cfg.barrier_weight * cfg.dt * (np.maximum(0.0, -h) ** 2).sum(axis=1)
        return S, P, diff, h, J

    def cost(self, U) -> np.ndarray:
        return self._terms(np.asarray(U, dtype=float))[-1]

    def cost_and_grad(self, U):
        cfg = self.config
        U = np.asarray(U, dtype=float)
        S, P, diff, h, J = self._terms(U)
        dF = self.basis.gradients(P)  # (A, H, M, 2)
        wdiff = 2.0 * self.basis.weights * diff * (self.sample_weight / self.denom[:, None])  # (A, M)
        gP = np.einsum("am,ahmd->ahd", wdiff, dF)
        if h is not None:
            viol = np.maximum(0.0, -h)
            gP = gP - 2.0 * cfg.barrier_weight * cfg.dt * viol[..., None] * self.region.gradient(P)
        gU = 2.0 * cfg.control_weight * cfg.dt * U
        if self.dynamics == "single_integrator":
            # x_m depends on every earlier control with sensitivity dt
            gU = gU + cfg.dt * np.cumsum(gP[:, ::-1], axis=1)[:, ::-1]
        else:
            gU = gU + self._unicycle_adjoint(S, U, gP)
        return J, gU

    def _unicycle_adjoint(self, S, U, gP):
        dt = self.config.dt
        A, H, _ = U.shape
        prev = np.concatenate([self.x0[:, None, :], S[:, :-1]], axis=1)  # state before control m
        v, w = U[..., 0], U[..., 1]
        mid = prev[..., 2] + 0.5 * w * dt
        lam = np.zeros((A, 3))
        out = np.empty_like(U)
        for m in range(H - 1, -1, -1):
            lam = lam + np.concatenate([gP[:, m], np.zeros((A, 1))], axis=1)
            c, s = np.cos(mid[:, m]), np.sin(mid[:, m])
            turn = dt * v[:, m] * (-lam[:, 0] * s + lam[:, 1] * c)  # d(position)/d(mid heading)
            out[:, m, 0] = dt * (lam[:, 0] * c + lam[:, 1] * s)
            out[:, m, 1] = dt * lam[:, 2] + 0.5 * dt * turn
            lam = lam.copy()
            lam[:, 2] = lam[:, 2] + turn
        return out

    def clamp(self, U):
        return np.clip(U, -self.bounds, self.bounds)

    def descend(self, U0, iters: int | None = None, record: bool = False, fast: bool = True):
        """Projected gradient descent with per-agent backtracking.

        The step is the gradient rescaled so its largest component spans the
        control bound, times a step factor that halves until the cost drops.
        An agent stops once no halving helps. Returns the control sequences
        and, if ``record``, the (iters + 1, A) cost history.
        """
        cfg = self.config
        iters = cfg.descent_iters if iters is None else iters
        U0 = np.asarray(U0, dtype=float)
        if fast and not record and _fastplan is not None and _fastplan.supported(self):
            return _fastplan.descend_problem(self, U0, iters)
        U = self.clamp(U0.copy())
        A = U.shape[0]
        J, g = self.cost_and_grad(U)
        alpha = np.full(A, float(cfg.step_size))
        done = np.zeros(A, dtype=bool)
        history = [J.copy()] if record else None
        for it in range(iters):
            if not (np.all(np.isfinite(g[~done])) and np.all(np.isfinite(J[~done]))):
                raise ControllerError("non-finite cost gradient", iteration=it)
            scale = np.abs(g / self.bounds).max(axis=(1, 2))
            done |= scale <= 0
            direction = np.zeros_like(g)
            live = ~done
            direction[live] = g[live] / scale[live, None, None]
            pending = live.copy()
            halved = np.zeros(A, dtype=bool)
            a = alpha.copy()
            U_new = U.copy()
            J_new = J.copy()
            for _ in range(cfg.max_halvings + 1):
                if not pending.any():
                    break
                trial = self.clamp(U - a[:, None, None] * self.bounds * direction)
                Jt = self.cost(trial)
                ok = pending & (Jt < J)
                U_new[ok] = trial[ok]
                J_new[ok] = Jt[ok]
                pending &= ~ok
                a = np.where(pending, a * 0.5, a)
                halved |= pending
            # stalled agents, and agents whose accepted step gained too little, stop here
            done |= pending | (live & (J - J_new <= cfg.descent_tol * J))
            if not (live & ~pending).any():
                if record:
                    history.extend([J.copy()] * (iters - it))
                break
            # grow only after a first-try success
            alpha = np.where(halved, a, np.minimum(2.0 * a, cfg.step_size))
            U = U_new
            J, g = self.cost_and_grad(U)
            if record:
                history.append(J.copy())
            if done.all():
                if record:
                    history.extend([J.copy()] * (iters - it - 1))
                break
        if record:
            return U, np.array(history)
        return U


def _past_view(stats: TrajectoryStats, n_eff: float, basis: SpectralBasis):
    if stats.elapsed > 0:
        return stats.coefficients, stats.elapsed / n_eff
    return np.zeros(basis.size), 0.0


def plan_mpc(
    position,
    collective: TrajectoryStats,
    target_coeffs,
    basis: SpectralBasis,
    config: ControlConfig,
    region: SafeRegion | None = None,
    *,
    heading: float = 0.0,
    n_eff: float = 1.0,
    dynamics: str = "single_integrator",
    warm_start=None,
) -> np.ndarray:
    """Plan an (H, 2) control sequence for one agent.

    ``collective`` holds the statistics the agent plans against: its own when
    not communicating, the team pool otherwise, in which case ``n_eff`` is the
    team size. The pool's elapsed time is divided by ``n_eff`` to obtain the
    per-agent history length.
    """
    c_past, T = _past_view(collective, n_eff, basis)
    x0 = np.asarray(position, dtype=float)[:2]
    if dynamics == "unicycle":
        x0 = np.array([x0[0], x0[1], heading])
    prob = MPCProblem(basis, target_coeffs, config, region, x0[None], c_past[None], T, n_eff, dynamics)
    H = config.horizon_steps
    U0 = np.zeros((1, H, 2)) if warm_start is None else np.asarray(warm_start, dtype=float).reshape(1, H, 2)
    return prob.descend(U0)[0]


def shift_plan(U: np.ndarray) -> np.ndarray:
    """Warm start for the next replan: drop the executed step, repeat the last."""
    return np.concatenate([U[..., 1:, :], U[..., -1:, :]], axis=-2)


def spectral_feedback(
    position,
    collective: TrajectoryStats,
    target_coeffs,
    basis: SpectralBasis,
    config: ControlConfig,
) -> np.ndarray:
    """Closed-form feedback: full speed down the gradient of the coverage deficit."""
    x = np.asarray(position, dtype=float)[:2]
    c = collective.coefficients if collective.elapsed > 0 else basis.values(x)
    B = (basis.weights * (c - np.asarray(target_coeffs)))[:, None] * basis.gradients(x)
    B = B.sum(axis=0)
    norm = float(np.hypot(B[0], B[1]))
    if norm < 1e-12:
        return np.zeros(2)
    return -config.u_max * B / norm


def velocity_to_unicycle(velocity, heading: float, config: ControlConfig, gain: float = 2.0) -> np.ndarray:
    """Track a planar velocity with (forward speed, turn rate) commands."""
    vx, vy = velocity
    speed = float(np.hypot(vx, vy))
    if speed == 0.0:
        return np.zeros(2)
    err = (np.arctan2(vy, vx) - heading + np.pi) % (2 * np.pi) - np.pi
    v = np.clip(speed * np.cos(err), -config.u_max, config.u_max)
    w = np.clip(gain * err, -config.omega_max, config.omega_max)
    return np.array([v, w])
