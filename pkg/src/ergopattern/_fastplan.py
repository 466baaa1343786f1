"""Compiled planner kernel for single-integrator agents with a rectangular barrier.

Mirrors ``MPCProblem.descend`` step for step; the numpy implementation stays
the reference and the test suite checks the two against each other.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _cost(x0, U, hist, denom, sw, phi, lam, hk, wx, wy, dt, w_u, w_b, rect, use_barrier):
    H = U.shape[0]
    K = wx.shape[0]
    M = K * K
    Fsum = np.zeros(M)
    px, py = x0[0], x0[1]
    jb = 0.0
    ju = 0.0
    cx = np.empty(K)
    cy = np.empty(K)
    for m in range(H):
        px += dt * U[m, 0]
        py += dt * U[m, 1]
        ju += U[m, 0] * U[m, 0] + U[m, 1] * U[m, 1]
        for k in range(K):
            cx[k] = np.cos(wx[k] * px)
            cy[k] = np.cos(wy[k] * py)
        for a in range(K):
            for b in range(K):
                Fsum[a * K + b] += cx[a] * cy[b]
        if use_barrier:
            h = min(px - rect[0], rect[1] - px, py - rect[2], rect[3] - py)
            if h < 0:
                jb += h * h
    J = 0.0
    for i in range(M):
        d = (hist[i] + sw * Fsum[i] / hk[i]) / denom - phi[i]
        J += lam[i] * d * d
    return J + w_u * dt * ju + w_b * dt * jb


@njit(cache=True)
def _cost_grad(x0, U, hist, denom, sw, phi, lam, hk, wx, wy, dt, w_u, w_b, rect, use_barrier, grad):
    H = U.shape[0]
    K = wx.shape[0]
    M = K * K
    P = np.empty((H, 2))
    px, py = x0[0], x0[1]
    ju = 0.0
    for m in range(H):
        px += dt * U[m, 0]
        py += dt * U[m, 1]
        P[m, 0] = px
        P[m, 1] = py
        ju += U[m, 0] * U[m, 0] + U[m, 1] * U[m, 1]
    Fsum = np.zeros(M)
    cx = np.empty((H, K))
    cy = np.empty((H, K))
    for m in range(H):
        for k in range(K):
            cx[m, k] = np.cos(wx[k] * P[m, 0])
            cy[m, k] = np.cos(wy[k] * P[m, 1])
        for a in range(K):
            for b in range(K):
                Fsum[a * K + b] += cx[m, a] * cy[m, b]
    J = 0.0
    W = np.empty((K, K))
    for i in range(M):
        d = (hist[i] + sw * Fsum[i] / hk[i]) / denom - phi[i]
        J += lam[i] * d * d
        W[i // K, i % K] = 2.0 * lam[i] * d * sw / denom / hk[i]
    J += w_u * dt * ju
    gP = np.zeros((H, 2))
    jb = 0.0
    Wcy = np.empty(K)
    Wsy = np.empty(K)
    dsx = np.empty(K)
    dsy = np.empty(K)
    for m in range(H):
        for k in range(K):
            dsx[k] = -wx[k] * np.sin(wx[k] * P[m, 0])
            dsy[k] = -wy[k] * np.sin(wy[k] * P[m, 1])
        for a in range(K):
            s1 = 0.0
            s2 = 0.0
            for b in range(K):
                s1 += W[a, b] * cy[m, b]
                s2 += W[a, b] * dsy[b]
            Wcy[a] = s1
            Wsy[a] = s2
        gx = 0.0
        gy = 0.0
        for a in range(K):
            gx += dsx[a] * Wcy[a]
            gy += cx[m, a] * Wsy[a]
        if use_barrier:
            t0 = P[m, 0] - rect[0]
            t1 = rect[1] - P[m, 0]
            t2 = P[m, 1] - rect[2]
            t3 = rect[3] - P[m, 1]
            h = t0
            ax, ay = 1.0, 0.0
            if t1 < h:
                h, ax, ay = t1, -1.0, 0.0
            if t2 < h:
                h, ax, ay = t2, 0.0, 1.0
            if t3 < h:
                h, ax, ay = t3, 0.0, -1.0
            if h < 0:
                jb += h * h
                gx += 2.0 * w_b * dt * h * ax
                gy += 2.0 * w_b * dt * h * ay
        gP[m, 0] = gx
        gP[m, 1] = gy
    J += w_b * dt * jb
    acc0 = 0.0
    acc1 = 0.0
    for m in range(H - 1, -1, -1):
        acc0 += gP[m, 0]
        acc1 += gP[m, 1]
        grad[m, 0] = 2.0 * w_u * dt * U[m, 0] + dt * acc0
        grad[m, 1] = 2.0 * w_u * dt * U[m, 1] + dt * acc1
    return J


@njit(cache=True)
def descend(x0, U0, hist, denom, sw, phi, lam, hk, wx, wy, dt, w_u, w_b, rect, use_barrier,
            bound, iters, step_size, max_halvings, tol):
    """Projected, normalised gradient descent for one agent; returns (U, ok)."""
    H = U0.shape[0]
    U = np.empty_like(U0)
    for m in range(H):
        for j in range(2):
            U[m, j] = min(max(U0[m, j], -bound), bound)
    g = np.empty_like(U)
    J = _cost_grad(x0, U, hist, denom, sw, phi, lam, hk, wx, wy, dt, w_u, w_b, rect, use_barrier, g)
    alpha = step_size
    trial = np.empty_like(U)
    for it in range(iters):
        scale = 0.0
        for m in range(H):
            for j in range(2):
                if not np.isfinite(g[m, j]):
                    return U, it
                v = abs(g[m, j]) / bound
                if v > scale:
                    scale = v
        if not np.isfinite(J):
            return U, it
        if scale <= 0.0:
            break
        a = alpha
        accepted = False
        halved = False
        for _ in range(max_halvings + 1):
            for m in range(H):
                for j in range(2):
                    trial[m, j] = min(max(U[m, j] - a * bound * g[m, j] / scale, -bound), bound)
            Jt = _cost(x0, trial, hist, denom, sw, phi, lam, hk, wx, wy, dt, w_u, w_b, rect, use_barrier)
            if Jt < J:
                accepted = True
                break
            a *= 0.5
            halved = True
        if not accepted:
            break
        alpha = min(2.0 * a, step_size) if not halved else a
        U[:, :] = trial
        if J - Jt <= tol * J:
            break
        J = _cost_grad(x0, U, hist, denom, sw, phi, lam, hk, wx, wy, dt, w_u, w_b, rect, use_barrier, g)
    return U, -1


def supported(problem) -> bool:
    region = problem.region
    return (
        problem.dynamics == "single_integrator"
        and (region is None or region.kind == "rect")
        and problem.bounds[0] == problem.bounds[1]
    )


def descend_problem(problem, U0, iters):
    """Run the compiled kernel over every agent of an ``MPCProblem``."""
    cfg = problem.config
    basis = problem.basis
    region = problem.region
    use_barrier = region is not None and cfg.barrier_weight > 0
    if region is not None:
        L1, L2 = region.extents
        ml, mr, mb, mt = region.margins
        rect = np.array([ml, L1 - mr, mb, L2 - mt])
    else:
        rect = np.zeros(4)
    out = np.empty_like(U0)
    for i in range(U0.shape[0]):
        U, failed_at = descend(
            problem.x0[i], np.ascontiguousarray(U0[i]), problem.history[i], float(problem.denom[i]),
            float(problem.sample_weight), problem.phi, basis.weights, basis.normalizers, basis._wx, basis._wy,
            float(cfg.dt), float(cfg.control_weight), float(cfg.barrier_weight), rect, use_barrier,
            float(problem.bounds[0]), int(iters), float(cfg.step_size), int(cfg.max_halvings),
            float(cfg.descent_tol),
        )
        if failed_at >= 0:
            from .errors import ControllerError

            raise ControllerError("non-finite cost gradient", iteration=int(failed_at))
        out[i] = U
    return out
