"""Pure numpy implementations of the hot loops.

Same signatures and return conventions as the compiled ``_kernels`` module;
``robustse.kernels`` picks one of the two at import time.
"""
import math

import numpy as np

IMPLEMENTATION = "python"


def jacobi_singular_values(A, tol=1e-15, max_sweeps=100):
    """One-sided (Hestenes) Jacobi; returns (singular values, sweeps).

    Columns are orthogonalised pairwise until no pair has
    ``|a_p . a_q| > tol * |a_p| |a_q|``. Pairs are visited in round-robin
    order so that each round rotates disjoint pairs in one vectorised step.
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[1]
    if k < 2:
        return np.sqrt(np.einsum("ij,ij->j", A, A)), 0
    kk = k + (k % 2)
    W = np.zeros((kk, A.shape[0]))  # row j holds column j (padded with zeros)
    W[:k] = A.T
    ring = list(range(kk))
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        rotated = False
        for _ in range(kk - 1):
            P = np.array(ring[: kk // 2])
            Q = np.array(ring[kk // 2:][::-1])
            ap = W[P]
            aq = W[Q]
            alpha = np.einsum("ij,ij->i", ap, ap)
            beta = np.einsum("ij,ij->i", aq, aq)
            gamma = np.einsum("ij,ij->i", ap, aq)
            act = (gamma != 0.0) & (np.abs(gamma) > tol * np.sqrt(alpha * beta))
            if act.any():
                rotated = True
                g = np.where(act, gamma, 1.0)
                zeta = (beta - alpha) / (2.0 * g)
                t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                t = np.where(act, t, 0.0)
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                W[P] = cs[:, None] * ap - sn[:, None] * aq
                W[Q] = sn[:, None] * ap + cs[:, None] * aq
            ring = [ring[0], ring[-1]] + ring[1:-1]
        if not rotated:
            break
    return np.sqrt(np.einsum("ij,ij->i", W[:k], W[:k])), sweeps


def project_l1(v, radius):
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= radius * (1.0 + 1e-12):
        return v.copy()
    if radius <= 0.0:
        return np.zeros_like(v)
    s = np.sort(a)[::-1]
    cs = np.cumsum(s)
    j = np.arange(1, len(s) + 1)
    hit = np.nonzero(s - (cs - radius) / j > 0)[0]
    # index 0 always qualifies in exact arithmetic; rounding can hide it
    k = hit[-1] if hit.size else 0
    theta = (cs[k] - radius) / (k + 1.0)
    out = np.sign(v) * np.maximum(a - theta, 0.0)
    total = np.abs(out).sum()
    if total > radius:
        # pull a point that rounding left just outside back onto the sphere,
        # so that projecting again is a no-op
        out *= radius / total
    return out


def admm_mixed(Q, y, eps, lam, penalized, rho, max_iters, primal_tol, dual_tol,
               rho_min=1e-4, rho_max=1e4, adapt_every=50):
    """ADMM on ``H x + z + w = y`` with ``H = Q R`` (Q orthonormal columns).

    Returns ``(c, z, w, u, iters, r_rel, s_rel, rho, converged)`` where the
    state estimate is ``x = R^{-1} c``.
    """
    n, m = Q.shape
    w = np.zeros(n)
    u = np.zeros(n)
    z = np.zeros(n)
    c = np.zeros(m)
    ynorm = np.linalg.norm(y)
    r_rel = s_rel = math.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        q = y - w - u
        c = Q.T @ q
        p = Q @ c
        a = q - p
        na = math.sqrt(a @ a)
        if penalized:
            kappa = lam / rho
            z = a * (1.0 - kappa / na) if na > kappa else np.zeros(n)
        else:
            z = a if na <= eps else a * (eps / na)
        v = y - p - z - u
        w_old = w
        w = np.sign(v) * np.maximum(np.abs(v) - 1.0 / rho, 0.0)
        r = p + z + w - y
        u = u + r
        scale = max(np.linalg.norm(p + z), np.linalg.norm(w), ynorm, 1e-300)
        r_rel = np.linalg.norm(r) / scale
        s_rel = rho * np.linalg.norm(w - w_old) / max(rho * np.linalg.norm(u), 1e-300)
        if r_rel <= primal_tol and s_rel <= dual_tol:
            converged = True
            break
        if it % adapt_every == 0:
            if r_rel > 10.0 * s_rel and rho * 2.0 <= rho_max:
                rho *= 2.0
                u *= 0.5
            elif s_rel > 10.0 * r_rel and rho * 0.5 >= rho_min:
                rho *= 0.5
                u *= 2.0
    return c, z, w, u, it, r_rel, s_rel, rho, converged


def _linmax_bounds(A, c, x, u1, rho, l1_cap, l2_cap):
    """Feasible value (lower) and weak-duality value (upper)."""
    ax = np.abs(A @ x).sum()
    nx = np.linalg.norm(x)
    scale = 1.0
    if ax > l1_cap:
        scale = l1_cap / ax
    if nx * scale > l2_cap:
        scale = l2_cap / nx
    xf = x * scale
    mu = rho * u1
    upper = l1_cap * np.max(np.abs(mu), initial=0.0) + l2_cap * np.linalg.norm(c - A.T @ mu)
    return xf, float(c @ xf), float(upper)


def admm_linmax(A, c, Minv, l1_cap, l2_cap, rho, max_iters, tol, gap_tol,
                check_every=10, rho_min=1e-4, rho_max=1e4, adapt_every=50):
    """ADMM for ``max c.x`` s.t. ``|A x|_1 <= l1_cap``, ``|x|_2 <= l2_cap``.

    Splits ``v = A x`` (l1 ball) and ``p = x`` (l2 ball). ``Minv`` is
    ``(A^T A + I)^{-1}``. Returns ``(x_feasible, lower, upper, iters, r_rel,
    s_rel, rho, converged)``; ``upper`` is a valid bound for any iterate.
    """
    nj, m = A.shape
    x = np.zeros(m)
    v = np.zeros(nj)
    p = np.zeros(m)
    u1 = np.zeros(nj)
    u2 = np.zeros(m)
    xf = np.zeros(m)
    lower, upper = 0.0, math.inf
    r_rel = s_rel = math.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        x = Minv @ (c / rho + A.T @ (v - u1) + (p - u2))
        ax = A @ x
        v_old, p_old = v, p
        v = project_l1(ax + u1, l1_cap)
        t = x + u2
        nt = np.linalg.norm(t)
        p = t * (l2_cap / nt) if nt > l2_cap else t
        r1 = ax - v
        r2 = x - p
        u1 = u1 + r1
        u2 = u2 + r2
        r_rel = math.sqrt(r1 @ r1 + r2 @ r2) / max(
            math.sqrt(ax @ ax + x @ x), math.sqrt(v @ v + p @ p), 1e-300)
        dv = v - v_old
        dp = p - p_old
        s_rel = math.sqrt(dv @ dv + dp @ dp) / max(math.sqrt(u1 @ u1 + u2 @ u2), 1e-300)
        if it % check_every == 0 or it == max_iters:
            xf, lower, upper = _linmax_bounds(A, c, x, u1, rho, l1_cap, l2_cap)
            if upper - lower <= gap_tol * max(abs(upper), 1e-300):
                converged = True
                break
            if r_rel <= tol and s_rel <= tol:
                converged = True
                break
        if it % adapt_every == 0:
            if r_rel > 10.0 * s_rel and rho * 2.0 <= rho_max:
                rho *= 2.0
                u1 *= 0.5
                u2 *= 0.5
            elif s_rel > 10.0 * r_rel and rho * 0.5 >= rho_min:
                rho *= 0.5
                u1 *= 2.0
                u2 *= 2.0
    if not converged:
        xf, lower, upper = _linmax_bounds(A, c, x, u1, rho, l1_cap, l2_cap)
    return xf, lower, upper, it, r_rel, s_rel, rho, converged
