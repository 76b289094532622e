"""Proximal-splitting solvers for the decoding cone programs.

Three problems are handled:

* ``min ||y - Hx - z||_1  s.t. ||z||_2 <= eps``      (``solve_mixed``)
* ``min ||y - Hx - z||_1 + lam ||z||_2``             (``solve_penalized``)
* ``max c.x  s.t. ||(Ax)_J||_1 <= a, ||x||_2 <= t``  (``solve_linmax``)

The first two use ADMM on the split ``Hx + z + w = y`` with the thin QR
factor of ``H`` cached, so the x-update is a projection onto range(H). Every
solve also builds a dual-feasible point, which gives a certified lower bound
on the optimum that is reported as ``status.dual_bound``.

With ``eps = 0`` the mixed program is the l1 regression LP. ADMM converges
only linearly there and stalls on the degenerate LPs produced by power-flow
Jacobians, so ``method="auto"`` hands that case to the HiGHS simplex in
``scipy.optimize.linprog``; ``method="admm"`` forces the splitting path.

``l1_regression_lp_oracle`` is an exact rational simplex used only to check
the ADMM solvers on tiny instances.
"""
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import linprog

from . import kernels
from .errors import BadShape, NonConvergence, RankDeficient
from .numerics import as_matrix, as_vector, check_system

RANK_TOL = 1e-10


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 20000
    primal_tol: float = 1e-8
    dual_tol: float = 1e-8
    penalty: float = 1.0
    gap_tol: float = 1e-7  # relative duality gap accepted by solve_linmax
    polish: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.primal_tol > 0 and self.dual_tol > 0 and self.gap_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 1e-4 <= self.penalty <= 1e4:
            raise ValueError("penalty must lie in [1e-4, 1e4]")


@dataclass
class SolveStatus:
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    dual_bound: float = float("nan")
    penalty: float = float("nan")
    polished: bool = False
    slacks: tuple = ()

    @property
    def gap(self):
        return self.objective - self.dual_bound


DEFAULT_OPTIONS = SolverOptions()


# ---------------------------------------------------------------- prox operators

def project_l2_ball(v, radius):
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv <= radius * (1.0 + 1e-12):
        return v.copy()
    return v * (radius / nv)


def project_l1_ball(v, radius):
    """Euclidean projection onto the l1 ball (sort-and-shift)."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return kernels.project_l1(np.asarray(v, dtype=float), float(radius))


def soft_threshold(v, t):
    """Prox of ``t ||.||_1``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# ---------------------------------------------------------------- helpers

def _factor(H):
    """Thin QR of ``H`` plus its singular values (full-rank check)."""
    n, m = H.shape
    if n < m:
        raise RankDeficient(f"H with shape {H.shape} cannot have full column rank")
    Q, R = np.linalg.qr(H)
    sv, _ = kernels.jacobi_singular_values(R)
    smin = float(sv.min()) if m else 0.0
    if smin <= RANK_TOL:
        raise RankDeficient(f"H is rank deficient (min singular value {smin:.3e})")
    return Q, R


def _dual_point(s, Q, eps_or_lam, penalized):
    """Project ``s`` onto null(H^T) and scale it into the dual feasible set."""
    s = s - Q @ (Q.T @ s)
    scale = max(1.0, np.max(np.abs(s), initial=0.0))
    if penalized:
        ns = np.linalg.norm(s)
        if ns > 0:
            scale = max(scale, ns / eps_or_lam) if eps_or_lam > 0 else np.inf
    return s / scale if np.isfinite(scale) else np.zeros_like(s)


def _l1_polish(y, H, x):
    """Try exact vertex solutions of the l1 regression near ``x``.

    Candidates are least-squares fits on (a) the rows with negligible residual
    and (b) the ``m`` rows with the smallest residual. The best candidate is
    returned only when it does not increase the objective.
    """
    n, m = H.shape
    r = np.abs(y - H @ x)
    best_x, best = x, r.sum()
    scale = max(np.abs(y).max(initial=0.0), 1.0)
    order = np.argsort(r, kind="stable")
    candidates = [np.nonzero(r <= 1e-6 * scale)[0], order[:m]]
    for rows in candidates:
        if len(rows) < m:
            continue
        try:
            xc, *_ = np.linalg.lstsq(H[rows], y[rows], rcond=None)
        except np.linalg.LinAlgError:
            continue
        val = np.abs(y - H @ xc).sum()
        if val <= best:
            best_x, best = xc, val
    return best_x, best


def _run_mixed(y, H, param, penalized, opts):
    y, H = check_system(y, H)
    opts = opts or DEFAULT_OPTIONS
    n, m = H.shape
    Q, R = _factor(H)
    c, z, w, u, it, r_rel, s_rel, rho, conv = kernels.admm_mixed(
        Q, y, 0.0 if penalized else param, param if penalized else 0.0,
        penalized, opts.penalty, opts.max_iters, opts.primal_tol, opts.dual_tol)
    # x from the range component; z keeps only its null(H^T) part, which
    # leaves the residual y - Hx - z unchanged in value
    x = solve_triangular(R, c)
    z = z - Q @ (Q.T @ z)
    polished = False
    resid = y - H @ x - z
    obj = np.abs(resid).sum() + (param * np.linalg.norm(z) if penalized else 0.0)
    if opts.polish and not penalized and param == 0.0:
        xp, val = _l1_polish(y, H, x)
        if val <= obj:
            polished = val < obj
            x, obj = xp, val
            z = np.zeros(n)
    s = _dual_point(-rho * u, Q, param, penalized)
    dual = float(s @ y) - (0.0 if penalized else param * np.linalg.norm(s))
    status = SolveStatus(bool(conv), int(it), float(r_rel), float(s_rel), float(obj),
                         dual_bound=dual, penalty=float(rho), polished=polished)
    if not conv:
        raise NonConvergence(
            f"ADMM did not converge in {opts.max_iters} iterations "
            f"(primal {r_rel:.2e}, dual {s_rel:.2e})",
            status=status, result=(x, z, status))
    return x, z, status


def _ls_inside(y, H, eps):
    """Least-squares point when its residual fits in the eps ball.

    The optimal set is then the whole ellipsoid ``||y - Hx|| <= eps`` (value
    0); its centre is returned, which is also where an interior-point method
    would end up. ``None`` when the residual is too large.
    """
    y, H = check_system(y, H)
    Q, R = _factor(H)
    c = Q.T @ y
    z = y - Q @ c
    if np.linalg.norm(z) > eps:
        return None
    x = solve_triangular(R, c)
    status = SolveStatus(True, 0, 0.0, 0.0, 0.0, dual_bound=0.0)
    return x, z, status


def _run_lp(y, H, opts):
    """Exact l1 regression through HiGHS, followed by the vertex polish."""
    y, H = check_system(y, H)
    opts = opts or DEFAULT_OPTIONS
    n, m = H.shape
    Q, _ = _factor(H)
    cost = np.concatenate([np.zeros(m), np.ones(2 * n)])
    A = np.hstack([H, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * m + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        status = SolveStatus(False, int(getattr(res, "nit", 0)), float("nan"),
                             float("nan"), float("nan"))
        raise NonConvergence(f"LP solve failed: {res.message}", status=status)
    x = res.x[:m]
    obj = float(np.abs(y - H @ x).sum())
    polished = False
    if opts.polish:
        xp, val = _l1_polish(y, H, x)
        if val <= obj:
            polished = val < obj
            x, obj = xp, val
    s = _dual_point(np.asarray(res.eqlin.marginals, dtype=float), Q, 0.0, False)
    dual = float(s @ y)
    rel_gap = max(obj - dual, 0.0) / max(abs(obj), 1.0)
    status = SolveStatus(True, int(res.nit), 0.0, rel_gap, obj, dual_bound=dual,
                         polished=polished)
    return x, np.zeros(n), status


def solve_mixed(y, H, eps, opts=None, method="auto"):
    """``min ||y - Hx - z||_1`` subject to ``||z||_2 <= eps``.

    Returns ``(x_hat, z_hat, status)``. Raises ``RankDeficient`` when ``H``
    does not have full column rank and ``NonConvergence`` after
    ``opts.max_iters`` iterations (the last iterate is on ``exc.result``).
    ``method`` is ``"auto"`` (LP solver when ``eps == 0``; the least-squares
    point when its residual fits in the ball; ADMM otherwise), ``"admm"`` or
    ``"lp"``.
    """
    if not eps >= 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if method not in ("auto", "admm", "lp"):
        raise ValueError(f"unknown method {method!r}")
    if method == "lp" and eps != 0:
        raise ValueError("the LP path only handles eps = 0")
    if eps == 0 and method in ("auto", "lp"):
        return _run_lp(y, H, opts)
    if eps > 0 and method == "auto":
        inside = _ls_inside(y, H, float(eps))
        if inside is not None:
            return inside
    return _run_mixed(y, H, float(eps), False, opts)


def solve_penalized(y, H, lam, opts=None):
    """``min ||y - Hx - z||_1 + lam ||z||_2``."""
    if not lam >= 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    return _run_mixed(y, H, float(lam), True, opts)


def mixed_objective(y, H, x, z):
    return float(np.abs(np.asarray(y) - np.asarray(H) @ x - z).sum())


# ---------------------------------------------------------------- linear max

def _row_index(J, n):
    J = np.asarray(J)
    if J.dtype == bool:
        if J.shape != (n,):
            raise BadShape(f"mask has shape {J.shape}, expected ({n},)")
        J = np.nonzero(J)[0]
    J = J.astype(int).ravel()
    if J.size == 0:
        raise ValueError("row index set J must be nonempty")
    if J.min() < 0 or J.max() >= n:
        raise BadShape(f"row index out of range for {n} rows")
    return J


def linmax_operator(A, J):
    """Precompute ``(A_J, (A_J^T A_J + I)^{-1})`` for repeated solves."""
    A = as_matrix(A, "A")
    AJ = np.ascontiguousarray(A[_row_index(J, A.shape[0])])
    m = A.shape[1]
    Minv = cho_solve(cho_factor(AJ.T @ AJ + np.eye(m)), np.eye(m))
    return AJ, Minv


def _linmax_box_lp(AJ, c, l1_cap, l2_cap):
    """Solve the relaxation with the ball replaced by its bounding box.

    The box contains the ball, so the LP optimum bounds the true optimum from
    above; when the LP maximiser also lies in the ball it is optimal for the
    original problem. Returns ``None`` when that is not the case.
    """
    nj, m = AJ.shape
    cost = np.concatenate([-c, np.zeros(2 * nj)])
    A_eq = np.hstack([AJ, -np.eye(nj), np.eye(nj)])
    A_ub = np.concatenate([np.zeros(m), np.ones(2 * nj)])[None, :]
    bounds = [(-l2_cap, l2_cap)] * m + [(0, None)] * (2 * nj)
    res = linprog(cost, A_ub=A_ub, b_ub=[l1_cap], A_eq=A_eq, b_eq=np.zeros(nj),
                  bounds=bounds, method="highs")
    if res.status != 0:
        return None
    x = res.x[:m]
    ax = np.abs(AJ @ x).sum()
    nx = np.linalg.norm(x)
    if nx > l2_cap * (1.0 + 1e-9):
        return None
    scale = min(1.0, l1_cap / ax if ax > 0 else 1.0, l2_cap / nx if nx > 0 else 1.0)
    xf = x * scale
    lower = float(c @ xf)
    upper = max(float(-res.fun), lower)
    slacks = (float(l1_cap - np.abs(AJ @ xf).sum()), float(l2_cap - np.linalg.norm(xf)))
    status = SolveStatus(True, int(res.nit), 0.0, 0.0, lower, dual_bound=upper,
                         slacks=slacks)
    return xf, lower, status


def solve_linmax(c, A, J, l1_cap, l2_cap, opts=None, operator=None, method="auto"):
    """``max c.x`` subject to ``||(Ax)_J||_1 <= l1_cap`` and ``||x||_2 <= l2_cap``.

    Returns ``(x_star, value, status)``. ``x_star`` is always feasible and
    ``value = c.x_star``; ``status.dual_bound`` is a rigorous upper bound on
    the optimum and ``status.slacks`` holds the two constraint slacks. Passing
    a precomputed ``operator`` from ``linmax_operator`` skips the setup.

    ``method="auto"`` first solves the LP obtained by relaxing the ball to a
    box and accepts it when the maximiser lands inside the ball (often the
    case when the ball constraint is implied by the l1 one); otherwise, or
    with ``method="admm"``, the splitting solver runs.
    """
    opts = opts or DEFAULT_OPTIONS
    if not (l1_cap > 0 and l2_cap > 0):
        raise ValueError("caps must be positive")
    A = as_matrix(A, "A")
    c = as_vector(c, "c")
    if c.shape[0] != A.shape[1]:
        raise BadShape(f"c has shape {c.shape} but A has shape {A.shape}")
    AJ, Minv = operator if operator is not None else linmax_operator(A, J)
    if method not in ("auto", "admm"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        hit = _linmax_box_lp(AJ, c, float(l1_cap), float(l2_cap))
        if hit is not None:
            return hit
    xf, lower, upper, it, r_rel, s_rel, rho, conv = kernels.admm_linmax(
        AJ, c, Minv, float(l1_cap), float(l2_cap), opts.penalty, opts.max_iters,
        min(opts.primal_tol, opts.dual_tol), opts.gap_tol)
    slacks = (float(l1_cap - np.abs(AJ @ xf).sum()), float(l2_cap - np.linalg.norm(xf)))
    status = SolveStatus(bool(conv), int(it), float(r_rel), float(s_rel), float(lower),
                         dual_bound=float(upper), penalty=float(rho), slacks=slacks)
    if not conv:
        raise NonConvergence(
            f"linmax ADMM did not converge in {opts.max_iters} iterations "
            f"(gap {upper - lower:.2e})", status=status, result=(xf, lower, status))
    return xf, float(lower), status


# ---------------------------------------------------------------- LP oracle

def _simplex(A, b, c):
    """Exact two-phase simplex for ``min c.x  s.t.  A x = b, x >= 0``.

    Entries are ``Fraction``; Bland's rule picks entering and leaving
    variables, which rules out cycling.
    """
    rows, cols = len(A), len(c)
    T = []
    for i in range(rows):
        sign = -1 if b[i] < 0 else 1
        T.append([sign * a for a in A[i]] + [Fraction(int(k == i)) for k in range(rows)]
                 + [sign * b[i]])
    basis = [cols + i for i in range(rows)]
    width = cols + rows

    def pivot(r, k):
        piv = T[r][k]
        T[r] = [v / piv for v in T[r]]
        for i in range(rows):
            if i != r and T[i][k] != 0:
                f = T[i][k]
                Ti, Tr = T[i], T[r]
                T[i] = [a - f * br for a, br in zip(Ti, Tr)]
        basis[r] = k

    def run(cost, allowed):
        while True:
            enter = None
            for k in range(width):
                if k in allowed and k not in basis:
                    red = cost[k] - sum(cost[basis[i]] * T[i][k] for i in range(rows))
                    if red < 0:
                        enter = k
                        break
            if enter is None:
                return
            best = None
            for i in range(rows):
                if T[i][enter] > 0:
                    ratio = T[i][-1] / T[i][enter]
                    if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                        best = (ratio, i)
            if best is None:
                raise RuntimeError("LP is unbounded")
            pivot(best[1], enter)

    phase1 = [Fraction(0)] * cols + [Fraction(1)] * rows
    run(phase1, set(range(width)))
    if any(T[i][-1] != 0 for i in range(rows) if basis[i] >= cols):
        raise RuntimeError("LP is infeasible")
    # drive remaining (zero-valued) artificials out of the basis
    for i in range(rows):
        if basis[i] >= cols:
            for k in range(cols):
                if T[i][k] != 0 and k not in basis:
                    pivot(i, k)
                    break
    cost = list(c) + [Fraction(0)] * rows
    run(cost, set(range(cols)))
    x = [Fraction(0)] * cols
    for i in range(rows):
        if basis[i] < cols:
            x[basis[i]] = T[i][-1]
    return x, sum(ci * xi for ci, xi in zip(c, x))


def l1_regression_lp_oracle(y, H):
    """Exact ``min_x ||y - Hx||_1`` by rational simplex (n <= 30, m <= 8).

    The LP splits both the state ``x = xp - xm`` and the residual
    ``y - Hx = rp - rm`` into nonnegative parts and minimises
    ``sum(rp + rm)``. Float inputs are converted to exact fractions, so the
    only rounding is the final conversion back to float.
    """
    y, H = check_system(y, H)
    n, m = H.shape
    if n > 30 or m > 8:
        raise ValueError(f"LP oracle is limited to n <= 30, m <= 8; got {H.shape}")
    A = []
    for i in range(n):
        row = [Fraction(0)] * (2 * m + 2 * n)
        for j in range(m):
            h = Fraction(float(H[i, j]))
            row[j] = h
            row[m + j] = -h
        row[2 * m + i] = Fraction(1)
        row[2 * m + n + i] = Fraction(-1)
        A.append(row)
    b = [Fraction(float(v)) for v in y]
    c = [Fraction(0)] * (2 * m) + [Fraction(1)] * (2 * n)
    sol, obj = _simplex(A, b, c)
    x = np.array([float(sol[j] - sol[m + j]) for j in range(m)])
    return x, float(obj)
