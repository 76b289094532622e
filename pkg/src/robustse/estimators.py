"""Decoders for sparse bad data and the least-squares baselines.

Models are duck-typed: anything with ``measure(x)``, ``jacobian(x)``,
``n_measurements`` and ``n_states`` works (``LinearModel`` below and
``power_model.NonlinearModel``).
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

from .cone_solver import solve_mixed
from .errors import (NonConvergence, RankDeficient, RankLoss,
                     SingularJacobian)
from .numerics import check_system, chi_quantile, min_singular_value

RANK_TOL = 1e-10


@dataclass
class DecodeResult:
    x_hat: np.ndarray
    residual: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)  # relative errors, if truth given
    steps: list = field(default_factory=list)  # step norms per iteration
    status: object = None
    converged: bool = True


@dataclass(frozen=True)
class NoiseModel:
    """Dense Gaussian noise plus a random sparse set of gross errors.

    ``sample`` draws the error support (``round(rho * n)`` indices without
    replacement), then the error values, then the dense noise, in that order.
    """
    sigma: float = 0.0
    rho: float = 0.0
    error_sigma: float = 4.0

    def __post_init__(self):
        if self.sigma < 0 or self.error_sigma < 0:
            raise ValueError("standard deviations must be nonnegative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    def n_errors(self, n):
        return int(round(self.rho * n))

    def sample(self, rng, n):
        k = self.n_errors(n)
        support = np.sort(rng.choice(n, size=k, replace=False))
        e = np.zeros(n)
        e[support] = self.error_sigma * rng.standard_normal(k)
        v = self.sigma * rng.standard_normal(n)
        return v, e, support


def chi_eps(n, sigma, p=0.98):
    """Noise radius containing ``||v||_2`` with probability ``p``."""
    return chi_quantile(n, p) * sigma if sigma > 0 else 0.0


def relative_error(x_hat, x):
    return float(np.linalg.norm(np.asarray(x_hat) - x) / np.linalg.norm(x))


class LinearModel:
    def __init__(self, H):
        self.H = np.asarray(H, dtype=float)

    @property
    def n_measurements(self):
        return self.H.shape[0]

    @property
    def n_states(self):
        return self.H.shape[1]

    def measure(self, x):
        return self.H @ x

    def jacobian(self, x):
        return self.H


class FunctionModel:
    """Model from plain callables; used for small oracle experiments."""

    def __init__(self, h, jac, n, m):
        self._h, self._jac = h, jac
        self.n_measurements, self.n_states = n, m

    def measure(self, x):
        return np.asarray(self._h(x), dtype=float)

    def jacobian(self, x):
        return np.asarray(self._jac(x), dtype=float)


# ---------------------------------------------------------------- l1 decoders

def decode_linear(y, H, eps, opts=None, x_true=None):
    """Mixed l1/l2 decoding of ``y = H x + e + v``."""
    y, H = check_system(y, H)
    x_hat, _, status = solve_mixed(y, H, eps, opts)
    trace = [relative_error(x_hat, x_true)] if x_true is not None else []
    return DecodeResult(x_hat, y - H @ x_hat, 1, trace, [], status)


def decode_iterative(model, y, eps, x0, max_outer=25, tol=1e-9, opts=None, x_true=None):
    """Iterative linearisation: solve the mixed program for the step at each
    local Jacobian until the step norm drops below ``tol``.

    Raises ``SingularJacobian`` on a rank-deficient Jacobian and
    ``NonConvergence`` (with the ``DecodeResult`` attached as ``result``)
    when ``max_outer`` steps are not enough.
    """
    y = np.asarray(y, dtype=float)
    x = np.array(x0, dtype=float)
    trace, steps, statuses = [], [], []
    for it in range(1, max_outer + 1):
        dy = y - model.measure(x)
        J = model.jacobian(x)
        try:
            dx, _, st = solve_mixed(dy, J, eps, opts)
        except RankDeficient as exc:
            raise SingularJacobian(f"outer iteration {it}: {exc}") from exc
        except NonConvergence as exc:
            res = DecodeResult(x, dy, it - 1, trace, steps, exc.status, False)
            raise NonConvergence(f"outer iteration {it}: {exc}", exc.status, res) from exc
        x = x + dx
        step = float(np.linalg.norm(dx))
        steps.append(step)
        statuses.append(st)
        if x_true is not None:
            trace.append(relative_error(x, x_true))
        if step < tol:
            return DecodeResult(x, y - model.measure(x), it, trace, steps, statuses, True)
    res = DecodeResult(x, y - model.measure(x), max_outer, trace, steps, statuses, False)
    raise NonConvergence(f"no convergence in {max_outer} outer iterations "
                         f"(last step {steps[-1]:.3e})", None, res)


# ---------------------------------------------------------------- least squares

def _rows_mask(n, known_bad):
    keep = np.ones(n, dtype=bool)
    if known_bad is not None:
        keep[np.asarray(list(known_bad), dtype=int)] = False
    return keep


def wls_estimate(model, y, weights=None, x0=None, known_bad=None, tol=1e-10,
                 max_iter=50, x_true=None):
    """Gauss-Newton weighted least squares, rows in ``known_bad`` dropped.

    A step is halved (at most 10 times) until the weighted residual does
    not increase; if no such step exists the current point is returned as
    converged.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise ValueError("weights must be positive with one entry per measurement")
    keep = _rows_mask(n, known_bad)
    x = np.zeros(model.n_states) if x0 is None else np.array(x0, dtype=float)
    sw = np.sqrt(w[keep])

    def cost(z):
        r = (y - model.measure(z))[keep]
        return float(np.sum(w[keep] * r * r))

    trace, steps = [], []
    c0 = cost(x)
    for it in range(1, max_iter + 1):
        r = (y - model.measure(x))[keep]
        A = model.jacobian(x)[keep] * sw[:, None]
        if A.shape[0] < A.shape[1] or min_singular_value(A) < RANK_TOL:
            raise SingularJacobian("weighted Jacobian of the kept rows is rank deficient")
        dx, *_ = np.linalg.lstsq(A, sw * r, rcond=None)
        t, accepted = 1.0, False
        for _ in range(11):
            c1 = cost(x + t * dx)
            if c1 <= c0:
                accepted = True
                break
            t *= 0.5
        if accepted:
            x = x + t * dx
            c0 = c1
        step = float(np.linalg.norm(t * dx)) if accepted else 0.0
        steps.append(step)
        if x_true is not None:
            trace.append(relative_error(x, x_true))
        if step < tol:
            return DecodeResult(x, y - model.measure(x), it, trace, steps, "converged", True)
    res = DecodeResult(x, y - model.measure(x), max_iter, trace, steps, "max_iter", False)
    raise NonConvergence(f"Gauss-Newton did not converge in {max_iter} iterations", None, res)


def normalized_residuals(J, r, sigma):
    """Residuals scaled by their standard deviation under a WLS fit.

    Residual covariance is ``Omega = R - J G^{-1} J^T`` with ``R = diag(sigma^2)``
    and ``G = J^T R^{-1} J``. Rows with (numerically) zero variance are
    critical measurements and get ``nan``.
    """
    s2 = np.asarray(sigma, dtype=float) ** 2
    A = J / np.sqrt(s2)[:, None]
    G = A.T @ A
    K = np.linalg.solve(G, J.T)  # G^{-1} J^T
    omega = s2 - np.einsum("ij,ji->i", J, K)
    out = np.full(len(r), np.nan)
    ok = omega > 1e-10 * s2
    out[ok] = np.abs(r[ok]) / np.sqrt(omega[ok])
    return out


def bhat_test_estimate(model, y, sigma, threshold=3.0, x0=None, x_true=None,
                       sigma_floor=1e-6):
    """Largest-normalised-residual test with repeated deletion.

    Fit WLS, delete the measurement with the largest normalised residual
    if it exceeds ``threshold``, refit, repeat. Stops when every testable
    residual is below the threshold, when no testable measurement is left,
    or when deleting the worst one would leave the Jacobian rank deficient.
    Returns ``(DecodeResult, removed)`` with ``removed`` in deletion order.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    y = np.asarray(y, dtype=float)
    n = len(y)
    s = max(float(sigma), sigma_floor)
    sig = np.full(n, s)
    w = 1.0 / sig**2
    removed = []
    x = np.zeros(model.n_states) if x0 is None else np.array(x0, dtype=float)
    total_it = 0
    while True:
        try:
            res = wls_estimate(model, y, w, x, known_bad=removed)
        except SingularJacobian as exc:
            raise RankLoss(f"after removing {removed}: {exc}") from exc
        except NonConvergence as exc:
            res = exc.result
        total_it += res.iterations
        x = res.x_hat
        keep = _rows_mask(n, removed)
        rows = np.nonzero(keep)[0]
        J = model.jacobian(x)[keep]
        rn = normalized_residuals(J, res.residual[keep], sig[keep])
        reason = None
        if np.all(np.isnan(rn)):
            reason = "no_redundancy"
        else:
            worst = int(np.nanargmax(rn))
            if rn[worst] <= threshold:
                reason = "passed"
            else:
                J2 = np.delete(J, worst, axis=0)
                if J2.shape[0] < J2.shape[1] or min_singular_value(J2) < RANK_TOL:
                    reason = "rank_limited"
                else:
                    removed.append(int(rows[worst]))
        if reason is not None:
            trace = [relative_error(x, x_true)] if x_true is not None else []
            return DecodeResult(x, y - model.measure(x), total_it, trace, [],
                                reason, res.converged), removed


# ---------------------------------------------------------------- oracles

def l0_decode_bruteforce(model, y, k_max, candidate_states, zero_tol=1e-9):
    """Candidate state with the fewest nonzero residuals (at most ``k_max``).

    Ties are broken by the l2 norm of the residual, then by candidate order.
    Returns ``None`` when no candidate explains ``y`` with at most ``k_max``
    nonzero residuals.
    """
    y = np.asarray(y, dtype=float)
    cands = [np.asarray(c, dtype=float) for c in candidate_states]
    if len(y) > 8 or len(cands) > 10**4:
        raise ValueError("brute-force oracle is limited to n <= 8 and 10^4 candidates")
    scale = max(1.0, float(np.abs(y).max(initial=0.0)))
    best, best_key = None, None
    for pos, c in enumerate(cands):
        r = y - model.measure(c)
        support = int(np.count_nonzero(np.abs(r) > zero_tol * scale))
        if support > k_max:
            continue
        key = (support, float(np.linalg.norm(r)), pos)
        if best_key is None or key < best_key:
            best, best_key = c, key
    return best


def check_l1_condition(model, x, x_alt, K):
    """``||d_K||_1 < ||d_Kc||_1`` for ``d = h(x) - h(x_alt)`` (1e-12 slack)."""
    d = np.abs(model.measure(np.asarray(x, dtype=float))
               - model.measure(np.asarray(x_alt, dtype=float)))
    mask = np.zeros(len(d), dtype=bool)
    idx = list(K)
    if idx:
        mask[np.asarray(idx, dtype=int)] = True
    return bool(d[mask].sum() + 1e-12 < d[~mask].sum())


def supports(n, k):
    """All supports of size at most ``k`` (for tiny exhaustive checks)."""
    for size in range(k + 1):
        yield from itertools.combinations(range(n), size)
