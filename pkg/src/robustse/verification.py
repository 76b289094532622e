"""Certificates for the iterative decoder near a given state.

For a Jacobian ``H0`` and a row-wise perturbation radius ``eps``, each row
gets a bound ``alpha_i`` on how much of ``||H' x||_1`` that single row can
carry, for every ``H'`` within ``eps`` of ``H0``. Summing the ``k`` largest
``alpha_i / (1 + alpha_i)`` gives the balancedness constant ``C`` for
supports of size ``k``, and ``C`` together with ``sigma_min(H0)`` gives the
contraction factor ``beta``.

The per-row problem has one absolute value in the objective; splitting it
by sign gives two linear-objective cone programs, so no semidefinite
relaxation is needed.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cone_solver import linmax_operator, solve_linmax
from .errors import DegenerateRelaxation, NoCertificate
from .numerics import as_matrix, min_singular_value

NOTES = (
    "row bounds use two sign-split linear-objective cone programs",
    "row bounds report the certified upper value of each program",
    "beta uses sigma_min(H0)/sqrt(n) - n*eps in the denominator unless use_sqrt_m",
)


@dataclass
class VerificationReport:
    eps_jacobian: float
    alphas: np.ndarray
    C_of_k: dict
    beta_of_k: dict
    certified_k: object  # int or None
    sigma_min: float = math.nan
    use_sqrt_m: bool = False
    notes: tuple = field(default=NOTES)


def row_alpha_bound(H0, eps, i, opts=None):
    """Upper bound on ``|(H'x)_i| / ||(H'x)_rest||_1`` over all ``H'`` whose
    rows are within ``eps`` (in l2) of those of ``H0``."""
    H0 = as_matrix(H0, "H0")
    n = H0.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"row {i} out of range for {n} rows")
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    J = np.delete(np.arange(n), i)
    smin = min_singular_value(H0[J]) if len(J) >= H0.shape[1] else 0.0
    slack = smin - (n - 1) * eps
    if not slack > 0:
        raise DegenerateRelaxation(
            f"row {i}: sigma_min of the other rows is {smin:.3e}, "
            f"needs to exceed (n-1)*eps = {(n - 1) * eps:.3e}")
    t = 1.0 / slack
    l1_cap = 1.0 + (n - 1) * eps * t
    op = linmax_operator(H0, J)
    best = -math.inf
    for sign in (1.0, -1.0):
        _, _, status = solve_linmax(sign * H0[i], H0, J, l1_cap, t, opts, operator=op)
        best = max(best, status.dual_bound)
    return best + eps * t


def _row_job(args):
    H0, eps, i = args
    return row_alpha_bound(H0, eps, i)


def row_alpha_bounds(H0, eps, workers=None):
    """All row bounds; ``workers > 1`` spreads the rows over processes."""
    H0 = as_matrix(H0, "H0")
    jobs = [(H0, eps, i) for i in range(H0.shape[0])]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(_row_job, jobs, chunksize=8)))
    return np.array([_row_job(j) for j in jobs])


def balancedness_from_alphas(alphas, k):
    """C with ``1 / (C + 1)`` equal to the sum of the ``k`` largest
    ``alpha_i / (1 + alpha_i)``. May return a value <= 1."""
    a = np.asarray(alphas, dtype=float)
    if a.ndim != 1 or np.any(a < 0):
        raise ValueError("alphas must be a vector of nonnegative numbers")
    if not 1 <= k <= len(a):
        raise ValueError(f"k must lie in [1, {len(a)}], got {k}")
    frac = np.sort(a / (1.0 + a))[::-1]
    total = float(frac[:k].sum())
    if total >= 1.0:
        raise ValueError(f"sum of the {k} largest fractions is {total:.4g} >= 1")
    if total == 0.0:
        return math.inf
    return 1.0 / total - 1.0


def almost_euclidean_lower_bound(alphas):
    """Certified alpha with ``||w||_1 >= alpha sqrt(n) ||w||_2`` on range(H).

    Every ``|w_i| <= a ||w||_1`` with ``a = max alpha_i / (1 + alpha_i)``, so
    ``||w||_2^2 <= ||w||_inf ||w||_1 <= a ||w||_1^2``.
    """
    al = np.asarray(alphas, dtype=float)
    a = float(np.max(al / (1.0 + al)))
    return min(1.0, 1.0 / math.sqrt(len(al) * a)) if a > 0 else 1.0


def contraction_beta(C, sigma_min, n, eps, m=None):
    """``2(C+1)/(C-1) * 2 n eps / (sigma_min / sqrt(d) - n eps)`` with
    ``d = n``, or ``d = m`` when ``m`` is given."""
    if not C > 1.0:
        raise NoCertificate(f"C = {C:.4g} is not above 1")
    d = n if m is None else m
    denom = sigma_min / math.sqrt(d) - n * eps
    if not denom > 0:
        raise NoCertificate(f"denominator {denom:.3e} is not positive")
    if eps == 0:
        return 0.0
    ratio = 1.0 if math.isinf(C) else (C + 1.0) / (C - 1.0)
    return 2.0 * ratio * 2.0 * n * eps / denom


def convergence_condition(H0, eps, k, alphas=None, use_sqrt_m=False):
    """``(C, beta, passed)`` for supports of size ``k``.

    Raises ``NoCertificate`` when C <= 1 or the denominator is not positive.
    """
    H0 = as_matrix(H0, "H0")
    n, m = H0.shape
    if alphas is None:
        alphas = row_alpha_bounds(H0, eps)
    C = balancedness_from_alphas(alphas, k)
    beta = contraction_beta(C, min_singular_value(H0), n, eps, m if use_sqrt_m else None)
    return C, beta, beta < 1.0


def certify_region(model, x0, eps, k_max=None, use_sqrt_m=False, workers=None):
    """Run the row bounds at ``H0 = jacobian(x0)`` and tabulate C and beta.

    ``k`` runs from 1 to ``k_max`` (default: as long as C stays defined).
    Values of k without a certificate get ``beta = inf``.
    """
    H0 = as_matrix(model.jacobian(np.asarray(x0, dtype=float)), "jacobian")
    n, m = H0.shape
    alphas = row_alpha_bounds(H0, eps, workers)
    smin = min_singular_value(H0)
    k_max = n if k_max is None else min(int(k_max), n)
    C_of_k, beta_of_k = {}, {}
    certified = None
    for k in range(1, k_max + 1):
        try:
            C = balancedness_from_alphas(alphas, k)
        except ValueError:
            break
        C_of_k[k] = C
        try:
            beta = contraction_beta(C, smin, n, eps, m if use_sqrt_m else None)
        except NoCertificate:
            beta = math.inf
        beta_of_k[k] = beta
        if beta < 1.0:
            certified = k
    return VerificationReport(float(eps), alphas, C_of_k, beta_of_k, certified,
                              float(smin), bool(use_sqrt_m))
