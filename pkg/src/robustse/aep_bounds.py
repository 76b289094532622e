"""Almost-Euclidean constants and the recovery bounds built from them.

``alpha_star(delta)`` is the largest alpha for which the Gaussian-width
bound certifies that a random subspace of dimension ``delta * n`` satisfies
``||w||_1 >= alpha sqrt(n) ||w||_2``. From alpha and the sparsity ratio
``mu = k / n`` follow the balancedness constant C and the error-bound
coefficient varpi.
"""
import math
from dataclasses import dataclass

from .errors import NoCertificate
from .numerics import erfc, minimize_unimodal

U_MAX = 20.0  # first term of the width bound is < 1e-40 beyond u = 10
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class NoRecovery:
    """Typed outcome for parameters where no C > 1 exists.

    ``C`` is the value the formula produced (0 or a number <= 1).
    """
    C: float

    def __bool__(self):
        return False


@dataclass(frozen=True)
class BoundReport:
    delta: float
    alpha_star: float
    mu: float
    C: float
    varpi: float
    sparsity_threshold: float


def width_bound(alpha, u2):
    """Normalised Gaussian-width bound as a function of the threshold ``u2``."""
    if u2 < 0:
        raise ValueError(f"u2 must be nonnegative, got {u2}")
    rad = (u2 * u2 + 1.0) * erfc(u2 / math.sqrt(2.0)) \
        - SQRT_2_OVER_PI * u2 * math.exp(-u2 * u2 / 2.0)
    return math.sqrt(max(rad, 0.0)) + alpha * u2


def g_of_alpha(alpha, tol=1e-10):
    """Minimum of ``width_bound(alpha, .)`` over [0, U_MAX]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    _, val = minimize_unimodal(lambda u: width_bound(alpha, u), 0.0, U_MAX, tol)
    return val


def alpha_star(delta, tol=1e-9, max_iter=60):
    """Largest alpha with ``g(alpha) < sqrt(1 - delta)``, by bisection.

    g is increasing with g(0) = 0 and g(1) = 1, so [0, 1] always brackets the
    crossing. The lower end of the final bracket is returned.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    target = math.sqrt(1.0 - delta)
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if g_of_alpha(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def _quadratic(mu, alpha):
    a = 1.0 / alpha**2 - 1.0 / (1.0 - mu)
    b = 2.0 / alpha**2
    c = 1.0 / alpha**2 - 1.0 / mu
    return a, b, c


def balancedness_q(C, mu, alpha):
    """``(C+1)^2/alpha^2 - C^2/(1-mu) - 1/mu``; nonnegative iff C is admissible."""
    return (C + 1.0) ** 2 / alpha**2 - C * C / (1.0 - mu) - 1.0 / mu


def balancedness_C(mu, alpha):
    """Smallest C >= 0 with ``q(C) >= 0``, or ``NoRecovery`` when it is <= 1."""
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not alpha * alpha < 1.0 - mu:
        raise ValueError(f"need alpha^2 < 1 - mu, got alpha={alpha}, mu={mu}")
    a, b, c = _quadratic(mu, alpha)
    if c >= 0.0:
        C = 0.0
    else:
        # larger root, in the form free of cancellation (b > 0, c < 0)
        C = -2.0 * c / (b + math.sqrt(b * b - 4.0 * a * c))
    if C <= 1.0:
        return NoRecovery(C)
    return C


def sparsity_threshold(alpha):
    """The mu at which C(mu, alpha) equals 1: ``mu (1 - mu) = alpha^2 / 4``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return 0.5 * (1.0 - math.sqrt(1.0 - alpha * alpha))


def _varpi_from(C, alpha, delta):
    return 2.0 * (C + 1.0) / ((1.0 - math.sqrt(delta)) * alpha * (C - 1.0))


def varpi(delta, mu, alpha=None):
    """Error-bound coefficient with ``sigma_min / sqrt(n)`` replaced by
    ``1 - sqrt(delta)``, so that ``||x - x_hat|| <= varpi * eps / sqrt(n)``."""
    if alpha is None:
        alpha = alpha_star(delta)
    C = balancedness_C(mu, alpha)
    if isinstance(C, NoRecovery):
        raise NoCertificate(f"no C > 1 at delta={delta}, mu={mu} (C={C.C:.4g})")
    return _varpi_from(C, alpha, delta)


def error_bound(C, alpha, sigma_min, eps):
    """``2 (C+1) eps / (sigma_min alpha (C-1))``."""
    if not C > 1.0:
        raise NoCertificate(f"error bound needs C > 1, got {C}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not sigma_min > 0.0:
        raise ValueError(f"sigma_min must be positive, got {sigma_min}")
    if not eps >= 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    return 2.0 * (C + 1.0) * eps / (sigma_min * alpha * (C - 1.0))


def bound_report(delta, mu):
    a = alpha_star(delta)
    C = balancedness_C(mu, a)
    if isinstance(C, NoRecovery):
        C_val, vp = C.C, math.inf
    else:
        C_val, vp = C, _varpi_from(C, a, delta)
    return BoundReport(delta, a, mu, C_val, vp, sparsity_threshold(a))
