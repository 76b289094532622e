"""Dense linear algebra, special functions, sampling and scalar search."""
import math

import numpy as np
from scipy import special

from .errors import BadShape
from .kernels import jacobi_singular_values

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def as_matrix(A, name="matrix"):
    """Return ``A`` as a finite 2-D float array or raise ``BadShape``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise BadShape(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise BadShape(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def check_system(y, H):
    """Validate a (y, H) pair and return them as arrays."""
    H = as_matrix(H, "H")
    y = as_vector(y, "y")
    if H.shape[0] != y.shape[0]:
        raise BadShape(f"y has shape {y.shape} but H has shape {H.shape}")
    return y, H


# ---------------------------------------------------------------- special

def erfc(x):
    """Complementary error function (scalar or array)."""
    return special.erfc(x)


def chi_cdf(m, x):
    """CDF of the chi distribution with ``m`` degrees of freedom."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return special.gammainc(m / 2.0, x * x / 2.0)


def _chi_logpdf(m, x):
    return ((m - 1) * math.log(x) - x * x / 2.0
            - (m / 2.0 - 1.0) * math.log(2.0) - special.gammaln(m / 2.0))


def chi_quantile(m, p):
    """Inverse CDF of the chi distribution with ``m`` degrees of freedom.

    Inverts the regularised incomplete gamma function and then applies one
    Newton correction on the chi CDF itself.
    """
    if not (1 <= m <= 10**4) or int(m) != m:
        raise ValueError(f"m must be an integer in [1, 10^4], got {m}")
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must satisfy 0 <= p < 1, got {p}")
    if p == 0.0:
        return 0.0
    x = math.sqrt(2.0 * special.gammaincinv(m / 2.0, p))
    if x > 0.0:
        dens = math.exp(_chi_logpdf(m, x))
        if dens > 0.0:
            x -= (float(chi_cdf(m, x)) - p) / dens
    return x


# ---------------------------------------------------------------- linear algebra

def singular_values(A):
    """All singular values of a tall matrix, largest first.

    A Householder QR reduces ``A`` to its square factor ``R``; one-sided Jacobi
    then orthogonalises the columns of ``R``.
    """
    A = as_matrix(A, "A")
    rows, cols = A.shape
    if rows < cols:
        raise BadShape(f"need rows >= cols, got shape {A.shape}")
    if cols == 0:
        return np.zeros(0)
    R = np.linalg.qr(A, mode="r") if rows > cols else A
    sv, _ = jacobi_singular_values(R)
    return np.sort(sv)[::-1]


def min_singular_value(A):
    return float(singular_values(A)[-1])


def induced_l1_norm(A):
    """l1 -> l1 operator norm: largest absolute column sum."""
    A = as_matrix(A, "A")
    if A.size == 0:
        return 0.0
    return float(np.abs(A).sum(axis=0).max())


def _l1_sphere_grid(cols, grid):
    if cols == 1:
        return np.array([[1.0], [-1.0]])
    if cols == 2:
        th = 2.0 * np.pi * np.arange(grid) / grid
        Z = np.column_stack([np.cos(th), np.sin(th)])
    else:
        nt = int(math.ceil(math.sqrt(grid / 2.0)))
        th = np.linspace(0.0, np.pi, nt + 1)
        ph = 2.0 * np.pi * np.arange(2 * nt) / (2 * nt)
        T, F = np.meshgrid(th, ph, indexing="ij")
        Z = np.column_stack([(np.sin(T) * np.cos(F)).ravel(),
                             (np.sin(T) * np.sin(F)).ravel(),
                             np.cos(T).ravel()])
    return Z / np.abs(Z).sum(axis=1, keepdims=True)


def l1_induced_min_sampled(A, grid=4000):
    """Grid upper bound on ``min ||A z||_1`` over ``||z||_1 = 1``.

    Only for at most three columns. Directions are spread uniformly in angle
    and rescaled onto the l1 sphere, so the result overestimates the true
    minimum by at most ``||A||_{1->1}`` times the l1 distance between
    neighbouring grid points, which is O(1/grid) for two columns and
    O(1/sqrt(grid)) for three.
    """
    A = as_matrix(A, "A")
    if A.shape[1] > 3:
        raise ValueError(f"sampling oracle supports at most 3 columns, got {A.shape[1]}")
    if grid < 1000:
        raise ValueError("grid must be at least 1000")
    Z = _l1_sphere_grid(A.shape[1], grid)
    return float(np.abs(Z @ A.T).sum(axis=1).min())


# ---------------------------------------------------------------- random sampling

def make_rng(seed, *stream):
    """Generator for the stream ``(seed, *stream)``.

    PCG64 seeded through ``SeedSequence`` with the stream indices as spawn
    key, so every (cell, trial) pair gets an independent stream that does not
    depend on how many other streams exist.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(seq))


def sample_gaussian(rng, rows, cols, stddev=1.0):
    if stddev < 0:
        raise ValueError("stddev must be nonnegative")
    if stddev == 0:
        return np.zeros((rows, cols))
    return stddev * rng.standard_normal((rows, cols))


# ---------------------------------------------------------------- scalar search

def minimize_unimodal(f, lo, hi, tol=1e-10):
    """Golden-section search for the minimum of a unimodal ``f`` on [lo, hi].

    The endpoints are compared with the interior result at the end, so a
    minimum sitting on the boundary is returned exactly.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = min([(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)], key=lambda t: t[0])
    return best[1], best[0]
