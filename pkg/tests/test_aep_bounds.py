import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from robustse.aep_bounds import (NoRecovery, alpha_star, balancedness_C, balancedness_q,
                                 bound_report, error_bound, g_of_alpha, sparsity_threshold,
                                 varpi, width_bound)
from robustse.errors import NoCertificate


def test_width_bound_examples():
    for a in (0.0, 0.3, 1.0):
        assert abs(width_bound(a, 0.0) - 1.0) < 1e-12
    assert width_bound(0.0, 20.0) < 1e-8
    with pytest.raises(ValueError):
        width_bound(0.3, -1.0)


def test_width_bound_radicand_monte_carlo():
    h = np.abs(np.random.default_rng(0).standard_normal(10**6))
    for u2 in (0.25, 0.75, 1.5):
        mc = np.mean(np.where(h > u2, (u2 - h) ** 2, 0.0))
        rad = (width_bound(0.332, u2) - 0.332 * u2) ** 2
        assert abs(rad - mc) <= 0.01 * mc


def test_width_bound_convex():
    u = np.linspace(0.0, 20.0, 4001)
    for a in (0.1, 0.332, 0.8):
        f = np.array([width_bound(a, t) for t in u])
        assert np.all(f[:-2] - 2 * f[1:-1] + f[2:] >= -1e-9)


def _width_grid(alpha, u):
    rad = (u * u + 1.0) * special.erfc(u / math.sqrt(2.0)) \
        - math.sqrt(2.0 / math.pi) * u * np.exp(-u * u / 2.0)
    return np.sqrt(np.maximum(rad, 0.0)) + alpha * u


def test_g_of_alpha():
    grid = np.linspace(0, 20, 10**6 + 1)
    assert abs(g_of_alpha(1.0) - _width_grid(1.0, grid).min()) < 1e-9
    assert abs(g_of_alpha(1.0) - 1.0) < 1e-9
    assert g_of_alpha(0.0) <= 1e-6
    assert 0.705 <= g_of_alpha(0.332) <= 0.7072


def test_alpha_star():
    a = alpha_star(0.5)
    assert abs(a - 0.332) <= 0.002
    assert alpha_star(0.1) > a > alpha_star(0.9)
    for d in np.arange(1, 10) / 10:
        assert g_of_alpha(alpha_star(d)) < math.sqrt(1 - d)
    sweep = [alpha_star(d) for d in np.linspace(0.04, 0.96, 20)]
    assert all(x >= y for x, y in zip(sweep, sweep[1:]))
    with pytest.raises(ValueError):
        alpha_star(1.0)


@given(st.floats(0.001, 0.3), st.floats(0.05, 0.8))
def test_balancedness_root(mu, alpha):
    if alpha * alpha >= 1 - mu:
        return
    C = balancedness_C(mu, alpha)
    val = C.C if isinstance(C, NoRecovery) else C
    if val > 0:
        assert abs(balancedness_q(val, mu, alpha)) < 1e-10 * max(1.0, 1.0 / mu)


def test_balancedness_limits_and_monotone():
    assert balancedness_C(1e-9, 0.332) > 1e3
    mus = np.linspace(0.001, 0.05, 40)
    vals = [balancedness_C(m, 0.332) for m in mus]
    vals = [v.C if isinstance(v, NoRecovery) else v for v in vals]
    assert all(x >= y for x, y in zip(vals, vals[1:]))
    r = balancedness_C(0.2, 0.332)
    assert isinstance(r, NoRecovery) and not r
    with pytest.raises(ValueError):
        balancedness_C(0.5, 0.9)


def test_sparsity_threshold():
    mu = sparsity_threshold(alpha_star(0.5))
    assert abs(mu - 0.0289) <= 0.0015
    # C crosses 1 there
    assert balancedness_C(mu * 0.99, alpha_star(0.5)) > 1
    assert isinstance(balancedness_C(mu * 1.01, alpha_star(0.5)), NoRecovery)


def test_varpi():
    vals = [varpi(0.5, m) for m in (0.005, 0.01, 0.02)]
    assert vals[0] < vals[1] < vals[2]
    a = alpha_star(0.5)
    C = balancedness_C(0.01, a)
    assert varpi(0.5, 0.01) == 2 * (C + 1) / ((1 - math.sqrt(0.5)) * a * (C - 1))
    limit = 2 / ((1 - math.sqrt(0.5)) * a)
    assert abs(varpi(0.5, 1e-12) - limit) < 1e-4 * limit
    with pytest.raises(NoCertificate):
        varpi(0.5, 0.1)


def test_error_bound():
    assert error_bound(3, 0.332, 1, 0.0) == 0.0
    assert error_bound(3, 0.332, 1, 0.2) == 2 * error_bound(3, 0.332, 1, 0.1)
    assert abs(error_bound(3, 0.332, 1, 0.1) - 8 / (0.332 * 2) * 0.1) < 1e-12
    with pytest.raises(NoCertificate):
        error_bound(1.0, 0.3, 1, 0.1)


def test_bound_report():
    r = bound_report(0.5, 0.01)
    assert r.C > 1 and math.isfinite(r.varpi) and r.varpi > 0
    r = bound_report(0.5, 0.1)
    assert r.C <= 1 and math.isinf(r.varpi)


def test_gaussian_range_spot_check():
    n = 400
    g = np.random.default_rng(1)
    H = g.standard_normal((n, n // 2))
    W = g.standard_normal((n // 2, 10**4))
    R = H @ W
    ratio = np.abs(R).sum(axis=0) / (math.sqrt(n) * np.linalg.norm(R, axis=0))
    assert ratio.min() >= 0.332
