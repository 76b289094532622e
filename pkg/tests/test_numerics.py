import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from robustse.errors import BadShape
from robustse.numerics import (chi_cdf, chi_quantile, erfc, induced_l1_norm,
                               l1_induced_min_sampled, make_rng, min_singular_value,
                               minimize_unimodal, sample_gaussian, singular_values)


def test_erfc_values():
    assert erfc(0.0) == 1.0
    assert 0.0 <= erfc(10.0) < 1e-40
    quad, _ = integrate.quad(lambda t: math.exp(-t * t), 1.0, np.inf, epsabs=1e-14)
    assert abs(erfc(1.0) - 2.0 / math.sqrt(math.pi) * quad) < 1e-10


@given(st.floats(-10, 10))
def test_erfc_reflection(x):
    assert abs(erfc(x) + erfc(-x) - 2.0) < 1e-12


def test_chi_quantile_examples():
    assert abs(chi_quantile(2, 0.98) - math.sqrt(-2.0 * math.log(0.02))) < 1e-8 * 2.8
    # chi with one degree of freedom is |N(0,1)|: its 0.98 quantile is the normal 0.99 quantile
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - 0.5 * erfc(mid / math.sqrt(2.0)) < 0.99:
            lo = mid
        else:
            hi = mid
    assert abs(chi_quantile(1, 0.98) - lo) < 1e-8 * lo
    assert chi_quantile(60, 0.0) == 0.0


@pytest.mark.parametrize("p", [1.0, 1.5, -0.1])
def test_chi_quantile_rejects_bad_p(p):
    with pytest.raises(ValueError):
        chi_quantile(5, p)


@pytest.mark.parametrize("m", [0, 10001])
def test_chi_quantile_rejects_bad_m(m):
    with pytest.raises(ValueError):
        chi_quantile(m, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10000), st.floats(0.05, 0.999))
def test_chi_round_trip(m, p):
    x = chi_quantile(m, p)
    assert abs(chi_cdf(m, x) - p) < 1e-9
    # and the other way round, starting from x
    assert abs(chi_quantile(m, chi_cdf(m, x)) - x) < 1e-6


def test_min_singular_value_examples():
    assert abs(min_singular_value(np.eye(3)) - 1.0) < 1e-12
    A = np.array([[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    assert abs(min_singular_value(A) - 2.0) < 1e-12
    with pytest.raises(BadShape):
        min_singular_value(np.ones((2, 3)))


def test_min_singular_value_gaussian_limit():
    vals = [min_singular_value(make_rng(7, s).standard_normal((400, 100)) / 20.0)
            for s in range(20)]
    assert all(abs(v - 0.5) <= 0.05 for v in vals)


def test_singular_values_match_lapack(rng):
    A = rng.standard_normal((40, 12))
    sv = singular_values(A)
    ref = np.linalg.svd(A, compute_uv=False)
    assert np.allclose(sv, ref, rtol=1e-10, atol=0)


def test_min_singular_value_orthogonal_invariance(rng):
    A = rng.standard_normal((30, 8))
    Q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    assert abs(min_singular_value(Q @ A) - min_singular_value(A)) < 1e-8


def test_induced_l1_norm(rng):
    assert induced_l1_norm(np.eye(4)) == 1.0
    assert induced_l1_norm(np.array([[1.0, -2.0], [3.0, 4.0]])) == 6.0
    A = rng.standard_normal((5, 3))
    vertices = [s * e for e in np.eye(3) for s in (1.0, -1.0)]
    assert abs(induced_l1_norm(A) - max(np.abs(A @ v).sum() for v in vertices)) < 1e-12


def test_l1_induced_min_sampled(rng):
    assert abs(l1_induced_min_sampled(np.eye(2)) - 1.0) < 1e-6
    assert abs(l1_induced_min_sampled(np.ones((2, 1))) - 2.0) < 1e-12
    A = rng.standard_normal((3, 2))
    assert abs(l1_induced_min_sampled(A, 2000) - l1_induced_min_sampled(A, 20000)) < 1e-2
    with pytest.raises(ValueError):
        l1_induced_min_sampled(np.ones((5, 4)))
    for _ in range(5):
        B = rng.standard_normal((6, 3))
        assert induced_l1_norm(B) >= l1_induced_min_sampled(B, 1000)


def test_sample_gaussian():
    assert not sample_gaussian(make_rng(1), 3, 4, 0.0).any()
    a = sample_gaussian(make_rng(5, 2), 10, 10)
    b = sample_gaussian(make_rng(5, 2), 10, 10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_gaussian(make_rng(5, 3), 10, 10))
    big = sample_gaussian(make_rng(11), 100000, 1).ravel()
    assert 0.98 <= big.var() <= 1.02
    assert abs(big.mean()) < 4.0 / math.sqrt(big.size)
    with pytest.raises(ValueError):
        sample_gaussian(make_rng(1), 2, 2, -1.0)


def test_sample_gaussian_pinned_stream():
    # guards against silent changes of the generator or stream derivation
    v = sample_gaussian(make_rng(42, 0, 1), 1, 3).ravel()
    again = np.random.Generator(np.random.PCG64(np.random.SeedSequence(42, spawn_key=(0, 1))))
    assert np.array_equal(v, again.standard_normal((1, 3)).ravel())


def test_minimize_unimodal():
    x, f = minimize_unimodal(lambda u: (u - 2.0) ** 2, 0.0, 10.0, 1e-8)
    assert abs(x - 2.0) < 1e-8 and f < 1e-15
    x, _ = minimize_unimodal(lambda u: abs(u - 0.3), 0.0, 1.0, 1e-10)
    assert abs(x - 0.3) < 1e-9
    with pytest.raises(ValueError):
        minimize_unimodal(abs, 1.0, 1.0)


def test_minimize_unimodal_width_bound_grid():
    from robustse.aep_bounds import width_bound
    grid = np.linspace(0.0, 20.0, 10**6 + 1)
    u = grid
    rad = (u * u + 1.0) * special.erfc(u / math.sqrt(2)) \
        - math.sqrt(2 / math.pi) * u * np.exp(-u * u / 2)
    vals = np.sqrt(np.maximum(rad, 0)) + 0.332 * u
    _, fmin = minimize_unimodal(lambda t: width_bound(0.332, t), 0.0, 20.0, 1e-10)
    assert abs(fmin - vals.min()) < 1e-6
