import math

import numpy as np
import pytest

from robustse.errors import DegenerateRelaxation, NoCertificate
from robustse.estimators import LinearModel
from robustse.numerics import make_rng, min_singular_value
from robustse.verification import (almost_euclidean_lower_bound, balancedness_from_alphas,
                                   certify_region, contraction_beta, convergence_condition,
                                   row_alpha_bound, row_alpha_bounds)


def _polar_alpha(H, i, grid=200001):
    """Row ratio maximised over a fine grid of directions (two states only)."""
    th = np.linspace(0.0, math.pi, grid)
    X = np.vstack([np.cos(th), np.sin(th)])
    W = np.abs(H @ X)
    rest = W.sum(axis=0) - W[i]
    return float(np.max(W[i] / rest))


def test_single_column_of_ones():
    H = np.ones((3, 1))
    for i in range(3):
        assert abs(row_alpha_bound(H, 0.0, i) - 0.5) < 1e-7


def test_eps_zero_matches_polar_grid():
    H = make_rng(3).standard_normal((8, 2))
    for i in range(8):
        a = row_alpha_bound(H, 0.0, i)
        ref = _polar_alpha(H, i)
        assert a >= ref - 1e-9
        assert a - ref <= 1e-3 * max(1.0, ref)


def test_alpha_monotone_in_eps():
    H = make_rng(4).standard_normal((12, 3))
    prev = None
    for eps in (0.0, 0.005, 0.01, 0.02):
        a = row_alpha_bounds(H, eps)
        if prev is not None:
            assert np.all(a >= prev - 1e-8)
        prev = a


def test_alpha_dominates_sampled_perturbations():
    g = make_rng(5)
    H = g.standard_normal((10, 2))
    eps = 0.02
    alphas = row_alpha_bounds(H, eps)
    th = np.linspace(0.0, math.pi, 3601)
    X = np.vstack([np.cos(th), np.sin(th)])
    for _ in range(30):
        D = g.standard_normal(H.shape)
        D *= eps * g.uniform(0, 1, (H.shape[0], 1)) / np.linalg.norm(D, axis=1, keepdims=True)
        W = np.abs((H + D) @ X)
        ratio = (W / (W.sum(axis=0) - W)).max(axis=1)
        assert np.all(ratio <= alphas + 1e-9)


def test_orthogonal_invariance():
    g = make_rng(6)
    H = g.standard_normal((10, 3))
    Q, _ = np.linalg.qr(g.standard_normal((3, 3)))
    for eps in (0.0, 0.01):
        a = row_alpha_bounds(H, eps)
        b = row_alpha_bounds(H @ Q, eps)
        assert np.max(np.abs(a - b)) <= 1e-6 * max(1.0, np.max(a))


def test_degenerate_relaxation():
    H = make_rng(7).standard_normal((6, 2))
    with pytest.raises(DegenerateRelaxation):
        row_alpha_bound(H, 10.0, 0)
    with pytest.raises(IndexError):
        row_alpha_bound(H, 0.0, 6)
    with pytest.raises(ValueError):
        row_alpha_bound(H, -1.0, 0)


def test_balancedness_examples():
    assert balancedness_from_alphas([0.5, 0.5, 0.5], 1) == pytest.approx(2.0)
    assert balancedness_from_alphas([0.0, 0.0], 1) == math.inf
    a = [1.0, 0.25, 0.25, 0.25]
    # fractions 0.5, 0.2, 0.2, 0.2
    assert balancedness_from_alphas(a, 1) == pytest.approx(1.0)
    assert balancedness_from_alphas(a, 2) == pytest.approx(1.0 / 0.7 - 1.0)
    with pytest.raises(ValueError):
        balancedness_from_alphas(a, 4)
    with pytest.raises(ValueError):
        balancedness_from_alphas(a, 0)
    with pytest.raises(ValueError):
        balancedness_from_alphas([-0.1, 0.2], 1)


def test_almost_euclidean_bound_is_valid():
    g = make_rng(8)
    H = g.standard_normal((20, 2))
    alpha = almost_euclidean_lower_bound(row_alpha_bounds(H, 0.0))
    W = H @ g.standard_normal((2, 5000))
    ratio = np.abs(W).sum(axis=0) / (math.sqrt(20) * np.linalg.norm(W, axis=0))
    assert 0 < alpha <= ratio.min() + 1e-12
    assert almost_euclidean_lower_bound([0.0, 0.0]) == 1.0


def test_beta_zero_at_eps_zero_and_increasing():
    assert contraction_beta(3.0, 1.0, 50, 0.0) == 0.0
    vals = [contraction_beta(3.0, 1.0, 50, e) for e in (1e-5, 1e-4, 1e-3)]
    assert vals[0] < vals[1] < vals[2]
    assert contraction_beta(math.inf, 1.0, 50, 1e-4) < vals[1]
    # the m variant has a larger denominator when m < n
    assert contraction_beta(3.0, 1.0, 50, 1e-4, m=5) < vals[1]
    with pytest.raises(NoCertificate):
        contraction_beta(1.0, 1.0, 50, 1e-4)
    with pytest.raises(NoCertificate):
        contraction_beta(3.0, 1.0, 50, 1.0)


def test_convergence_condition_linear():
    H = make_rng(9).standard_normal((40, 3))
    C, beta, ok = convergence_condition(H, 0.0, 1)
    assert C > 1 and beta == 0.0 and ok
    C2, beta2, _ = convergence_condition(H, 1e-4, 1)
    assert C2 <= C + 1e-9 and beta2 > 0.0


def test_certify_region_linear_eps_zero():
    H = make_rng(10).standard_normal((30, 3))
    rep = certify_region(LinearModel(H), np.zeros(3), 0.0, k_max=8)
    Cs = [rep.C_of_k[k] for k in sorted(rep.C_of_k)]
    assert all(a >= b for a, b in zip(Cs, Cs[1:]))
    above = [k for k, C in rep.C_of_k.items() if C > 1]
    assert rep.certified_k == max(above)
    assert all(rep.beta_of_k[k] == 0.0 for k in above)
    assert rep.sigma_min == pytest.approx(min_singular_value(H))
    assert rep.notes


def test_report_beta_monotone_in_k():
    H = make_rng(11).standard_normal((60, 3))
    rep = certify_region(LinearModel(H), np.zeros(3), 1e-4, k_max=6)
    betas = [rep.beta_of_k[k] for k in sorted(rep.beta_of_k)]
    assert all(a <= b for a, b in zip(betas, betas[1:]))


def test_ieee30_smoke_deterministic(ieee30):
    x = ieee30.net.solved_state()
    a = certify_region(ieee30, x, 1e-6, k_max=5)
    b = certify_region(ieee30, x, 1e-6, k_max=5)
    assert np.array_equal(a.alphas, b.alphas)
    assert a.C_of_k == b.C_of_k and a.certified_k == b.certified_k
    assert len(a.alphas) == 100 and np.all(np.isfinite(a.alphas))
