"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both implementations run the same inputs with a fixed iteration budget
(tolerances set to zero so neither stops early). The script also checks
that the two agree before timing.
"""
import argparse
import timeit

import numpy as np

from robustse import _kernels_py

try:
    from robustse import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None


def cases():
    g = np.random.default_rng(0)
    H = g.standard_normal((150, 60))
    Q, R = np.linalg.qr(H)
    x = g.uniform(-1, 1, 60)
    e = np.zeros(150)
    e[g.choice(150, 20, replace=False)] = 4 * g.standard_normal(20)
    y = H @ x + e + 0.5 * g.standard_normal(150)
    A = g.standard_normal((199, 50))
    c = g.standard_normal(50)
    Minv = np.linalg.inv(A.T @ A + np.eye(50))
    v = g.standard_normal(10**5)
    return {
        "jacobi_singular_values 60x60": lambda k: k.jacobi_singular_values(R),
        "project_l1 n=1e5": lambda k: k.project_l1(v, 10.0),
        "admm_mixed 150x60, 500 it": lambda k: k.admm_mixed(
            Q, y, 5.0, 0.0, False, 1.0, 500, 0.0, 0.0),
        "admm_linmax 199x50, 500 it": lambda k: k.admm_linmax(
            A, c, Minv, 1.5, 0.2, 1.0, 500, 0.0, 0.0),
    }


def check_parity(name, fn):
    a, b = fn(_kernels_py), fn(_kernels_cy)
    a, b = (a[0], b[0]) if isinstance(a, tuple) else (a, b)
    if name.startswith("jacobi"):  # singular values come back unordered
        a, b = np.sort(a), np.sort(b)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels_cy is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases().items():
        diff = check_parity(name, fn)
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: fn(_kernels_cy), number=1, repeat=args.repeat))
        print(f"{name:32s} {1e3 * t_py:10.2f} {1e3 * t_cy:10.2f} {t_py / t_cy:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
