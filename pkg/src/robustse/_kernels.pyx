# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Jacobi singular values and the two ADMM iterations.

Semantics match ``_kernels_py`` exactly up to floating-point summation order.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, copysign, INFINITY
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemv, ddot, dnrm2, daxpy, dscal

cnp.import_array()

IMPLEMENTATION = "cython"


cdef inline double _dot(int n, double* a, double* b) noexcept nogil:
    cdef int one = 1
    return ddot(&n, a, &one, b, &one)


cdef inline double _nrm(int n, double* a) noexcept nogil:
    cdef int one = 1
    return dnrm2(&n, a, &one)


cdef void _matvec(double* M, int rows, int cols, double* x, double* out,
                  bint trans) noexcept nogil:
    # M is C-contiguous rows x cols, i.e. Fortran cols x rows.
    # trans=False: out = M x (len rows); trans=True: out = M^T x (len cols)
    cdef char t = b'T' if not trans else b'N'
    cdef double one = 1.0, zero = 0.0
    cdef int inc = 1
    cdef int lda = cols if cols > 1 else 1
    dgemv(&t, &cols, &rows, &one, M, &lda, x, &inc, &zero, out, &inc)


def jacobi_singular_values(A, double tol=1e-15, int max_sweeps=100):
    """One-sided (Hestenes) Jacobi; returns (singular values, sweeps)."""
    # store columns contiguously: W[j, :] is column j of A
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W = np.ascontiguousarray(
        np.asarray(A, dtype=np.float64).T)
    cdef int k = W.shape[0], n = W.shape[1]
    cdef int p, q, i, sweeps = 0
    cdef double alpha, beta, gamma, zeta, t, cs, sn, a, b
    cdef bint rotated
    cdef double* base = &W[0, 0] if k > 0 and n > 0 else NULL
    cdef double* ap
    cdef double* aq
    if base == NULL:
        return np.zeros(k), 0
    with nogil:
        for sweeps in range(1, max_sweeps + 1):
            rotated = False
            for p in range(k - 1):
                ap = base + p * n
                for q in range(p + 1, k):
                    aq = base + q * n
                    alpha = _dot(n, ap, ap)
                    beta = _dot(n, aq, aq)
                    gamma = _dot(n, ap, aq)
                    if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha * beta):
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = copysign(1.0, zeta) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                    cs = 1.0 / sqrt(1.0 + t * t)
                    sn = cs * t
                    for i in range(n):
                        a = ap[i]
                        b = aq[i]
                        ap[i] = cs * a - sn * b
                        aq[i] = sn * a + cs * b
            if not rotated:
                break
    out = np.empty(k)
    cdef double[::1] ov = out
    for p in range(k):
        ov[p] = _nrm(n, base + p * n)
    return out, sweeps


cdef void _project_l1(double* v, int n, double radius, double* out,
                      double* buf) noexcept nogil:
    # buf: scratch of length n
    cdef int i, i0, k
    cdef double s = 0.0, cs, theta, a
    for i in range(n):
        buf[i] = fabs(v[i])
        s += buf[i]
    if s <= radius * (1.0 + 1e-12):
        memcpy(out, v, n * sizeof(double))
        return
    if radius <= 0.0:
        for i in range(n):
            out[i] = 0.0
        return
    # Michelot's active-set iteration: theta is the shift that makes the
    # kept magnitudes sum to radius; dropping entries at or below theta
    # only raises it, and it stops once nothing is dropped
    theta = (s - radius) / n
    k = n
    while True:
        cs = 0.0
        i0 = 0
        for i in range(k):
            if buf[i] > theta:
                buf[i0] = buf[i]
                cs += buf[i]
                i0 += 1
        if i0 == k or i0 == 0:  # 0 only through rounding at a tiny radius
            break
        k = i0
        theta = (cs - radius) / k
    s = 0.0
    for i in range(n):
        a = fabs(v[i]) - theta
        if a > 0:
            out[i] = copysign(a, v[i])
            s += a
        else:
            out[i] = 0.0
    if s > radius:
        # rounding left the point just outside; pull it onto the sphere so a
        # second projection is a no-op
        a = radius / s
        for i in range(n):
            out[i] *= a

def project_l1(v, double radius):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef int n = vv.shape[0]
    out = np.empty(n)
    if n == 0:
        return out
    buf = np.empty(n)
    cdef double[::1] o = out, b = buf
    _project_l1(&vv[0], n, radius, &o[0], &b[0])
    return out


def admm_mixed(Q, y, double eps, double lam, bint penalized, double rho,
               int max_iters, double primal_tol, double dual_tol,
               double rho_min=1e-4, double rho_max=1e4, int adapt_every=50):
    """ADMM on ``H x + z + w = y`` with ``H = Q R``; see ``_kernels_py``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Qa = np.ascontiguousarray(Q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef int n = Qa.shape[0], m = Qa.shape[1]
    c_arr = np.zeros(m)
    z_arr = np.zeros(n)
    w_arr = np.zeros(n)
    u_arr = np.zeros(n)
    work = np.zeros((4, n))
    cdef double[::1] c = c_arr, z = z_arr, w = w_arr, u = u_arr
    cdef double[:, ::1] wk = work
    cdef double* q = &wk[0, 0]
    cdef double* p = &wk[1, 0]
    cdef double* r = &wk[2, 0]
    cdef double* a = &wk[3, 0]
    cdef double* Qp = &Qa[0, 0]
    cdef double* yp = &ya[0]
    cdef int i, it = 0
    cdef double na, shrink, kappa, vi, thr, wold, dw2, r2, pz2, w2, u2, scale
    cdef double ynorm = _nrm(n, yp)
    cdef double r_rel = INFINITY, s_rel = INFINITY
    cdef bint converged = False
    with nogil:
        for it in range(1, max_iters + 1):
            for i in range(n):
                q[i] = yp[i] - w[i] - u[i]
            _matvec(Qp, n, m, q, &c[0], True)
            _matvec(Qp, n, m, &c[0], p, False)
            for i in range(n):
                a[i] = q[i] - p[i]
            na = _nrm(n, a)
            if penalized:
                kappa = lam / rho
                shrink = 1.0 - kappa / na if na > kappa else 0.0
            else:
                shrink = 1.0 if na <= eps else eps / na
            thr = 1.0 / rho
            dw2 = 0.0
            r2 = 0.0
            pz2 = 0.0
            w2 = 0.0
            u2 = 0.0
            for i in range(n):
                z[i] = shrink * a[i]
                vi = yp[i] - p[i] - z[i] - u[i]
                wold = w[i]
                if vi > thr:
                    w[i] = vi - thr
                elif vi < -thr:
                    w[i] = vi + thr
                else:
                    w[i] = 0.0
                r[i] = p[i] + z[i] + w[i] - yp[i]
                u[i] += r[i]
                dw2 += (w[i] - wold) * (w[i] - wold)
                r2 += r[i] * r[i]
                pz2 += (p[i] + z[i]) * (p[i] + z[i])
                w2 += w[i] * w[i]
                u2 += u[i] * u[i]
            scale = sqrt(pz2)
            if sqrt(w2) > scale:
                scale = sqrt(w2)
            if ynorm > scale:
                scale = ynorm
            if scale < 1e-300:
                scale = 1e-300
            r_rel = sqrt(r2) / scale
            scale = rho * sqrt(u2)
            if scale < 1e-300:
                scale = 1e-300
            s_rel = rho * sqrt(dw2) / scale
            if r_rel <= primal_tol and s_rel <= dual_tol:
                converged = True
                break
            if it % adapt_every == 0:
                if r_rel > 10.0 * s_rel and rho * 2.0 <= rho_max:
                    rho *= 2.0
                    for i in range(n):
                        u[i] *= 0.5
                elif s_rel > 10.0 * r_rel and rho * 0.5 >= rho_min:
                    rho *= 0.5
                    for i in range(n):
                        u[i] *= 2.0
    return c_arr, z_arr, w_arr, u_arr, it, r_rel, s_rel, rho, converged


cdef void _linmax_bounds(double* A, int nj, int m, double* c, double* x,
                         double* u1, double rho, double l1_cap, double l2_cap,
                         double* xf, double* tmp_n, double* tmp_m,
                         double* lower, double* upper) noexcept nogil:
    cdef int i
    cdef double ax = 0.0, nx, scale = 1.0, mx = 0.0, val = 0.0
    _matvec(A, nj, m, x, tmp_n, False)
    for i in range(nj):
        ax += fabs(tmp_n[i])
    nx = _nrm(m, x)
    if ax > l1_cap:
        scale = l1_cap / ax
    if nx * scale > l2_cap:
        scale = l2_cap / nx
    for i in range(m):
        xf[i] = x[i] * scale
        val += c[i] * xf[i]
    for i in range(nj):
        tmp_n[i] = rho * u1[i]
        if fabs(tmp_n[i]) > mx:
            mx = fabs(tmp_n[i])
    _matvec(A, nj, m, tmp_n, tmp_m, True)
    for i in range(m):
        tmp_m[i] = c[i] - tmp_m[i]
    lower[0] = val
    upper[0] = l1_cap * mx + l2_cap * _nrm(m, tmp_m)


def admm_linmax(A, c, Minv, double l1_cap, double l2_cap, double rho,
                int max_iters, double tol, double gap_tol, int check_every=10,
                double rho_min=1e-4, double rho_max=1e4, int adapt_every=50):
    """ADMM for ``max c.x`` over an l1/l2 intersection; see ``_kernels_py``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Aa = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Ma = np.ascontiguousarray(Minv, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ca = np.ascontiguousarray(c, dtype=np.float64)
    cdef int nj = Aa.shape[0], m = Aa.shape[1]
    wn = np.zeros((7, nj))
    wm = np.zeros((7, m))
    cdef double[:, ::1] N = wn, Mw = wm
    cdef double* v = &N[0, 0]
    cdef double* u1 = &N[1, 0]
    cdef double* ax = &N[2, 0]
    cdef double* tv = &N[3, 0]
    cdef double* buf = &N[4, 0]
    cdef double* tn = &N[5, 0]
    cdef double* vnew = &N[6, 0]
    cdef double* x = &Mw[0, 0]
    cdef double* p = &Mw[1, 0]
    cdef double* u2 = &Mw[2, 0]
    cdef double* rhs = &Mw[3, 0]
    cdef double* xf = &Mw[4, 0]
    cdef double* tm = &Mw[5, 0]
    cdef double* tt = &Mw[6, 0]
    cdef double* Ap = &Aa[0, 0]
    cdef double* Mp = &Ma[0, 0]
    cdef double* cp = &ca[0]
    cdef int i, it = 0
    cdef double nt, sc, rr, ss, num, den1, den2, uu, dd, lower = 0.0, upper = INFINITY
    cdef double r_rel = INFINITY, s_rel = INFINITY, d
    cdef bint converged = False
    with nogil:
        for it in range(1, max_iters + 1):
            for i in range(nj):
                tv[i] = v[i] - u1[i]
            _matvec(Ap, nj, m, tv, rhs, True)
            for i in range(m):
                rhs[i] += cp[i] / rho + p[i] - u2[i]
            _matvec(Mp, m, m, rhs, x, False)
            _matvec(Ap, nj, m, x, ax, False)
            for i in range(nj):
                tv[i] = ax[i] + u1[i]
            _project_l1(tv, nj, l1_cap, vnew, buf)
            for i in range(m):
                tt[i] = x[i] + u2[i]
            nt = _nrm(m, tt)
            sc = l2_cap / nt if nt > l2_cap else 1.0
            rr = 0.0
            dd = 0.0
            uu = 0.0
            den1 = 0.0
            den2 = 0.0
            for i in range(nj):
                d = vnew[i] - v[i]
                dd += d * d
                v[i] = vnew[i]
                d = ax[i] - v[i]
                rr += d * d
                u1[i] += d
                uu += u1[i] * u1[i]
                den1 += ax[i] * ax[i]
                den2 += v[i] * v[i]
            for i in range(m):
                d = tt[i] * sc - p[i]
                dd += d * d
                p[i] = tt[i] * sc
                d = x[i] - p[i]
                rr += d * d
                u2[i] += d
                uu += u2[i] * u2[i]
                den1 += x[i] * x[i]
                den2 += p[i] * p[i]
            num = den1 if den1 > den2 else den2
            num = sqrt(num)
            if num < 1e-300:
                num = 1e-300
            r_rel = sqrt(rr) / num
            num = sqrt(uu)
            if num < 1e-300:
                num = 1e-300
            s_rel = sqrt(dd) / num
            if it % check_every == 0 or it == max_iters:
                _linmax_bounds(Ap, nj, m, cp, x, u1, rho, l1_cap, l2_cap,
                               xf, tn, tm, &lower, &upper)
                d = fabs(upper)
                if d < 1e-300:
                    d = 1e-300
                if upper - lower <= gap_tol * d:
                    converged = True
                    break
                if r_rel <= tol and s_rel <= tol:
                    converged = True
                    break
            if it % adapt_every == 0:
                if r_rel > 10.0 * s_rel and rho * 2.0 <= rho_max:
                    rho *= 2.0
                    for i in range(nj):
                        u1[i] *= 0.5
                    for i in range(m):
                        u2[i] *= 0.5
                elif s_rel > 10.0 * r_rel and rho * 0.5 >= rho_min:
                    rho *= 0.5
                    for i in range(nj):
                        u1[i] *= 2.0
                    for i in range(m):
                        u2[i] *= 2.0
        if not converged:
            _linmax_bounds(Ap, nj, m, cp, x, u1, rho, l1_cap, l2_cap,
                           xf, tn, tm, &lower, &upper)
    return wm[4].copy(), lower, upper, it, r_rel, s_rel, rho, converged
