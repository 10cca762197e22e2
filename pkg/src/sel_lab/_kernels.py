"""Compiled inner loops: nodal Gauss-Seidel sweeps, residuals and pair scans.

The gradient that enters the beta-power is the root-mean-square of forward
and backward differences on each axis,

    g^2 = sum_axes ((u[+] - u)^2 + (u - u[-])^2) / (2 h^2),

which equals the centered gradient squared plus a quarter of the squared
second differences. Unlike the centered gradient alone it does not vanish at
a strict local minimum, so the operator stays elliptic there.

A sweep solves each nodal equation for the drop ``D = mean - u`` with the
gradient taken implicitly in ``D`` (it depends on the node value) and the
cutoff taken explicitly, i.e. ``D * g(D)**beta = h^2 f / (2 dim zeta(u))``.
"""

import math

import numba
import numpy as np

GRAD_FLOOR = 1e-10


@numba.njit(cache=True)
def _ipow(s, p):
    # s**p with the common integer exponents kept off the libm path
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return s
    if p == 2.0:
        return s * s
    return s**p


@numba.njit(cache=True)
def zeta(s, alpha, eps):
    if s >= eps:
        return _ipow(s, alpha)
    return _ipow(eps, alpha)


@numba.njit(cache=True)
def _bump(s):
    if s < 0.0 or s > 1.0:
        return 0.0
    return 16.0 * s * s * (1.0 - s) * (1.0 - s)


@numba.njit(cache=True)
def _forcing(fval, u, hea_eps):
    if hea_eps > 0.0:
        return _bump(max(u, 0.0) / hea_eps) / hea_eps
    return fval


@numba.njit(cache=True)
def _powg(g2, beta):
    # g**beta from g**2 with the floor applied to g
    g = math.sqrt(g2)
    if g < GRAD_FLOOR:
        g = GRAD_FLOOR
    return _ipow(g, beta)


@numba.njit(cache=True)
def nodal_drop(K, A, c, beta, guess):
    """Root D >= 0 of ``D * max(sqrt(A + c D^2), floor)**beta = K``.

    The left side is convex and increasing in D, so Newton's method converges
    monotonically once an iterate lies right of the root. ``guess`` is the
    current drop, which is exact at a fixed point.
    """
    if K <= 0.0:
        return 0.0
    if beta == 0.0:
        return K
    if beta == 1.0:
        x = 2.0 * K * K / (A + math.sqrt(A * A + 4.0 * c * K * K))
        D = math.sqrt(x)
    else:
        half = 0.5 * beta
        D = guess
        if not D > 0.0:
            D = (K / _ipow(c, half)) ** (1.0 / (1.0 + beta))
        for _ in range(100):
            q = A + c * D * D
            p = _ipow(q, half)
            dpsi = p / q * (A + (1.0 + beta) * c * D * D)
            Dn = D - (D * p - K) / dpsi
            if Dn <= 0.0:
                Dn = 0.5 * D
            if abs(Dn - D) <= 1e-14 * D:
                D = Dn
                break
            D = Dn
    if A + c * D * D < GRAD_FLOOR * GRAD_FLOOR:
        D = K / GRAD_FLOOR**beta
    return D


@numba.njit(cache=True)
def sweep1d(u, f, alpha, beta, eps, h, relax, floor, forward, hea_eps):
    n = u.shape[0]
    c = 1.0 / (h * h)
    w = 0.5 * h * h
    for k in range(1, n - 1):
        i = k if forward else n - 1 - k
        up = u[i + 1]
        um = u[i - 1]
        ui = u[i]
        m = 0.5 * (up + um)
        gx = (up - um) / (2.0 * h)
        K = w * _forcing(f[i], ui, hea_eps) / zeta(ui, alpha, eps)
        D = nodal_drop(K, gx * gx, c, beta, m - ui)
        new = (1.0 - relax) * ui + relax * (m - D)
        u[i] = new if new > floor else floor


@numba.njit(cache=True)
def sweep2d(u, f, alpha, beta, eps, h, relax, floor, forward, hea_eps):
    nx, ny = u.shape
    c = 2.0 / (h * h)
    w = 0.25 * h * h
    inv4h2 = 1.0 / (4.0 * h * h)
    for kk in range(1, nx - 1):
        i = kk if forward else nx - 1 - kk
        for ll in range(1, ny - 1):
            j = ll if forward else ny - 1 - ll
            xp = u[i + 1, j]
            xm = u[i - 1, j]
            yp = u[i, j + 1]
            ym = u[i, j - 1]
            ui = u[i, j]
            m = 0.25 * (xp + xm + yp + ym)
            gx = (xp - xm) / (2.0 * h)
            gy = (yp - ym) / (2.0 * h)
            q = xp + xm - 2.0 * m  # the y-axis counterpart is -q
            A = gx * gx + gy * gy + 2.0 * q * q * inv4h2
            K = w * _forcing(f[i, j], ui, hea_eps) / zeta(ui, alpha, eps)
            D = nodal_drop(K, A, c, beta, m - ui)
            new = (1.0 - relax) * ui + relax * (m - D)
            u[i, j] = new if new > floor else floor


@numba.njit(cache=True)
def residual1d(u, f, alpha, beta, eps, h, hea_eps):
    n = u.shape[0]
    r = np.zeros(n)
    for i in range(1, n - 1):
        a = (u[i + 1] - u[i]) / h
        b = (u[i] - u[i - 1]) / h
        lap = (a - b) / h
        g2 = 0.5 * (a * a + b * b)
        r[i] = zeta(u[i], alpha, eps) * _powg(g2, beta) * lap - _forcing(f[i], u[i], hea_eps)
    return r


@numba.njit(cache=True)
def residual2d(u, f, alpha, beta, eps, h, hea_eps):
    nx, ny = u.shape
    r = np.zeros((nx, ny))
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            ui = u[i, j]
            a1 = (u[i + 1, j] - ui) / h
            b1 = (ui - u[i - 1, j]) / h
            a2 = (u[i, j + 1] - ui) / h
            b2 = (ui - u[i, j - 1]) / h
            lap = (a1 - b1 + a2 - b2) / h
            g2 = 0.5 * (a1 * a1 + b1 * b1 + a2 * a2 + b2 * b2)
            r[i, j] = zeta(ui, alpha, eps) * _powg(g2, beta) * lap - _forcing(f[i, j], ui, hea_eps)
    return r


@numba.njit(cache=True)
def _omega(z, d):
    if z >= d:
        return 0.9 * d
    return z - z**1.5 / (10.0 * math.sqrt(d))


@numba.njit(cache=True)
def doubling_scan(vals, pts, L, kappa, d):
    """Max over ordered pairs of v(X) - v(Y) - L omega(|X-Y|) - kappa(|X|^2+|Y|^2)."""
    n = vals.shape[0]
    dim = pts.shape[1]
    sq = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(dim):
            s += pts[i, k] * pts[i, k]
        sq[i] = s
    best = -np.inf
    bi = 0
    bj = 0
    for i in range(n):
        for j in range(n):
            dv = vals[i] - vals[j]
            pen = kappa * (sq[i] + sq[j])
            # omega >= 0, so the pair cannot beat the incumbent
            if dv - pen <= best:
                continue
            s = 0.0
            for k in range(dim):
                t = pts[i, k] - pts[j, k]
                s += t * t
            val = dv - L * _omega(math.sqrt(s), d) - pen
            if val > best:
                best = val
                bi = i
                bj = j
    return best, bi, bj


@numba.njit(cache=True)
def holder_scan(vals, pts, exponent):
    n = vals.shape[0]
    dim = pts.shape[1]
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(dim):
                t = pts[i, k] - pts[j, k]
                s += t * t
            q = abs(vals[i] - vals[j]) / math.sqrt(s) ** exponent
            if q > best:
                best = q
    return best
