"""Numba backend: same kernel contracts as numpy_impl, compiled loops.

No cross-thread accumulation anywhere (every prange iteration owns its output
slice), so results are independent of the worker count. fastmath stays off to
keep runs bit-reproducible.
"""

import numpy as np
from numba import njit, prange

_OPTS = dict(cache=True, fastmath=False)


# ---------------------------------------------------------------------------
# Clifford convolution, 2D spatial
# ---------------------------------------------------------------------------

@njit(parallel=True, **_OPTS)
def conv2d_forward(xpad, lw, di, dj, H, W):
    B = xpad.shape[0]
    K, CinB, CoutB = lw.shape
    out = np.zeros((B, H, W, CoutB), dtype=xpad.dtype)
    for bh in prange(B * H):
        b = bh // H
        i = bh % H
        for j in range(W):
            acc = out[b, i, j]
            for o in range(K):
                xrow = xpad[b, i + di[o], j + dj[o]]
                m = lw[o]
                for ci in range(CinB):
                    xv = xrow[ci]
                    for co in range(CoutB):
                        acc[co] += m[ci, co] * xv
    return out


@njit(parallel=True, **_OPTS)
def conv2d_backward_x(gout, lw, di, dj, Hp, Wp):
    B, H, W, CoutB = gout.shape
    K, CinB, _ = lw.shape
    gxpad = np.zeros((B, Hp, Wp, CinB), dtype=gout.dtype)
    for b in prange(B):
        for i in range(H):
            for j in range(W):
                g = gout[b, i, j]
                for o in range(K):
                    row = gxpad[b, i + di[o], j + dj[o]]
                    m = lw[o]
                    for ci in range(CinB):
                        acc = 0.0
                        for co in range(CoutB):
                            acc += m[ci, co] * g[co]
                        row[ci] += acc
    return gxpad


@njit(parallel=True, **_OPTS)
def conv2d_backward_w(xpad, gout, di, dj):
    B, H, W, CoutB = gout.shape
    K = di.shape[0]
    CinB = xpad.shape[3]
    glw = np.zeros((K, CinB, CoutB), dtype=gout.dtype)
    for o in prange(K):
        gm = glw[o]
        for b in range(B):
            for i in range(H):
                for j in range(W):
                    xrow = xpad[b, i + di[o], j + dj[o]]
                    g = gout[b, i, j]
                    for ci in range(CinB):
                        xv = xrow[ci]
                        for co in range(CoutB):
                            gm[ci, co] += xv * g[co]
    return glw


# ---------------------------------------------------------------------------
# Clifford convolution, 3D spatial
# ---------------------------------------------------------------------------

@njit(parallel=True, **_OPTS)
def conv3d_forward(xpad, lw, di, dj, dk, D, H, W):
    B = xpad.shape[0]
    K, CinB, CoutB = lw.shape
    out = np.zeros((B, D, H, W, CoutB), dtype=xpad.dtype)
    for bd in prange(B * D):
        b = bd // D
        d = bd % D
        for i in range(H):
            for j in range(W):
                acc = out[b, d, i, j]
                for o in range(K):
                    xrow = xpad[b, d + di[o], i + dj[o], j + dk[o]]
                    m = lw[o]
                    for ci in range(CinB):
                        xv = xrow[ci]
                        for co in range(CoutB):
                            acc[co] += m[ci, co] * xv
    return out


@njit(parallel=True, **_OPTS)
def conv3d_backward_x(gout, lw, di, dj, dk, Dp, Hp, Wp):
    B, D, H, W, CoutB = gout.shape
    K, CinB, _ = lw.shape
    gxpad = np.zeros((B, Dp, Hp, Wp, CinB), dtype=gout.dtype)
    for b in prange(B):
        for d in range(D):
            for i in range(H):
                for j in range(W):
                    g = gout[b, d, i, j]
                    for o in range(K):
                        row = gxpad[b, d + di[o], i + dj[o], j + dk[o]]
                        m = lw[o]
                        for ci in range(CinB):
                            acc = 0.0
                            for co in range(CoutB):
                                acc += m[ci, co] * g[co]
                            row[ci] += acc
    return gxpad


@njit(parallel=True, **_OPTS)
def conv3d_backward_w(xpad, gout, di, dj, dk):
    B, D, H, W, CoutB = gout.shape
    K = di.shape[0]
    CinB = xpad.shape[4]
    glw = np.zeros((K, CinB, CoutB), dtype=gout.dtype)
    for o in prange(K):
        gm = glw[o]
        for b in range(B):
            for d in range(D):
                for i in range(H):
                    for j in range(W):
                        xrow = xpad[b, d + di[o], i + dj[o], j + dk[o]]
                        g = gout[b, d, i, j]
                        for ci in range(CinB):
                            xv = xrow[ci]
                            for co in range(CoutB):
                                gm[ci, co] += xv * g[co]
    return glw


# ---------------------------------------------------------------------------
# FDTD leapfrog half-steps, 2D
# ---------------------------------------------------------------------------

@njit(**_OPTS)
def fdtd2d_update_b(ex, ey, bzx, bzy, abxh, bbxh, abyh, bbyh):
    M, N = ex.shape
    for i in range(M - 1):
        for j in range(N):
            bzx[i, j] = abxh[i] * bzx[i, j] - bbxh[i] * (ey[i + 1, j] - ey[i, j])
    for i in range(M):
        for j in range(N - 1):
            bzy[i, j] = abyh[j] * bzy[i, j] + bbyh[j] * (ex[i, j + 1] - ex[i, j])


@njit(**_OPTS)
def fdtd2d_update_e(ex, ey, bzx, bzy, bz, inv_eps, aex, bex, aey, bey):
    M, N = ex.shape
    for i in range(M):
        for j in range(N):
            bz[i, j] = bzx[i, j] + bzy[i, j]
    for i in range(M):
        for j in range(1, N):
            ex[i, j] = aey[j] * ex[i, j] + bey[j] * inv_eps[i, j] * (bz[i, j] - bz[i, j - 1])
    for i in range(1, M):
        for j in range(N):
            ey[i, j] = aex[i] * ey[i, j] - bex[i] * inv_eps[i, j] * (bz[i, j] - bz[i - 1, j])


# ---------------------------------------------------------------------------
# FDTD leapfrog half-steps, 3D
# ---------------------------------------------------------------------------

@njit(parallel=True, **_OPTS)
def fdtd3d_update_b(exy, exz, eyz, eyx, ezx, ezy, ex, ey, ez,
                    bxy, bxz, byz, byx, bzx, bzy,
                    axh, bxh, ayh, byh, azh, bzh):
    L, M, N = ex.shape
    for i in prange(L):
        for j in range(M):
            for k in range(N):
                ex[i, j, k] = exy[i, j, k] + exz[i, j, k]
                ey[i, j, k] = eyz[i, j, k] + eyx[i, j, k]
                ez[i, j, k] = ezx[i, j, k] + ezy[i, j, k]
    for i in prange(L):
        for j in range(M):
            for k in range(N):
                if j < M - 1:
                    bxy[i, j, k] = ayh[j] * bxy[i, j, k] - byh[j] * (ez[i, j + 1, k] - ez[i, j, k])
                if k < N - 1:
                    bxz[i, j, k] = azh[k] * bxz[i, j, k] + bzh[k] * (ey[i, j, k + 1] - ey[i, j, k])
                    byz[i, j, k] = azh[k] * byz[i, j, k] - bzh[k] * (ex[i, j, k + 1] - ex[i, j, k])
                if i < L - 1:
                    byx[i, j, k] = axh[i] * byx[i, j, k] + bxh[i] * (ez[i + 1, j, k] - ez[i, j, k])
                    bzx[i, j, k] = axh[i] * bzx[i, j, k] - bxh[i] * (ey[i + 1, j, k] - ey[i, j, k])
                if j < M - 1:
                    bzy[i, j, k] = ayh[j] * bzy[i, j, k] + byh[j] * (ex[i, j + 1, k] - ex[i, j, k])


@njit(parallel=True, **_OPTS)
def fdtd3d_update_e(bxy, bxz, byz, byx, bzx, bzy, bx, by, bz,
                    exy, exz, eyz, eyx, ezx, ezy, inv_eps,
                    axi, bxi, ayi, byi, azi, bzi):
    L, M, N = bx.shape
    for i in prange(L):
        for j in range(M):
            for k in range(N):
                bx[i, j, k] = bxy[i, j, k] + bxz[i, j, k]
                by[i, j, k] = byz[i, j, k] + byx[i, j, k]
                bz[i, j, k] = bzx[i, j, k] + bzy[i, j, k]
    for i in prange(L):
        for j in range(M):
            for k in range(N):
                ie = inv_eps[i, j, k]
                if j > 0:
                    exy[i, j, k] = ayi[j] * exy[i, j, k] + byi[j] * ie * (bz[i, j, k] - bz[i, j - 1, k])
                if k > 0:
                    exz[i, j, k] = azi[k] * exz[i, j, k] - bzi[k] * ie * (by[i, j, k] - by[i, j, k - 1])
                    eyz[i, j, k] = azi[k] * eyz[i, j, k] + bzi[k] * ie * (bx[i, j, k] - bx[i, j, k - 1])
                if i > 0:
                    eyx[i, j, k] = axi[i] * eyx[i, j, k] - bxi[i] * ie * (bz[i, j, k] - bz[i - 1, j, k])
                    ezx[i, j, k] = axi[i] * ezx[i, j, k] + bxi[i] * ie * (by[i, j, k] - by[i - 1, j, k])
                if j > 0:
                    ezy[i, j, k] = ayi[j] * ezy[i, j, k] - byi[j] * ie * (bx[i, j, k] - bx[i, j - 1, k])
