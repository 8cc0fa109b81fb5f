"""Pure-numpy backend: vectorized slices + BLAS matmuls.

Convolution works on channel-blade-fused arrays. `lw` is the table-lifted
kernel, shape (K, CinB, CoutB) with K = prod(kernel taps); `di/dj/dk` are the
per-tap spatial offsets into the padded input. FDTD updates are split-field
leapfrog half-steps; coefficient vectors (a*, b*) carry the absorbing-layer
damping per staggered position and reduce to (1, dt) where sigma = 0.
"""

import numpy as np


# ---------------------------------------------------------------------------
# Clifford convolution (lifted to ordinary convolution), 2D spatial
# ---------------------------------------------------------------------------

def conv2d_forward(xpad, lw, di, dj, H, W):
    B = xpad.shape[0]
    K, CinB, CoutB = lw.shape
    out = np.zeros((B * H * W, CoutB), dtype=xpad.dtype)
    for o in range(K):
        xs = np.ascontiguousarray(
            xpad[:, di[o]:di[o] + H, dj[o]:dj[o] + W, :]
        ).reshape(-1, CinB)
        out += xs @ lw[o]
    return out.reshape(B, H, W, CoutB)


def conv2d_backward_x(gout, lw, di, dj, Hp, Wp):
    B, H, W, CoutB = gout.shape
    K, CinB, _ = lw.shape
    gflat = gout.reshape(-1, CoutB)
    gxpad = np.zeros((B, Hp, Wp, CinB), dtype=gout.dtype)
    for o in range(K):
        gslice = (gflat @ lw[o].T).reshape(B, H, W, CinB)
        gxpad[:, di[o]:di[o] + H, dj[o]:dj[o] + W, :] += gslice
    return gxpad


def conv2d_backward_w(xpad, gout, di, dj):
    B, H, W, CoutB = gout.shape
    K = di.shape[0]
    CinB = xpad.shape[3]
    gflat = gout.reshape(-1, CoutB)
    glw = np.zeros((K, CinB, CoutB), dtype=gout.dtype)
    for o in range(K):
        xs = np.ascontiguousarray(
            xpad[:, di[o]:di[o] + H, dj[o]:dj[o] + W, :]
        ).reshape(-1, CinB)
        glw[o] = xs.T @ gflat
    return glw


# ---------------------------------------------------------------------------
# Clifford convolution, 3D spatial
# ---------------------------------------------------------------------------

def conv3d_forward(xpad, lw, di, dj, dk, D, H, W):
    B = xpad.shape[0]
    K, CinB, CoutB = lw.shape
    out = np.zeros((B * D * H * W, CoutB), dtype=xpad.dtype)
    for o in range(K):
        xs = np.ascontiguousarray(
            xpad[:, di[o]:di[o] + D, dj[o]:dj[o] + H, dk[o]:dk[o] + W, :]
        ).reshape(-1, CinB)
        out += xs @ lw[o]
    return out.reshape(B, D, H, W, CoutB)


def conv3d_backward_x(gout, lw, di, dj, dk, Dp, Hp, Wp):
    B, D, H, W, CoutB = gout.shape
    K, CinB, _ = lw.shape
    gflat = gout.reshape(-1, CoutB)
    gxpad = np.zeros((B, Dp, Hp, Wp, CinB), dtype=gout.dtype)
    for o in range(K):
        gslice = (gflat @ lw[o].T).reshape(B, D, H, W, CinB)
        gxpad[:, di[o]:di[o] + D, dj[o]:dj[o] + H, dk[o]:dk[o] + W, :] += gslice
    return gxpad


def conv3d_backward_w(xpad, gout, di, dj, dk):
    B, D, H, W, CoutB = gout.shape
    K = di.shape[0]
    CinB = xpad.shape[4]
    gflat = gout.reshape(-1, CoutB)
    glw = np.zeros((K, CinB, CoutB), dtype=gout.dtype)
    for o in range(K):
        xs = np.ascontiguousarray(
            xpad[:, di[o]:di[o] + D, dj[o]:dj[o] + H, dk[o]:dk[o] + W, :]
        ).reshape(-1, CinB)
        glw[o] = xs.T @ gflat
    return glw


# ---------------------------------------------------------------------------
# FDTD leapfrog half-steps, 2D (Ex, Ey, Bz with Bz split for the PML)
# ---------------------------------------------------------------------------

def fdtd2d_update_b(ex, ey, bzx, bzy, abxh, bbxh, abyh, bbyh):
    bzx[:-1, :] = abxh[:-1, None] * bzx[:-1, :] - bbxh[:-1, None] * (ey[1:, :] - ey[:-1, :])
    bzy[:, :-1] = abyh[None, :-1] * bzy[:, :-1] + bbyh[None, :-1] * (ex[:, 1:] - ex[:, :-1])


def fdtd2d_update_e(ex, ey, bzx, bzy, bz, inv_eps, aex, bex, aey, bey):
    np.add(bzx, bzy, out=bz)
    ex[:, 1:] = aey[None, 1:] * ex[:, 1:] + bey[None, 1:] * inv_eps[:, 1:] * (bz[:, 1:] - bz[:, :-1])
    ey[1:, :] = aex[1:, None] * ey[1:, :] - bex[1:, None] * inv_eps[1:, :] * (bz[1:, :] - bz[:-1, :])


# ---------------------------------------------------------------------------
# FDTD leapfrog half-steps, 3D (all six components split for the PML)
# ---------------------------------------------------------------------------

def fdtd3d_update_b(e_splits, e_bufs, b_splits,
                    axh, bxh, ayh, byh, azh, bzh):
    exy, exz, eyz, eyx, ezx, ezy = e_splits
    ex, ey, ez = e_bufs
    bxy, bxz, byz, byx, bzx, bzy = b_splits
    np.add(exy, exz, out=ex)
    np.add(eyz, eyx, out=ey)
    np.add(ezx, ezy, out=ez)
    # dB/dt = -curl E, one curl term per split component
    bxy[:, :-1, :] = ayh[None, :-1, None] * bxy[:, :-1, :] - byh[None, :-1, None] * (ez[:, 1:, :] - ez[:, :-1, :])
    bxz[:, :, :-1] = azh[None, None, :-1] * bxz[:, :, :-1] + bzh[None, None, :-1] * (ey[:, :, 1:] - ey[:, :, :-1])
    byz[:, :, :-1] = azh[None, None, :-1] * byz[:, :, :-1] - bzh[None, None, :-1] * (ex[:, :, 1:] - ex[:, :, :-1])
    byx[:-1, :, :] = axh[:-1, None, None] * byx[:-1, :, :] + bxh[:-1, None, None] * (ez[1:, :, :] - ez[:-1, :, :])
    bzx[:-1, :, :] = axh[:-1, None, None] * bzx[:-1, :, :] - bxh[:-1, None, None] * (ey[1:, :, :] - ey[:-1, :, :])
    bzy[:, :-1, :] = ayh[None, :-1, None] * bzy[:, :-1, :] + byh[None, :-1, None] * (ex[:, 1:, :] - ex[:, :-1, :])


def fdtd3d_update_e(b_splits, b_bufs, e_splits, inv_eps,
                    axi, bxi, ayi, byi, azi, bzi):
    bxy, bxz, byz, byx, bzx, bzy = b_splits
    bx, by, bz = b_bufs
    exy, exz, eyz, eyx, ezx, ezy = e_splits
    np.add(bxy, bxz, out=bx)
    np.add(byz, byx, out=by)
    np.add(bzx, bzy, out=bz)
    # dE/dt = +curl B / eps, one curl term per split component
    exy[:, 1:, :] = ayi[None, 1:, None] * exy[:, 1:, :] + byi[None, 1:, None] * inv_eps[:, 1:, :] * (bz[:, 1:, :] - bz[:, :-1, :])
    exz[:, :, 1:] = azi[None, None, 1:] * exz[:, :, 1:] - bzi[None, None, 1:] * inv_eps[:, :, 1:] * (by[:, :, 1:] - by[:, :, :-1])
    eyz[:, :, 1:] = azi[None, None, 1:] * eyz[:, :, 1:] + bzi[None, None, 1:] * inv_eps[:, :, 1:] * (bx[:, :, 1:] - bx[:, :, :-1])
    eyx[1:, :, :] = axi[1:, None, None] * eyx[1:, :, :] - bxi[1:, None, None] * inv_eps[1:, :, :] * (bz[1:, :, :] - bz[:-1, :, :])
    ezx[1:, :, :] = axi[1:, None, None] * ezx[1:, :, :] + bxi[1:, None, None] * inv_eps[1:, :, :] * (by[1:, :, :] - by[:-1, :, :])
    ezy[:, 1:, :] = ayi[None, 1:, None] * ezy[:, 1:, :] - byi[None, 1:, None] * inv_eps[:, 1:, :] * (bx[:, 1:, :] - bx[:, :-1, :])
