"""Cross-checks the numba and numpy kernel backends against each other."""

import numpy as np
import pytest

from stapde.kernels import get_impl

numba_impl = get_impl("numba")
numpy_impl = get_impl("numpy")


def _offsets(k, rank):
    grids = np.meshgrid(*[np.arange(k)] * rank, indexing="ij")
    return [np.ascontiguousarray(g.ravel()).astype(np.int64) for g in grids]


@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-4)])
def test_conv2d_backends_agree(dtype, tol):
    rng = np.random.default_rng(0)
    B, H, W, cinb, coutb, k = 2, 6, 7, 12, 8, 3
    xpad = rng.normal(size=(B, H + 2, W + 2, cinb)).astype(dtype)
    lw = rng.normal(size=(k * k, cinb, coutb)).astype(dtype)
    gout = rng.normal(size=(B, H, W, coutb)).astype(dtype)
    di, dj = _offsets(k, 2)

    out_a = numba_impl.conv2d_forward(xpad, lw, di, dj, H, W)
    out_b = numpy_impl.conv2d_forward(xpad, lw, di, dj, H, W)
    np.testing.assert_allclose(out_a, out_b, rtol=tol, atol=tol)

    gx_a = numba_impl.conv2d_backward_x(gout, lw, di, dj, H + 2, W + 2)
    gx_b = numpy_impl.conv2d_backward_x(gout, lw, di, dj, H + 2, W + 2)
    np.testing.assert_allclose(gx_a, gx_b, rtol=tol, atol=tol)

    gw_a = numba_impl.conv2d_backward_w(xpad, gout, di, dj)
    gw_b = numpy_impl.conv2d_backward_w(xpad, gout, di, dj)
    np.testing.assert_allclose(gw_a, gw_b, rtol=tol, atol=tol)


def test_conv3d_backends_agree():
    rng = np.random.default_rng(1)
    B, D, H, W, cinb, coutb, k = 1, 4, 5, 4, 8, 6, 3
    xpad = rng.normal(size=(B, D + 2, H + 2, W + 2, cinb))
    lw = rng.normal(size=(k ** 3, cinb, coutb))
    gout = rng.normal(size=(B, D, H, W, coutb))
    di, dj, dk = _offsets(k, 3)

    np.testing.assert_allclose(
        numba_impl.conv3d_forward(xpad, lw, di, dj, dk, D, H, W),
        numpy_impl.conv3d_forward(xpad, lw, di, dj, dk, D, H, W),
        rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(
        numba_impl.conv3d_backward_x(gout, lw, di, dj, dk, D + 2, H + 2, W + 2),
        numpy_impl.conv3d_backward_x(gout, lw, di, dj, dk, D + 2, H + 2, W + 2),
        rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(
        numba_impl.conv3d_backward_w(xpad, gout, di, dj, dk),
        numpy_impl.conv3d_backward_w(xpad, gout, di, dj, dk),
        rtol=1e-12, atol=1e-12)


def _coeffs(n, dt, rng):
    sigma = np.abs(rng.normal(size=n)) * 0.5
    sigma[2:-2] = 0.0
    a = (1 - 0.5 * sigma * dt) / (1 + 0.5 * sigma * dt)
    b = dt / (1 + 0.5 * sigma * dt)
    return a, b


def test_fdtd2d_backends_agree():
    rng = np.random.default_rng(2)
    M, N = 12, 13
    dt = 0.35
    axi, bxi = _coeffs(M, dt, rng)
    ayi, byi = _coeffs(N, dt, rng)
    axh, bxh = _coeffs(M, dt, rng)
    ayh, byh = _coeffs(N, dt, rng)
    inv_eps = 1.0 / rng.uniform(1.0, 3.0, (M, N))

    def init():
        return (rng_state.normal(size=(M, N)) for _ in range(4))

    rng_state = np.random.default_rng(3)
    ex1, ey1, bzx1, bzy1 = init()
    rng_state = np.random.default_rng(3)
    ex2, ey2, bzx2, bzy2 = init()
    bz1, bz2 = np.zeros((M, N)), np.zeros((M, N))

    for _ in range(5):
        numba_impl.fdtd2d_update_b(ex1, ey1, bzx1, bzy1, axh, bxh, ayh, byh)
        numba_impl.fdtd2d_update_e(ex1, ey1, bzx1, bzy1, bz1, inv_eps, axi, bxi, ayi, byi)
        numpy_impl.fdtd2d_update_b(ex2, ey2, bzx2, bzy2, axh, bxh, ayh, byh)
        numpy_impl.fdtd2d_update_e(ex2, ey2, bzx2, bzy2, bz2, inv_eps, axi, bxi, ayi, byi)
    np.testing.assert_allclose(ex1, ex2, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(ey1, ey2, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(bzx1 + bzy1, bzx2 + bzy2, rtol=1e-12, atol=1e-13)


def test_fdtd3d_backends_agree():
    rng = np.random.default_rng(4)
    L, M, N = 9, 8, 10
    dt = 0.28
    coef_i = [_coeffs(n, dt, rng) for n in (L, M, N)]
    coef_h = [_coeffs(n, dt, rng) for n in (L, M, N)]
    inv_eps = 1.0 / rng.uniform(1.0, 3.0, (L, M, N))

    def split_set(seed):
        r = np.random.default_rng(seed)
        return [r.normal(size=(L, M, N)) for _ in range(6)]

    e1, b1 = split_set(5), split_set(6)
    e2, b2 = split_set(5), split_set(6)
    bufs1 = [np.zeros((L, M, N)) for _ in range(6)]
    bufs2 = [np.zeros((L, M, N)) for _ in range(6)]
    (axi, bxi), (ayi, byi), (azi, bzi) = coef_i
    (axh, bxh), (ayh, byh), (azh, bzh) = coef_h

    for _ in range(3):
        numba_impl.fdtd3d_update_b(*e1, *bufs1[:3], *b1, axh, bxh, ayh, byh, azh, bzh)
        numba_impl.fdtd3d_update_e(*b1, *bufs1[3:], *e1, inv_eps,
                                   axi, bxi, ayi, byi, azi, bzi)
        numpy_impl.fdtd3d_update_b(e2, bufs2[:3], b2, axh, bxh, ayh, byh, azh, bzh)
        numpy_impl.fdtd3d_update_e(b2, bufs2[3:], e2, inv_eps,
                                   axi, bxi, ayi, byi, azi, bzi)
    for a, b in zip(e1 + b1, e2 + b2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


def test_same_backend_is_bitwise_deterministic():
    rng = np.random.default_rng(7)
    B, H, W, cinb, coutb, k = 2, 8, 8, 16, 16, 3
    xpad = rng.normal(size=(B, H + 2, W + 2, cinb)).astype(np.float32)
    lw = rng.normal(size=(k * k, cinb, coutb)).astype(np.float32)
    di, dj = _offsets(k, 2)
    for impl in (numba_impl, numpy_impl):
        a = impl.conv2d_forward(xpad, lw, di, dj, H, W)
        b = impl.conv2d_forward(xpad, lw, di, dj, H, W)
        assert np.array_equal(a, b)
