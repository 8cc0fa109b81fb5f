"""Independent brute-force oracles used by the unit and acceptance suites.

Everything here is deliberately written the slow, literal way (symbol lists,
python loops) so that it shares no code path with the package internals it
checks.
"""

import numpy as np


def blade_product_oracle(a_bits: int, b_bits: int, metric) -> tuple[int, int]:
    """Product of two basis blades by explicit symbol-list manipulation.

    Concatenates the two ascending vector lists, bubble-sorts counting swaps,
    then cancels adjacent repeated vectors using their metric squares.
    Returns (result bits, sign in {-1, 0, +1}).
    """
    symbols = [i for i in range(len(metric)) if a_bits >> i & 1]
    symbols += [i for i in range(len(metric)) if b_bits >> i & 1]
    sign = 1
    changed = True
    while changed:
        changed = False
        for i in range(len(symbols) - 1):
            if symbols[i] > symbols[i + 1]:
                symbols[i], symbols[i + 1] = symbols[i + 1], symbols[i]
                sign = -sign
                changed = True
    remaining = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == symbols[i + 1]:
            sign *= metric[symbols[i]]
            i += 2
        else:
            remaining.append(symbols[i])
            i += 1
    bits = 0
    for s in remaining:
        bits |= 1 << s
    return bits, sign


def mse_oracle(pred: np.ndarray, target: np.ndarray, blade_mask) -> float:
    """Scalar-loop MSE: sum over masked blades, mean over batch and grid.

    pred/target: (B, C, *spatial, blades) arrays.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    spatial = pred.shape[2:-1]
    total = 0.0
    count = 0
    for b in range(pred.shape[0]):
        for c in range(pred.shape[1]):
            for pos in np.ndindex(*spatial):
                s = 0.0
                for blade in blade_mask:
                    d = pred[(b, c) + pos + (blade,)] - target[(b, c) + pos + (blade,)]
                    s += d * d
                total += s
                count += 1
    return total / count


def correlation_oracle(t: np.ndarray, t_hat: np.ndarray) -> float:
    """Literal (1 / #cells) * sum of component dot products, python loops.

    t/t_hat: (components, *spatial) field frames.
    """
    t = np.asarray(t, dtype=np.float64)
    t_hat = np.asarray(t_hat, dtype=np.float64)
    spatial = t.shape[1:]
    total = 0.0
    for pos in np.ndindex(*spatial):
        dot = 0.0
        for c in range(t.shape[0]):
            dot += t[(c,) + pos] * t_hat[(c,) + pos]
        total += dot
    return total / np.prod(spatial)


def ssim_oracle(x: np.ndarray, y: np.ndarray, data_range: float, win: int = 7,
                k1: float = 0.01, k2: float = 0.03) -> float:
    """SSIM of two 2D images: explicit loop over valid win x win windows,
    population statistics, uniform weighting, mean over window positions."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w = x.shape
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    n = win * win
    vals = []
    for i in range(h - win + 1):
        for j in range(w - win + 1):
            xs = x[i:i + win, j:j + win]
            ys = y[i:i + win, j:j + win]
            mx = xs.sum() / n
            my = ys.sum() / n
            vx = (xs * xs).sum() / n - mx * mx
            vy = (ys * ys).sum() / n - my * my
            cxy = (xs * ys).sum() / n - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def finite_difference_grads(f, arrays, h: float = 1e-3):
    """Central-difference gradient of scalar f() w.r.t. every array element.

    `f` must re-run the forward path reading the (mutated) arrays.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            fp = f()
            flat[i] = keep - h
            fm = f()
            flat[i] = keep
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise relative error with the gradient-check denominator."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))
