"""Multivector tensors with reverse-mode automatic differentiation.

An MvTensor holds blade coefficients laid out (batch, channels, *spatial,
blades). The Clifford convolution is executed as an ordinary convolution in a
channel*blade space: for fixed input blade b and output blade r the
contributing kernel blade is uniquely r ^ b, so the kernel tensor is "lifted"
into a (taps, Cin*blades, Cout*blades) matrix with signs gathered from the
Cayley table, and the adjoints reuse the same table structure transposed.

Gradients are recorded on an explicit Tape; `Tape.backward` replays the
records in exact reverse execution order, accumulating additively. Training
runs float32 by default; gradient checks use float64 tensors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .algebra import Signature, build_table
from .errors import UsageError

CHECKPOINT_MAGIC = b"STAPDECK"


# ---------------------------------------------------------------------------
# Tensors and the tape
# ---------------------------------------------------------------------------

class MvTensor:
    """Dense tensor of multivector coefficients, (B, C, *spatial, blades)."""

    def __init__(self, signature: Signature, data: np.ndarray, requires_grad: bool = False):
        data = np.asarray(data)
        if data.shape[-1] != signature.n_blades:
            raise UsageError(
                f"last axis must have {signature.n_blades} blades, got shape {data.shape}"
            )
        self.signature = signature
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"MvTensor(shape={self.data.shape}, dtype={self.data.dtype})"


class ScalarNode:
    """0-d node produced by losses; the seed of a backward pass."""

    def __init__(self, value: float, dtype=np.float64):
        self.data = np.asarray(value, dtype=dtype)
        self.grad: np.ndarray | None = None

    def item(self) -> float:
        return float(self.data)


def mv_zeros(sig: Signature, shape, dtype=np.float32) -> MvTensor:
    return MvTensor(sig, np.zeros(tuple(shape) + (sig.n_blades,), dtype=dtype))


_ACTIVE_TAPE: list["Tape"] = []


class Tape:
    """Ordered record of executed primitives; backward walks it in reverse."""

    def __init__(self):
        self._records: list = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPE.pop()
        return False

    def record(self, backward_fn) -> None:
        self._records.append(backward_fn)

    def backward(self, loss: ScalarNode) -> None:
        """Seed d(loss)/d(loss) = 1 and propagate to every recorded input."""
        if not self._records:
            raise UsageError("backward called before any forward op was taped")
        if np.ndim(loss.data) != 0:
            raise UsageError("loss must be a scalar node")
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._records):
            fn()


def _tape() -> Tape | None:
    return _ACTIVE_TAPE[-1] if _ACTIVE_TAPE else None


def _accumulate(t, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# Cayley-table lift of convolution kernels
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _lift_arrays_cached(metric: tuple, dtype_str: str):
    table = build_table(Signature(metric))
    nb = 1 << len(metric)
    idx = np.arange(nb)
    xor = idx[:, None] ^ idx[None, :]
    raw = table.sign.astype(np.dtype(dtype_str))
    lift = raw[xor, idx[None, :]]
    for a in (xor, raw, lift):
        a.setflags(write=False)
    return xor, lift, raw


def _lift_arrays(sig: Signature, dtype):
    """(XOR, LIFT_SGN, RAW_SGN) index/sign matrices for kernel lift/unlift."""
    return _lift_arrays_cached(sig.metric, np.dtype(dtype).str)


def lift_kernel(sig: Signature, w: np.ndarray) -> np.ndarray:
    """Lift (Cout, Cin, *taps, blades) weights to (K, Cin*nb, Cout*nb)."""
    nb = sig.n_blades
    xor, lift_sgn, _ = _lift_arrays(sig, w.dtype)
    cout, cin = w.shape[0], w.shape[1]
    k_total = int(np.prod(w.shape[2:-1]))
    wk = w.reshape(cout, cin, k_total, nb)
    wg = wk[:, :, :, xor] * lift_sgn  # (Cout, Cin, K, br, bb)
    return np.ascontiguousarray(wg.transpose(2, 1, 4, 0, 3)).reshape(
        k_total, cin * nb, cout * nb
    )


def unlift_kernel_grad(sig: Signature, glw: np.ndarray, w_shape) -> np.ndarray:
    """Adjoint of lift_kernel: (K, Cin*nb, Cout*nb) grads back to w's shape."""
    nb = sig.n_blades
    xor, _, raw_sgn = _lift_arrays(sig, glw.dtype)
    cout, cin = w_shape[0], w_shape[1]
    k_total = int(np.prod(w_shape[2:-1]))
    g5 = glw.reshape(k_total, cin, nb, cout, nb).transpose(3, 1, 0, 4, 2)
    # g5 axes: (Cout, Cin, K, br, bb); pick br = a ^ bb and weigh by sign[a, bb]
    gsel = g5[:, :, :, xor, np.arange(nb)[None, :]]
    gw = (gsel * raw_sgn).sum(axis=-1)
    return np.ascontiguousarray(gw).reshape(w_shape)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

@dataclass
class ConvKernel:
    """Clifford convolution parameters: multivector taps plus a bias."""

    weights: MvTensor  # (Cout, Cin, *taps, blades)
    bias: MvTensor  # (Cout, blades)

    def __post_init__(self):
        taps = self.weights.shape[2:-1]
        if any(k % 2 == 0 for k in taps):
            raise UsageError(f"kernel taps must be odd, got {taps}")
        if self.weights.signature != self.bias.signature:
            raise UsageError("weights and bias must share a signature")

    @property
    def signature(self) -> Signature:
        return self.weights.signature

    @property
    def cin(self) -> int:
        return self.weights.shape[1]

    @property
    def cout(self) -> int:
        return self.weights.shape[0]


def init_conv_kernel(sig: Signature, cin: int, cout: int, k: int, spatial_dim: int,
                     rng: np.random.Generator, dtype=np.float32) -> ConvKernel:
    """Fan-in scaled uniform init: s = sqrt(1 / (Cin * k^d * blades))."""
    nb = sig.n_blades
    s = float(np.sqrt(1.0 / (cin * k ** spatial_dim * nb)))
    w = rng.uniform(-s, s, (cout, cin) + (k,) * spatial_dim + (nb,)).astype(dtype)
    b = np.zeros((cout, nb), dtype=dtype)
    return ConvKernel(MvTensor(sig, w, requires_grad=True),
                      MvTensor(sig, b, requires_grad=True))


def _tap_offsets(taps):
    grids = np.meshgrid(*[np.arange(k) for k in taps], indexing="ij")
    return [np.ascontiguousarray(g.ravel()).astype(np.int64) for g in grids]


def clifford_conv(x: MvTensor, kern: ConvKernel, padding: str = "same") -> MvTensor:
    """out[b,co,p] = bias[co] + sum_ci sum_off gp(w[co,ci,off], x[b,ci,p+off])."""
    if x.signature != kern.signature:
        raise UsageError("input and kernel signature mismatch")
    if x.shape[1] != kern.cin:
        raise UsageError(f"expected {kern.cin} input channels, got {x.shape[1]}")
    if padding not in ("same", "valid"):
        raise UsageError(f"padding must be 'same' or 'valid', got {padding!r}")
    sig = x.signature
    nb = sig.n_blades
    spatial = x.shape[2:-1]
    ndim_sp = len(spatial)
    taps = kern.weights.shape[2:-1]
    if len(taps) != ndim_sp:
        raise UsageError(f"kernel has {len(taps)} spatial axes, input has {ndim_sp}")

    pads = [k // 2 if padding == "same" else 0 for k in taps]
    out_sp = tuple(s + 2 * p - k + 1 for s, p, k in zip(spatial, pads, taps))
    if any(s < 1 for s in out_sp):
        raise UsageError(f"input {spatial} too small for kernel {taps} with {padding}")

    b_sz, cin = x.shape[0], x.shape[1]
    # (B, C, *sp, nb) -> (B, *sp, C*nb), zero-padded spatially
    perm = (0,) + tuple(range(2, 2 + ndim_sp)) + (1, 1 + ndim_sp + 1)
    xk = np.ascontiguousarray(x.data.transpose(perm)).reshape(
        (b_sz,) + spatial + (cin * nb,))
    pad_spec = [(0, 0)] + [(p, p) for p in pads] + [(0, 0)]
    xpad = np.pad(xk, pad_spec) if any(pads) else xk

    lw = lift_kernel(sig, kern.weights.data)
    offs = _tap_offsets(taps)
    if ndim_sp == 2:
        out_k = kernels.conv2d_forward(xpad, lw, offs[0], offs[1], out_sp[0], out_sp[1])
    elif ndim_sp == 3:
        out_k = kernels.conv3d_forward(xpad, lw, offs[0], offs[1], offs[2],
                                       out_sp[0], out_sp[1], out_sp[2])
    else:
        raise UsageError(f"spatial rank must be 2 or 3, got {ndim_sp}")

    cout = kern.cout
    out_k = out_k.reshape((b_sz,) + out_sp + (cout, nb))
    bias_bc = kern.bias.data.reshape((1,) * (1 + ndim_sp) + (cout, nb))
    out_k = out_k + bias_bc
    inv_perm = (0, 1 + ndim_sp) + tuple(range(1, 1 + ndim_sp)) + (2 + ndim_sp,)
    out = MvTensor(sig, np.ascontiguousarray(out_k.transpose(inv_perm)))

    tape = _tape()
    if tape is not None:
        xpad_shape = xpad.shape

        def backward():
            if out.grad is None:
                return
            g = np.ascontiguousarray(out.grad.transpose(perm)).reshape(
                (b_sz,) + out_sp + (cout * nb,))
            _accumulate(kern.bias, g.reshape(-1, cout, nb).sum(axis=0))
            if ndim_sp == 2:
                glw = kernels.conv2d_backward_w(xpad, g, offs[0], offs[1])
                gxpad = kernels.conv2d_backward_x(g, lw, offs[0], offs[1],
                                                  xpad_shape[1], xpad_shape[2])
            else:
                glw = kernels.conv3d_backward_w(xpad, g, offs[0], offs[1], offs[2])
                gxpad = kernels.conv3d_backward_x(g, lw, offs[0], offs[1], offs[2],
                                                  xpad_shape[1], xpad_shape[2], xpad_shape[3])
            _accumulate(kern.weights,
                        unlift_kernel_grad(sig, glw, kern.weights.shape))
            crop = tuple([slice(None)] + [slice(p, p + s) for p, s in zip(pads, spatial)]
                         + [slice(None)])
            gx = gxpad[crop].reshape((b_sz,) + spatial + (cin, nb))
            _accumulate(x, np.ascontiguousarray(gx.transpose(inv_perm)))

        tape.record(backward)
    return out


# ---------------------------------------------------------------------------
# Pointwise ops and loss
# ---------------------------------------------------------------------------

def ga_relu(x: MvTensor) -> MvTensor:
    """max(0, .) on every blade coefficient independently."""
    out = MvTensor(x.signature, np.maximum(x.data, 0))
    tape = _tape()
    if tape is not None:
        mask = x.data > 0

        def backward():
            if out.grad is None:
                return
            _accumulate(x, out.grad * mask)

        tape.record(backward)
    return out


def residual_add(x: MvTensor, y: MvTensor) -> MvTensor:
    if x.signature != y.signature:
        raise UsageError("signature mismatch in residual_add")
    if x.shape != y.shape:
        raise UsageError(f"shape mismatch in residual_add: {x.shape} vs {y.shape}")
    out = MvTensor(x.signature, x.data + y.data)
    tape = _tape()
    if tape is not None:

        def backward():
            if out.grad is None:
                return
            _accumulate(x, out.grad)
            _accumulate(y, out.grad)

        tape.record(backward)
    return out


def mse_loss(pred: MvTensor, target: np.ndarray, blade_mask) -> ScalarNode:
    """Sum of squared diffs over masked blades, mean over batch/channel/grid."""
    blade_mask = np.asarray(blade_mask, dtype=np.intp)
    if blade_mask.size == 0:
        raise UsageError("blade mask must not be empty")
    target = np.asarray(target)
    if target.shape != pred.shape:
        raise UsageError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    diff = pred.data[..., blade_mask].astype(np.float64) \
        - target[..., blade_mask].astype(np.float64)
    denom = float(np.prod(pred.shape[:-1]))
    loss = ScalarNode((diff * diff).sum() / denom)
    tape = _tape()
    if tape is not None:

        def backward():
            if loss.grad is None:
                return
            g = np.zeros(pred.shape, dtype=np.float64)
            g[..., blade_mask] = (2.0 / denom) * diff * loss.grad
            _accumulate(pred, g.astype(pred.dtype))

        tape.record(backward)
    return loss


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[MvTensor], lr: float = 1e-3) -> "AdamState":
        return cls(lr=lr,
                   m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params: list[MvTensor], grads: list[np.ndarray], state: AdamState) -> None:
    """Standard bias-corrected Adam update, in place on params."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UsageError("params/grads/state length mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise UsageError("gradient shape mismatch in adam_step")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / c1
        vhat = v / c2
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, config: dict, params: list[np.ndarray]) -> None:
    """magic, config echo, u64 parameter count, then f32 LE arrays in order."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    total = sum(int(p.size) for p in params)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<QI", total, len(params)))
        for p in params:
            f.write(struct.pack("<B", p.ndim))
            f.write(struct.pack(f"<{p.ndim}I", *p.shape))
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as f:
        if f.read(8) != CHECKPOINT_MAGIC:
            raise UsageError(f"{path} is not a checkpoint file")
        (blob_len,) = struct.unpack("<I", f.read(4))
        config = json.loads(f.read(blob_len).decode("utf-8"))
        total, n_arrays = struct.unpack("<QI", f.read(12))
        params = []
        for _ in range(n_arrays):
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            count = int(np.prod(shape))
            data = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            params.append(np.ascontiguousarray(data))
    if total != sum(p.size for p in params):
        raise UsageError(f"checkpoint {path} parameter count mismatch")
    return config, params
