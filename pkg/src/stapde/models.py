"""The two surrogate architectures, built from one algebra-generic recipe.

A model is a chain of `blocks` Clifford convolutions: the first lifts the two
input time steps to C channels (conv + ReLU), the middle blocks are conv +
ReLU wrapped in identity skips, and the last collapses to one output channel
with no activation (fields are signed). The Euclidean-algebra instance is the
Clifford ResNet; the spacetime instance is the STAResNet. They differ only in
signature and channel count.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .algebra import Signature, algebra_by_name
from .errors import ConfigError, UsageError
from .mvtensor import (
    ConvKernel,
    MvTensor,
    clifford_conv,
    ga_relu,
    init_conv_kernel,
    residual_add,
)

# Channel defaults that roughly parameter-match the two architectures
# (2D pair and 3D pair each within 15% of one another).
DEFAULT_CHANNELS = {"ga2": 32, "sta2": 24, "ga3": 11, "sta3": 8}
SPATIAL_DIM = {"ga2": 2, "sta2": 2, "ga3": 3, "sta3": 3}


@dataclass(frozen=True)
class ModelConfig:
    algebra: str
    channels: int | None = None
    blocks: int = 20
    kernel: int = 3
    in_steps: int = 2
    out_steps: int = 1

    def __post_init__(self):
        if self.algebra not in DEFAULT_CHANNELS:
            raise ConfigError(f"unknown algebra {self.algebra!r}")
        if self.blocks < 2:
            raise ConfigError("need at least 2 blocks (lift + collapse)")
        if self.channels is not None and self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError("kernel size must be odd and positive")
        if (self.in_steps, self.out_steps) != (2, 1):
            raise ConfigError("the architecture takes 2 input steps and emits 1")

    @property
    def resolved_channels(self) -> int:
        return self.channels if self.channels is not None else DEFAULT_CHANNELS[self.algebra]

    @property
    def spatial_dim(self) -> int:
        return SPATIAL_DIM[self.algebra]

    @property
    def signature(self) -> Signature:
        return algebra_by_name(self.algebra)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class Model:
    """Built network: ordered Clifford conv layers plus the skip wiring."""

    def __init__(self, config: ModelConfig, kernels: list[ConvKernel]):
        self.config = config
        self.signature = config.signature
        self.kernels = kernels

    def parameters(self) -> list[MvTensor]:
        """Trainable tensors in deterministic registration order."""
        out = []
        for k in self.kernels:
            out.append(k.weights)
            out.append(k.bias)
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x: MvTensor) -> MvTensor:
        if x.signature != self.signature:
            raise UsageError("input algebra does not match the model")
        if x.shape[1] != self.config.in_steps:
            raise UsageError(
                f"expected {self.config.in_steps} input channels, got {x.shape[1]}")
        h = ga_relu(clifford_conv(x, self.kernels[0]))
        for kern in self.kernels[1:-1]:
            h = residual_add(h, ga_relu(clifford_conv(h, kern)))
        return clifford_conv(h, self.kernels[-1])

    __call__ = forward

    def param_arrays(self) -> list[np.ndarray]:
        return [p.data for p in self.parameters()]

    def load_param_arrays(self, arrays: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(arrays) != len(params):
            raise UsageError(f"expected {len(params)} arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            if tuple(a.shape) != tuple(p.data.shape):
                raise UsageError(f"array shape {a.shape} != parameter {p.data.shape}")
            p.data = a.astype(p.data.dtype, copy=True)


def build(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Instantiate the network with seeded fan-in-scaled initialization."""
    sig = cfg.signature
    c = cfg.resolved_channels
    dim = cfg.spatial_dim
    rng = np.random.default_rng([seed, 2 ** dim, sig.n_blades])
    chain = [(cfg.in_steps, c)] + [(c, c)] * (cfg.blocks - 2) + [(c, cfg.out_steps)]
    kernels = [init_conv_kernel(sig, cin, cout, cfg.kernel, dim, rng, dtype=dtype)
               for cin, cout in chain]
    return Model(cfg, kernels)


def param_count(model: Model) -> int:
    """Exact count: sum over layers of Cout*Cin*k^d*2^dim + Cout*2^dim."""
    return sum(int(p.data.size) for p in model.parameters())


def param_count_formula(cfg: ModelConfig) -> int:
    """Same count straight from the config, without building."""
    nb = cfg.signature.n_blades
    k_d = cfg.kernel ** cfg.spatial_dim
    c = cfg.resolved_channels
    chain = [(cfg.in_steps, c)] + [(c, c)] * (cfg.blocks - 2) + [(c, cfg.out_steps)]
    return sum(cout * cin * k_d * nb + cout * nb for cin, cout in chain)
