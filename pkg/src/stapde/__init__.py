"""Geometric-algebra ResNet surrogates for Maxwell's equations.

Subpackages: `algebra` (Clifford algebra core), `mvtensor` (multivector
tensors with reverse-mode autodiff), `fdtd` (Yee-grid Maxwell solver),
`dataset` (trajectory containers and field embeddings), `models` (the two
ResNet architectures), `harness` (training/metrics/rollout), `cli`.

Hot kernels live in `stapde.kernels` and run through numba when available;
set STAPDE_BACKEND=numpy to force the pure-numpy fallback.
"""

__version__ = "0.1.0"
