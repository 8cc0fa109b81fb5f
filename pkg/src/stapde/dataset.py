"""Trajectory persistence, windowing, and multivector embeddings.

A trajectory is a stack of colocated field frames: (Ex, Ey, Bz) per cell in
2D, (Ex, Ey, Ez, Bx, By, Bz) in 3D, saved every `stride` solver steps. The
binary container is little-endian with an 8-byte magic and a fixed header.

Field frames embed into multivectors per algebra: electric components on
vector (Euclidean) or timelike-bivector (spacetime) blades, magnetic ones
through the pseudoscalar product. The blade slots and their signs are always
computed with `algebra.gp` at first use, never hand-coded, so the embedding
is internally sign-consistent for every shipped algebra.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .algebra import ALGEBRAS, Multivector, Signature, gp, pseudoscalar
from .errors import ConfigError, UsageError

TRAJECTORY_MAGIC = b"STAPDE01"
_HEADER = struct.Struct("<IB3IdIIB")  # version, sdim, dims[3], dx, stride, frames, comps
CONTAINER_VERSION = 1


# ---------------------------------------------------------------------------
# Trajectory container
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Saved sequence of colocated frames, (F, components, *dims) float32."""

    dims: tuple[int, ...]
    dx: float
    stride: int
    frames: np.ndarray

    def __post_init__(self):
        comps = 3 if len(self.dims) == 2 else 6
        expect = (self.frames.shape[0], comps) + tuple(self.dims)
        if self.frames.shape != expect:
            raise UsageError(f"frames shape {self.frames.shape}, expected {expect}")

    @property
    def spatial_dim(self) -> int:
        return len(self.dims)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_components(self) -> int:
        return self.frames.shape[1]


def save_trajectory(path, traj: Trajectory) -> None:
    dims3 = tuple(traj.dims) + (1,) * (3 - len(traj.dims))
    header = _HEADER.pack(CONTAINER_VERSION, traj.spatial_dim, *dims3,
                          traj.dx, traj.stride, traj.n_frames, traj.n_components)
    with open(path, "wb") as f:
        f.write(TRAJECTORY_MAGIC)
        f.write(header)
        f.write(np.ascontiguousarray(traj.frames, dtype="<f4").tobytes())


def load_trajectory(path) -> Trajectory:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != TRAJECTORY_MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        version, sdim, d0, d1, d2, dx, stride, n_frames, comps = _HEADER.unpack(
            f.read(_HEADER.size))
        if version != CONTAINER_VERSION:
            raise ConfigError(f"{path}: unsupported container version {version}")
        dims = (d0, d1) if sdim == 2 else (d0, d1, d2)
        count = n_frames * comps * int(np.prod(dims))
        data = np.frombuffer(f.read(4 * count), dtype="<f4")
        if data.size != count:
            raise ConfigError(f"{path}: truncated payload")
    frames = np.ascontiguousarray(data).reshape((n_frames, comps) + dims)
    return Trajectory(dims=dims, dx=dx, stride=stride, frames=frames)


# ---------------------------------------------------------------------------
# Field <-> multivector embeddings
# ---------------------------------------------------------------------------

def _single_blade(mv: Multivector) -> tuple[int, float]:
    nz = np.nonzero(mv.coeffs)[0]
    assert nz.size == 1, "embedding product must land on a single blade"
    return int(nz[0]), float(mv.coeffs[nz[0]])


@lru_cache(maxsize=None)
def _embedding_map_cached(metric: tuple) -> tuple[tuple[int, float], ...]:
    sig = Signature(metric)
    euclidean = all(m == 1 for m in metric)
    basis = [Multivector.blade(sig, 1 << i) for i in range(sig.dim)]
    slots: list[tuple[int, float]] = []
    if euclidean and sig.dim == 2:
        # F = E + i B with i = e12: Ex -> e1, Ey -> e2, Bz -> e12
        for mv in (basis[0], basis[1], gp(basis[0], basis[1])):
            slots.append(_single_blade(mv))
    elif euclidean and sig.dim == 3:
        # F = E + i B with i = e123
        for k in range(3):
            slots.append(_single_blade(basis[k]))
        i_mv = pseudoscalar(sig)
        for k in range(3):
            slots.append(_single_blade(gp(i_mv, basis[k])))
    elif not euclidean and sig.dim == 3:
        # F = Ex g10 + Ey g20 + Bz g12
        g0, g1, g2 = basis
        for mv in (gp(g1, g0), gp(g2, g0), gp(g1, g2)):
            slots.append(_single_blade(mv))
    elif not euclidean and sig.dim == 4:
        # F = E + I B with E_k on sigma_k = g_k g_0 and I the pseudoscalar
        g0 = basis[0]
        sigmas = [gp(basis[k], g0) for k in (1, 2, 3)]
        for s in sigmas:
            slots.append(_single_blade(s))
        i_mv = pseudoscalar(sig)
        for s in sigmas:
            slots.append(_single_blade(gp(i_mv, s)))
    else:
        raise UsageError(f"no field embedding for signature {metric}")
    return tuple(slots)


def embedding_map(sig: Signature) -> tuple[tuple[int, float], ...]:
    """(blade bits, sign) slot per field component, in frame component order."""
    if sig not in ALGEBRAS.values():
        raise UsageError(f"unsupported algebra {sig}")
    return _embedding_map_cached(sig.metric)


def loss_mask(sig: Signature) -> list[int]:
    """Blade indices carrying physical components (the loss/metric mask)."""
    return [bits for bits, _ in embedding_map(sig)]


def frame_components(sig: Signature) -> int:
    return len(embedding_map(sig))


def embed(frame: np.ndarray, sig: Signature) -> np.ndarray:
    """Field frame (components, *spatial) -> multivector grid (*spatial, blades)."""
    slots = embedding_map(sig)
    if frame.shape[0] != len(slots):
        raise UsageError(f"frame has {frame.shape[0]} components, need {len(slots)}")
    out = np.zeros(frame.shape[1:] + (sig.n_blades,), dtype=frame.dtype)
    for c, (bits, sign) in enumerate(slots):
        out[..., bits] = sign * frame[c]
    return out


def extract(mv_grid: np.ndarray, sig: Signature) -> np.ndarray:
    """Inverse of embed; blades outside the embedding are ignored."""
    slots = embedding_map(sig)
    if mv_grid.shape[-1] != sig.n_blades:
        raise UsageError(f"grid has {mv_grid.shape[-1]} blades, need {sig.n_blades}")
    out = np.empty((len(slots),) + mv_grid.shape[:-1], dtype=mv_grid.dtype)
    for c, (bits, sign) in enumerate(slots):
        out[c] = sign * mv_grid[..., bits]
    return out


# ---------------------------------------------------------------------------
# Windowing and batches
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    """Two consecutive input frames plus the next one as target."""

    frames: np.ndarray  # (3, components, *spatial)
    source: str  # trajectory provenance
    start: int  # first frame index within the trajectory

    @property
    def inputs(self) -> np.ndarray:
        return self.frames[:2]

    @property
    def target(self) -> np.ndarray:
        return self.frames[2]


@dataclass
class RolloutSequence:
    """First two frames plus m ground-truth continuation frames."""

    frames: np.ndarray  # (2 + m, components, *spatial)
    source: str
    start: int

    @property
    def m(self) -> int:
        return self.frames.shape[0] - 2


def window(traj: Trajectory, mode: str, m: int = 1, source: str = "") -> list:
    """Slice a trajectory into training samples or one rollout sequence."""
    if mode == "train":
        if traj.n_frames < 3:
            raise UsageError("trajectory too short to window")
        return [Sample(traj.frames[i:i + 3], source, i)
                for i in range(traj.n_frames - 2)]
    if mode == "rollout":
        if m < 1 or traj.n_frames < 2 + m:
            raise UsageError(
                f"rollout m={m} needs >= {2 + m} frames, trajectory has {traj.n_frames}")
        return [RolloutSequence(traj.frames[: 2 + m], source, 0)]
    raise UsageError(f"mode must be 'train' or 'rollout', got {mode!r}")


def batches(samples: list, batch_size: int, seed: int, epoch: int = 0):
    """Seeded shuffle, then consecutive batches; the last partial one is kept."""
    if batch_size < 1:
        raise UsageError("batch_size must be >= 1")
    order = np.random.default_rng([seed, epoch]).permutation(len(samples))
    for lo in range(0, len(samples), batch_size):
        yield [samples[i] for i in order[lo:lo + batch_size]]


def collate(samples: list, sig: Signature, dtype=np.float32):
    """Stack samples into network tensors: (B, 2, *sp, nb) inputs, (B, 1, ...) target."""
    xs, ys = [], []
    for s in samples:
        xs.append(np.stack([embed(f, sig) for f in s.inputs]))
        ys.append(embed(s.target, sig)[None])
    return (np.stack(xs).astype(dtype), np.stack(ys).astype(dtype))


# ---------------------------------------------------------------------------
# Split manifest
# ---------------------------------------------------------------------------

@dataclass
class SplitManifest:
    """Per-split trajectory file lists (paths relative to the manifest)."""

    splits: dict[str, list[str]]
    frames_per_sequence: int

    def validate_disjoint(self) -> None:
        seen: dict[str, str] = {}
        for split, files in self.splits.items():
            for f in files:
                if f in seen:
                    raise ConfigError(
                        f"trajectory {f} appears in splits {seen[f]} and {split}")
                seen[f] = split

    def counts(self) -> dict[str, dict[str, int]]:
        return {
            split: {"sequences": len(files),
                    "frames": len(files) * self.frames_per_sequence}
            for split, files in self.splits.items()
        }


def save_manifest(path, manifest: SplitManifest) -> None:
    manifest.validate_disjoint()
    doc = {
        "frames_per_sequence": manifest.frames_per_sequence,
        "splits": {
            split: {"files": files,
                    "sequences": len(files),
                    "frames": len(files) * manifest.frames_per_sequence}
            for split, files in manifest.splits.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_manifest(path) -> SplitManifest:
    doc = json.loads(Path(path).read_text())
    try:
        manifest = SplitManifest(
            splits={k: list(v["files"]) for k, v in doc["splits"].items()},
            frames_per_sequence=int(doc["frames_per_sequence"]),
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path}: malformed manifest ({e})") from None
    manifest.validate_disjoint()
    return manifest


def load_split(manifest_path, split: str) -> list[Trajectory]:
    manifest = load_manifest(manifest_path)
    if split not in manifest.splits:
        raise ConfigError(f"manifest has no split {split!r}")
    base = Path(manifest_path).parent
    return [load_trajectory(base / f) for f in manifest.splits[split]]
