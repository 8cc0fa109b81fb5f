"""Yee-grid FDTD solver for Maxwell's equations in 2D and 3D.

Works in natural units: c = 1, lengths in cells, time in core steps of
dt = 0.5 / sqrt(d). The 2D mode carries (Ex, Ey, Bz); the 3D mode carries all
six components. Boundaries are split-field absorbing layers (polynomial-graded
conductivity, semi-implicit damping); dielectric obstacles scale the electric
update inside axis-aligned boxes. Point sources are soft: they add a sinusoid
sample to the out-of-plane field component (2D) or to the electric component
normal to the source's plane (3D) every step.

Staggering (cell size 1): 2D Ex(i+1/2, j), Ey(i, j+1/2), Bz(i+1/2, j+1/2);
3D E on edges, B on faces. Saved frames colocate everything to cell centers
by two-point averaging per offset axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import Trajectory
from .errors import BlowupError, ConfigError, UsageError

PML_GRADE = 3  # polynomial order of the conductivity profile
PML_SIGMA_MAX = 3.2  # ~0.8 * (grade + 1) per cell at unit impedance
BLOWUP_CHECK_EVERY = 25


@dataclass(frozen=True)
class GridSpec:
    """Simulation grid: (M, N) or (L, M, N) cells of physical size dx meters."""

    dims: tuple[int, ...]
    dx: float = 5e-7
    pml: int = 8

    def __post_init__(self):
        if len(self.dims) not in (2, 3):
            raise ConfigError(f"grid must be 2D or 3D, got dims {self.dims}")
        if any(d < 8 for d in self.dims):
            raise ConfigError(f"grid dims must be >= 8 per axis, got {self.dims}")
        if self.dx <= 0:
            raise ConfigError(f"dx must be positive, got {self.dx}")
        if self.pml < 0 or 2 * self.pml > min(self.dims) - 4:
            raise ConfigError(
                f"pml thickness {self.pml} leaves no interior in grid {self.dims}")

    @property
    def spatial_dim(self) -> int:
        return len(self.dims)

    @property
    def dt(self) -> float:
        return 0.5 / np.sqrt(self.spatial_dim)

    def interior(self, margin: int = 0) -> tuple[slice, ...]:
        """Slices selecting cells outside the absorbing frame (+margin)."""
        lo = self.pml + margin
        return tuple(slice(lo, d - lo) for d in self.dims)


@dataclass(frozen=True)
class SourceSpec:
    """Point source: soft sinusoid of given wavelength/amplitude/phase.

    `plane` selects the 3D polarization (E normal to that plane); ignored in 2D.
    """

    position: tuple[int, ...]
    wavelength: float
    amplitude: float = 1.0
    phase: float = 0.0
    plane: str = "xy"

    def validate(self, grid: GridSpec) -> None:
        if len(self.position) != grid.spatial_dim:
            raise ConfigError(f"source position {self.position} rank mismatch")
        if any(not 0 <= p < d for p, d in zip(self.position, grid.dims)):
            raise ConfigError(f"source position {self.position} outside grid {grid.dims}")
        if self.wavelength <= 0:
            raise ConfigError("source wavelength must be positive")
        if self.plane not in ("xy", "yz", "xz"):
            raise ConfigError(f"source plane must be xy|yz|xz, got {self.plane!r}")


@dataclass(frozen=True)
class ObstacleSpec:
    """Axis-aligned dielectric box, half-open cell ranges per axis."""

    region: tuple[tuple[int, int], ...]
    rel_permittivity: float = 1.7 ** 2

    def validate(self, grid: GridSpec) -> None:
        if len(self.region) != grid.spatial_dim:
            raise ConfigError(f"obstacle region {self.region} rank mismatch")
        for (lo, hi), d in zip(self.region, grid.dims):
            if not 0 <= lo < hi <= d:
                raise ConfigError(f"obstacle region {self.region} outside grid {grid.dims}")
        if self.rel_permittivity < 1.0:
            raise ConfigError("rel_permittivity must be >= 1")

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(lo, hi) for lo, hi in self.region)


@dataclass
class TrajectoryConfig:
    """One saved sequence: `frames` snapshots every `stride` core steps."""

    frames: int = 12
    stride: int = 25
    seed: int = 0
    sources: list[SourceSpec] = field(default_factory=list)
    obstacles: list[ObstacleSpec] = field(default_factory=list)
    warmup: int = 100

    def __post_init__(self):
        if self.frames < 3:
            raise ConfigError("a trajectory needs >= 3 frames (2 inputs + 1 target)")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")


def _pml_coeffs(n: int, pml: int, dt: float, half: bool):
    """Damping coefficients (a, b) per staggered position along one axis."""
    pos = np.arange(n, dtype=np.float64) + (0.5 if half else 0.0)
    if pml > 0:
        depth = np.maximum(pml - pos, pos - (n - 1 - pml)) / pml
        sigma = PML_SIGMA_MAX * np.clip(depth, 0.0, 1.0) ** PML_GRADE
    else:
        sigma = np.zeros(n)
    a = (1.0 - 0.5 * sigma * dt) / (1.0 + 0.5 * sigma * dt)
    b = dt / (1.0 + 0.5 * sigma * dt)
    return a, b


class SimState:
    """Mutable solver state: staggered split-field arrays plus material maps."""

    def __init__(self, grid: GridSpec, sources=(), obstacles=()):
        self.grid = grid
        self.sources = list(sources)
        self.obstacles = list(obstacles)
        for s in self.sources:
            s.validate(grid)
        for o in self.obstacles:
            o.validate(grid)
        self.step_count = 0
        dims = grid.dims
        dt = grid.dt

        eps = np.ones(dims, dtype=np.float64)
        for o in self.obstacles:
            eps[o.slices()] = o.rel_permittivity
        self.eps = eps
        self.inv_eps = 1.0 / eps

        self._coef_int = [_pml_coeffs(d, grid.pml, dt, half=False) for d in dims]
        self._coef_half = [_pml_coeffs(d, grid.pml, dt, half=True) for d in dims]

        if grid.spatial_dim == 2:
            self.ex = np.zeros(dims)
            self.ey = np.zeros(dims)
            self.bzx = np.zeros(dims)
            self.bzy = np.zeros(dims)
            self._bz = np.zeros(dims)
        else:
            for name in ("exy", "exz", "eyz", "eyx", "ezx", "ezy",
                         "bxy", "bxz", "byz", "byx", "bzx3", "bzy3"):
                setattr(self, name, np.zeros(dims))
            self._et = [np.zeros(dims) for _ in range(3)]
            self._bt = [np.zeros(dims) for _ in range(3)]

    @property
    def is_2d(self) -> bool:
        return self.grid.spatial_dim == 2

    # -- field views -------------------------------------------------------

    @property
    def bz(self) -> np.ndarray:
        if not self.is_2d:
            raise UsageError("bz total is a 2D field; use b_totals() in 3D")
        np.add(self.bzx, self.bzy, out=self._bz)
        return self._bz

    def e_totals(self):
        if self.is_2d:
            return self.ex, self.ey
        np.add(self.exy, self.exz, out=self._et[0])
        np.add(self.eyz, self.eyx, out=self._et[1])
        np.add(self.ezx, self.ezy, out=self._et[2])
        return tuple(self._et)

    def b_totals(self):
        if self.is_2d:
            return (self.bz,)
        np.add(self.bxy, self.bxz, out=self._bt[0])
        np.add(self.byz, self.byx, out=self._bt[1])
        np.add(self.bzx3, self.bzy3, out=self._bt[2])
        return tuple(self._bt)

    # -- stepping ----------------------------------------------------------

    def _inject(self, t: float) -> None:
        lam_cells = None
        for s in self.sources:
            lam_cells = s.wavelength / self.grid.dx
            value = s.amplitude * np.sin(2.0 * np.pi * t / lam_cells + s.phase)
            if self.is_2d:
                self.bzx[s.position] += value
            elif s.plane == "xy":
                self.ezx[s.position] += value
            elif s.plane == "yz":
                self.exy[s.position] += value
            else:  # xz
                self.eyz[s.position] += value

    def step(self) -> None:
        """One leapfrog update: B from curl E, then E from curl B, plus sources."""
        dt = self.grid.dt
        if self.is_2d:
            (axi, bxi), (ayi, byi) = self._coef_int
            (axh, bxh), (ayh, byh) = self._coef_half
            kernels.fdtd2d_update_b(self.ex, self.ey, self.bzx, self.bzy,
                                    axh, bxh, ayh, byh)
            self._inject((self.step_count + 0.5) * dt)
            kernels.fdtd2d_update_e(self.ex, self.ey, self.bzx, self.bzy, self._bz,
                                    self.inv_eps, axi, bxi, ayi, byi)
        else:
            (axi, bxi), (ayi, byi), (azi, bzi) = self._coef_int
            (axh, bxh), (ayh, byh), (azh, bzh) = self._coef_half
            kernels.fdtd3d_update_b(
                self.exy, self.exz, self.eyz, self.eyx, self.ezx, self.ezy,
                self._et[0], self._et[1], self._et[2],
                self.bxy, self.bxz, self.byz, self.byx, self.bzx3, self.bzy3,
                axh, bxh, ayh, byh, azh, bzh)
            kernels.fdtd3d_update_e(
                self.bxy, self.bxz, self.byz, self.byx, self.bzx3, self.bzy3,
                self._bt[0], self._bt[1], self._bt[2],
                self.exy, self.exz, self.eyz, self.eyx, self.ezx, self.ezy,
                self.inv_eps, axi, bxi, ayi, byi, azi, bzi)
            self._inject((self.step_count + 1.0) * dt)
        self.step_count += 1
        if self.step_count % BLOWUP_CHECK_EVERY == 0:
            probe = self.ex if self.is_2d else self.exy
            if not np.all(np.isfinite(probe)):
                raise BlowupError(
                    f"non-finite field at step {self.step_count}", self.step_count)

    def run(self, n_steps: int) -> None:
        for _ in range(n_steps):
            self.step()

    # -- observables ---------------------------------------------------------

    def frame(self) -> np.ndarray:
        """Colocated (components, *dims) snapshot at cell centers."""
        if self.is_2d:
            exc = _avg(self.ex, axis=1)
            eyc = _avg(self.ey, axis=0)
            return np.stack([exc, eyc, self.bz.copy()])
        ex, ey, ez = self.e_totals()
        bx, by, bz = self.b_totals()
        return np.stack([
            _avg(_avg(ex, 1), 2),
            _avg(_avg(ey, 0), 2),
            _avg(_avg(ez, 0), 1),
            _avg(bx, 0),
            _avg(by, 1),
            _avg(bz, 2),
        ])

    def energy(self) -> float:
        """Total 0.5 * (eps E^2 + B^2) over the staggered arrays."""
        e_sq = sum(e * e for e in self.e_totals())
        b_sq = sum(b * b for b in self.b_totals())
        return float(0.5 * np.sum(self.eps * e_sq) + 0.5 * np.sum(b_sq))


def _avg(arr: np.ndarray, axis: int) -> np.ndarray:
    """Two-point average toward +1/2 along `axis`, clamped at the far edge."""
    shifted = np.concatenate(
        [np.take(arr, range(1, arr.shape[axis]), axis=axis),
         np.take(arr, [-1], axis=axis)], axis=axis)
    return 0.5 * (arr + shifted)


def step(state: SimState) -> None:
    state.step()


def inject_sources(state: SimState, t: float) -> None:
    state._inject(t)


def discrete_div_b(state: SimState) -> np.ndarray:
    """Yee-consistent divergence of B at (L-1, M-1, N-1) interior cells."""
    if state.is_2d:
        raise UsageError("discrete_div_b needs a 3D state")
    bx, by, bz = state.b_totals()
    return (bx[1:, :-1, :-1] - bx[:-1, :-1, :-1]
            + by[:-1, 1:, :-1] - by[:-1, :-1, :-1]
            + bz[:-1, :-1, 1:] - bz[:-1, :-1, :-1])


def run_trajectory(cfg: TrajectoryConfig, grid: GridSpec) -> Trajectory:
    """Simulate and sample: warmup, then `frames` snapshots `stride` steps apart."""
    state = SimState(grid, cfg.sources, cfg.obstacles)
    try:
        state.run(cfg.warmup)
        frames = [state.frame()]
        for _ in range(cfg.frames - 1):
            state.run(cfg.stride)
            frames.append(state.frame())
    except BlowupError as e:
        raise BlowupError(
            f"trajectory seed={cfg.seed} stride={cfg.stride} blew up: {e}", e.step
        ) from e
    data = np.stack(frames).astype(np.float32)
    return Trajectory(dims=grid.dims, dx=grid.dx, stride=cfg.stride, frames=data)


def random_sources(grid: GridSpec, n: int, wavelength: float,
                   rng: np.random.Generator,
                   amplitude_range=(0.5, 1.0)) -> list[SourceSpec]:
    """Random in-interior sources with random amplitude and phase.

    2D: n point sources anywhere in the interior. 3D: n sources per
    coordinate plane (xy, yz, xz), each on the mid-slice of its normal axis,
    polarized normal to the plane.
    """
    margin = grid.pml + 1
    lo = [margin] * grid.spatial_dim
    hi = [d - margin for d in grid.dims]
    if any(h <= l for l, h in zip(lo, hi)):
        raise ConfigError(f"grid {grid.dims} has no interior for sources")
    sources = []

    def draw(plane: str, fixed_axis: int | None):
        pos = [int(rng.integers(l, h)) for l, h in zip(lo, hi)]
        if fixed_axis is not None:
            pos[fixed_axis] = grid.dims[fixed_axis] // 2
        amp = float(rng.uniform(*amplitude_range))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        sources.append(SourceSpec(tuple(pos), wavelength, amp, phase, plane))

    if grid.spatial_dim == 2:
        for _ in range(n):
            draw("xy", None)
    else:
        for plane, axis in (("xy", 2), ("yz", 0), ("xz", 1)):
            for _ in range(n):
                draw(plane, axis)
    return sources
