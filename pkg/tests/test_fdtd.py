import numpy as np
import pytest

from stapde.errors import BlowupError, ConfigError, UsageError
from stapde.fdtd import (
    GridSpec,
    ObstacleSpec,
    SimState,
    SourceSpec,
    TrajectoryConfig,
    discrete_div_b,
    inject_sources,
    random_sources,
    run_trajectory,
)

WAVELENGTH = 1e-5  # with dx = 5e-7 this is 20 cells per wavelength
DX = 5e-7


def test_grid_validation():
    with pytest.raises(ConfigError):
        GridSpec((4, 4))
    with pytest.raises(ConfigError):
        GridSpec((16, 16), dx=-1.0)
    with pytest.raises(ConfigError):
        GridSpec((16, 16), pml=8)  # no interior left
    GridSpec((16, 16), pml=4)
    with pytest.raises(ConfigError):
        GridSpec((16,))


def test_zero_fields_stay_zero():
    grid = GridSpec((16, 16), dx=DX, pml=4)
    cfg = TrajectoryConfig(frames=3, stride=1, warmup=0)
    traj = run_trajectory(cfg, grid)
    assert traj.frames.shape == (3, 3, 16, 16)
    assert not traj.frames.any()


def test_source_injection_properties():
    grid = GridSpec((16, 16), dx=DX, pml=4)

    def injected(sources, t=3.7):
        state = SimState(grid, sources)
        inject_sources(state, t)
        return state.bzx.copy()

    src = SourceSpec((8, 8), WAVELENGTH, amplitude=0.7, phase=0.3)
    base = injected([src])
    assert base[8, 8] != 0.0
    assert np.count_nonzero(base) == 1

    assert not injected([SourceSpec((8, 8), WAVELENGTH, amplitude=0.0)]).any()

    flipped = injected([SourceSpec((8, 8), WAVELENGTH, 0.7, 0.3 + np.pi)])
    assert flipped[8, 8] == pytest.approx(-base[8, 8], rel=1e-12)

    doubled = injected([src, src])
    assert doubled[8, 8] == pytest.approx(2 * base[8, 8], rel=1e-12)


def test_source_validation():
    grid = GridSpec((16, 16), dx=DX, pml=4)
    with pytest.raises(ConfigError):
        SimState(grid, [SourceSpec((20, 8), WAVELENGTH)])
    with pytest.raises(ConfigError):
        SimState(grid, [SourceSpec((8, 8), -1.0)])
    with pytest.raises(ConfigError):
        SimState(grid, [], [ObstacleSpec(((0, 20), (0, 8)))])
    with pytest.raises(ConfigError):
        SimState(grid, [], [ObstacleSpec(((0, 8), (0, 8)), rel_permittivity=0.5)])


def test_wavefront_expands_at_light_speed():
    grid = GridSpec((96, 96), dx=DX, pml=8)
    src = SourceSpec((48, 48), WAVELENGTH, amplitude=1.0, phase=0.0)
    state = SimState(grid, [src])
    ii, jj = np.meshgrid(np.arange(96), np.arange(96), indexing="ij")
    dist = np.sqrt((ii - 48.0) ** 2 + (jj - 48.0) ** 2)
    for n_steps in (60, 90):
        state.run(n_steps - state.step_count)
        bz = np.abs(state.bz)
        lit = bz > 1e-2 * bz.max()  # above the evanescent precursor
        radius = dist[lit].max()
        expected = n_steps * grid.dt  # c = 1
        assert abs(radius - expected) <= 2.0, (n_steps, radius, expected)


def test_vacuum_phase_velocity_within_2_percent():
    grid = GridSpec((128, 64), dx=DX, pml=8)
    src = SourceSpec((20, 32), WAVELENGTH, amplitude=1.0, phase=0.0)
    state = SimState(grid, [src])
    r1, r2 = 70, 79  # separation below half a wavelength: no phase ambiguity
    p1, p2 = (20 + r1, 32), (20 + r2, 32)
    n_total, n_skip = 900, 320
    sig1, sig2 = [], []
    for _ in range(n_total):
        state.step()
        bz = state.bz
        sig1.append(bz[p1])
        sig2.append(bz[p2])
    t = (np.arange(n_total) + 0.5) * grid.dt
    omega = 2 * np.pi / (WAVELENGTH / DX)

    def phase(sig):
        window = slice(n_skip, n_total)
        basis = np.stack([np.sin(omega * t[window]), np.cos(omega * t[window])], axis=1)
        coef, *_ = np.linalg.lstsq(basis, np.asarray(sig)[window], rcond=None)
        return np.arctan2(coef[1], coef[0])

    dphi = phase(sig1) - phase(sig2)  # outgoing wave: phase drops with radius
    dphi = (dphi + np.pi) % (2 * np.pi) - np.pi
    k_measured = dphi / (r2 - r1)
    v = omega / k_measured
    assert abs(v - 1.0) <= 0.02, v


def test_pml_energy_decays_after_shutoff():
    grid = GridSpec((64, 64), dx=DX, pml=8)
    state = SimState(grid, [SourceSpec((32, 32), WAVELENGTH, 1.0, 0.0)])
    state.run(200)
    state.sources = []
    state.run(20)
    energies = []
    for _ in range(12):
        energies.append(state.energy())
        state.run(50)
    for a, b in zip(energies, energies[1:]):
        assert b < a, energies


def test_obstacle_refraction_and_transmission():
    """Plane wave into an eps = 1.7^2 slab: amplitude drops, wavelength / 1.7."""
    n_ref = 1.7
    dims = (48, 192)
    slab = ObstacleSpec(((0, 48), (120, 192)), rel_permittivity=n_ref ** 2)
    line = [SourceSpec((x, 24), WAVELENGTH, 1.0, 0.0) for x in range(48)]

    def run(obstacles):
        state = SimState(GridSpec(dims, dx=DX, pml=8), line, obstacles)
        state.run(520)
        ex, _, _ = np.asarray(state.frame())
        return ex

    ex_slab = run([slab])
    ex_vac = run([])
    probe = slice(130, 172)

    amp_in = np.abs(ex_vac[24, probe]).max()
    amp_slab = np.abs(ex_slab[24, probe]).max()
    assert amp_slab < amp_in

    col = ex_slab[24, probe]
    crossings = []
    for i in range(len(col) - 1):
        if col[i] == 0.0 or col[i] * col[i + 1] < 0:
            crossings.append(i + col[i] / (col[i] - col[i + 1]))
    spacings = np.diff(crossings)
    lam_inside = 2.0 * np.mean(spacings)
    expected = (WAVELENGTH / DX) / n_ref
    assert abs(lam_inside - expected) <= 0.1 * expected, (lam_inside, expected)


def _solenoidal_state(grid: GridSpec, seed: int) -> SimState:
    """3D state with B = discrete curl of a tapered random vector potential."""
    state = SimState(grid)
    rng = np.random.default_rng(seed)
    dims = grid.dims
    taper = np.ones(dims)
    m = grid.pml + 2
    for ax, d in enumerate(dims):
        ramp = np.zeros(d)
        ramp[m:d - m] = 1.0
        shape = [1, 1, 1]
        shape[ax] = d
        taper = taper * ramp.reshape(shape)
    ax_, ay_, az_ = (rng.normal(size=dims) * taper for _ in range(3))

    def dplus(a, axis):
        out = np.zeros_like(a)
        sl_hi = [slice(None)] * 3
        sl_lo = [slice(None)] * 3
        sl_hi[axis] = slice(1, None)
        sl_lo[axis] = slice(None, -1)
        out[tuple(sl_lo)] = a[tuple(sl_hi)] - a[tuple(sl_lo)]
        return out

    # B = curl A with the same forward differences the B update uses
    state.bxy[:] = dplus(az_, 1)
    state.bxz[:] = -dplus(ay_, 2)
    state.byz[:] = dplus(ax_, 2)
    state.byx[:] = -dplus(az_, 0)
    state.bzx3[:] = dplus(ay_, 0)
    state.bzy3[:] = -dplus(ax_, 1)
    return state


def _interior_div_max(state: SimState) -> float:
    pml = state.grid.pml
    div = discrete_div_b(state)
    core = tuple(slice(pml + 1, d - pml - 2) for d in state.grid.dims)
    return float(np.abs(div[core]).max())


def test_div_b_detector_and_uniform_field():
    grid = GridSpec((16, 16, 16), dx=DX, pml=4)
    state = SimState(grid)
    state.bxy[:] = 1.0  # uniform Bx
    assert not discrete_div_b(state).any()

    state.byz[8, 8, 8] = 1.0  # planted monopole
    div = discrete_div_b(state)
    assert div[8, 8, 8] != 0.0

    state2d = SimState(GridSpec((16, 16), dx=DX, pml=4))
    with pytest.raises(UsageError):
        discrete_div_b(state2d)


def test_div_b_solenoidal_evolution():
    grid = GridSpec((20, 20, 20), dx=DX, pml=4)
    state = _solenoidal_state(grid, seed=11)
    assert _interior_div_max(state) <= 1e-13
    state.run(100)
    max_b = max(np.abs(b).max() for b in state.b_totals())
    assert max_b > 0
    assert _interior_div_max(state) <= 1e-12 * max_b


def test_div_b_vacuum_1000_steps():
    # source-free cavity (no absorber): fields stay O(1), div B stays at roundoff
    grid = GridSpec((24, 24, 24), dx=DX, pml=0)
    state = _solenoidal_state(grid, seed=11)
    state.run(1000)
    max_b = max(np.abs(b).max() for b in state.b_totals())
    assert max_b > 0
    assert float(np.abs(discrete_div_b(state)).max()) <= 1e-12 * max_b


def test_trajectory_determinism(tmp_path):
    from stapde.dataset import save_trajectory

    grid = GridSpec((24, 24), dx=DX, pml=6)
    rng = np.random.default_rng(5)
    sources = random_sources(grid, 3, WAVELENGTH, rng)
    cfg = TrajectoryConfig(frames=4, stride=5, seed=5, sources=sources, warmup=20)
    t1 = run_trajectory(cfg, grid)
    t2 = run_trajectory(cfg, grid)
    assert np.array_equal(t1.frames, t2.frames)
    assert t1.frames.any()

    p1, p2 = tmp_path / "a.traj", tmp_path / "b.traj"
    save_trajectory(p1, t1)
    save_trajectory(p2, t2)
    assert p1.read_bytes() == p2.read_bytes()


def test_blowup_detection():
    grid = GridSpec((16, 16), dx=DX, pml=4)
    state = SimState(grid)
    state.ex[8, 8] = np.nan
    with pytest.raises(BlowupError) as err:
        state.run(100)
    assert err.value.step is not None


def test_random_sources_layout():
    rng = np.random.default_rng(7)
    grid2 = GridSpec((32, 32), dx=DX, pml=8)
    srcs = random_sources(grid2, 6, WAVELENGTH, rng)
    assert len(srcs) == 6
    for s in srcs:
        assert all(grid2.pml < p < d - grid2.pml for p, d in zip(s.position, grid2.dims))

    grid3 = GridSpec((20, 20, 20), dx=DX, pml=4)
    srcs3 = random_sources(grid3, 6, WAVELENGTH, rng)
    assert len(srcs3) == 18
    assert {s.plane for s in srcs3} == {"xy", "yz", "xz"}
    for s in srcs3:
        axis = {"xy": 2, "yz": 0, "xz": 1}[s.plane]
        assert s.position[axis] == grid3.dims[axis] // 2
