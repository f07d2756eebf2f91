import math

import numpy as np
import pytest

from romwave.core import Grid2D, InvalidArgumentError, Medium, SensorArray, TimeGrid
from romwave.signals import PulseSpec
from romwave.wave_sim import (HARD, BoundarySpec, DataCube, StabilityError,
                              add_noise, fdtd_run, frak_for, laplacian, make_data_cube,
                              make_snapshots, source_derivative)
from romwave.signals import SampledSignal


def test_laplacian_of_quadratic_in_interior():
    g = Grid2D(9, 9, 0.5)
    X, Z = g.coordinates()
    p = X ** 2 + 3 * Z ** 2
    lap = laplacian(p, g.h, BoundarySpec())
    assert np.allclose(lap[1:-1, 1:-1], 8.0)


def test_laplacian_hard_edges_preserve_constants():
    bc = BoundarySpec(HARD, HARD, HARD, HARD)
    assert np.allclose(laplacian(np.ones((5, 4)), 0.1, bc), 0.0)
    assert bc.pinned_mask(Grid2D(5, 4, 0.1)).sum() == 0


def test_pinned_mask_includes_corners():
    g = Grid2D(5, 4, 0.1)
    mask = BoundarySpec().pinned_mask(g)
    assert mask[0, 0] and mask[-1, -1] and mask[0, -1]
    assert not mask[2, 0]  # the hard top stays free
    with pytest.raises(InvalidArgumentError):
        BoundarySpec(top="rigid")


def test_cfl_violation_raises():
    g = Grid2D(21, 21, 0.1, (0, 0.05))
    med = Medium.homogeneous(g, 1.0)
    arr = SensorArray(g, ((10, 0),))
    tg = TimeGrid(0.5, 4, 2, 1)  # dt = 0.25 is far above h / sqrt(2)
    sig = SampledSignal(tg.dt, np.ones(3))
    with pytest.raises(StabilityError):
        fdtd_run(med, arr, sig, tg, 4)


def test_homogeneous_wave_is_symmetric_about_source():
    g = Grid2D(41, 31, 0.1, (0, 0.05))
    med = Medium.homogeneous(g, 1.0)
    arr = SensorArray(g, ((14, 0), (20, 0), (26, 0)))
    pulse = PulseSpec.from_central_frequency(2 * math.pi)
    tg = TimeGrid.build(0.5, 4, g.h, 1.0, 2.2 * pulse.t_F)
    fr = frak_for(pulse, tg)
    src = source_derivative(fr, tg, 60)
    traces = fdtd_run(med, arr, src, tg, 60, sources=[1]).values
    assert np.allclose(traces[0, 0], traces[0, 2], atol=1e-14)


def test_data_cube_reciprocity_and_parallel_determinism(small, small_data):
    cube = small_data["cube"]
    assert cube.count == 2 * small.time_grid.n and cube.m == small.array.m
    D = cube.D
    assert np.abs(D - D.transpose(0, 2, 1)).max() < 1e-12 * np.abs(D).max()
    setup = small_data["setup"]
    again = make_data_cube(small_data["medium"], setup.array, setup.pulse, setup.time_grid,
                           setup.boundaries, workers=3)
    assert np.array_equal(again.D, cube.D)


def test_mass_matrix_matches_snapshot_quadrature(small_data):
    # D_j = int u_0^T u_j holds to quadrature accuracy on the simulation grid
    cube, snaps = small_data["cube_ref"], small_data["snaps_ref"]
    U = snaps.U()
    h = snaps.grid.h
    m = snaps.m
    G = h * h * U.T @ U
    for j in range(snaps.n):
        block = G[:m, j * m:(j + 1) * m]
        assert np.abs(block - cube.D[j]).max() < 1e-6 * np.abs(cube.D[0]).max()


def test_snapshot_layout_and_restriction(small_data):
    snaps = small_data["snaps_true"]
    U = snaps.U()
    j, s = 3, 2
    assert np.array_equal(U[:, j * snaps.m + s], snaps.values[j, s])
    full = snaps.field(j, s)
    nodes = np.array([5, 17, 400])
    sub = snaps.restricted(nodes)
    assert np.array_equal(sub.values[j, s], full.ravel()[nodes])
    with pytest.raises(InvalidArgumentError):
        sub.restricted(np.array([6]))


def test_snapshot_derivative_is_centred_difference(small_data):
    setup = small_data["setup"]
    tg = setup.time_grid
    mask = np.zeros(setup.grid.shape, dtype=bool)
    mask[20:40, 5:30] = True
    snaps = make_snapshots(small_data["background"], setup.array, frak_for(setup.pulse, tg), tg,
                           with_derivative=True, boundaries=setup.boundaries, sample_every=1,
                           n_samples=80, mask=mask)
    d_num = np.gradient(snaps.values, snaps.dt_sample, axis=0)
    scale = np.abs(snaps.derivative).max()
    assert scale > 0
    assert np.abs(d_num[1:-1] - snaps.derivative[1:-1]).max() < 1e-10 * scale
    # the symmetrized wave is even in time, so its derivative vanishes at t = 0
    assert np.all(snaps.derivative[0] == 0)


def test_snapshot_kind_validation(small_data):
    snaps = small_data["snaps_true"]
    with pytest.raises(InvalidArgumentError):
        snaps.with_values(snaps.values, "guessed")
    with pytest.raises(InvalidArgumentError):
        make_snapshots(small_data["medium"], small_data["setup"].array, None,
                       small_data["setup"].time_grid, kind="estimated_u")


def test_add_noise_model():
    rng = np.random.default_rng(0)
    D = rng.standard_normal((40, 6, 6))
    cube = DataCube(D, 0.5)
    noisy = add_noise(cube, 0.1, seed=7)
    assert np.array_equal(noisy.D[0], D[0])
    again = add_noise(cube, 0.1, seed=7)
    assert np.array_equal(noisy.D, again.D)
    expected_sd = 0.1 * math.sqrt(np.sum(D ** 2) / D.size)
    assert np.std(noisy.D[1:] - D[1:]) == pytest.approx(expected_sd, rel=0.05)
    assert add_noise(cube, 0.0) is cube
    with pytest.raises(InvalidArgumentError):
        add_noise(cube, -0.1)


def test_data_cube_validation():
    with pytest.raises(InvalidArgumentError):
        DataCube(np.zeros((3, 2, 3)), 0.5)
    cube = DataCube(np.zeros((4, 2, 2)), 0.5)
    assert cube.truncated(2).count == 2
    with pytest.raises(InvalidArgumentError):
        cube.truncated(5)
