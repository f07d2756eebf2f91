import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from romwave.core import (BlockMatrix, Grid2D, InvalidArgumentError, Medium, Rect, SensorArray,
                          TimeGrid, cfl_dt, grid_spacing)


def test_grid_spacing_is_tenth_wavelength_for_standard_band():
    omega = 2 * math.pi
    assert grid_spacing(omega, omega / 4, 1.0) == pytest.approx(0.1, rel=1e-14)


def test_grid_spacing_rejects_nonpositive():
    with pytest.raises(InvalidArgumentError):
        grid_spacing(0.0, 1.0, 1.0)


@given(h=st.floats(0.01, 1.0), c_max=st.floats(0.5, 3.0), tau=st.floats(0.05, 2.0))
def test_cfl_dt_divides_tau_and_respects_bound(h, c_max, tau):
    dt, steps = cfl_dt(h, c_max, tau=tau)
    assert steps * dt == pytest.approx(tau, rel=1e-12)
    assert dt <= 0.5 * h / (c_max * math.sqrt(2)) * (1 + 1e-9)


def test_cfl_dt_rejects_bad_safety():
    with pytest.raises(InvalidArgumentError):
        cfl_dt(0.1, 1.0, safety=1.5)


def test_grid_positions_and_index_round_trip():
    g = Grid2D(11, 7, 0.1, (0.0, 0.05))
    assert g.shape == (11, 7) and g.size == 77
    assert g.position(3, 2) == pytest.approx((0.3, 0.25))
    assert g.index(0.3, 0.25) == (3, 2)
    assert g.extent == pytest.approx((0.0, 1.0, 0.05, 0.65))
    with pytest.raises(InvalidArgumentError):
        g.index(5.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        Grid2D(1, 5, 0.1)


@given(i=st.integers(0, 20), k=st.integers(0, 12))
def test_index_inverts_position(i, k):
    g = Grid2D(21, 13, 0.07, (0.0, 0.035))
    assert g.index(*g.position(i, k)) == (i, k)


def test_rect_mask_and_containment():
    g = Grid2D(11, 11, 0.1)
    r = Rect(0.2, 0.4, 0.0, 0.1)
    assert r.mask(g).sum() == 3 * 2
    assert Rect(0, 1, 0, 1).contains(r) and not r.contains(Rect(0, 1, 0, 1))
    with pytest.raises(InvalidArgumentError):
        Rect(1.0, 1.0, 0.0, 1.0)


def test_medium_validation():
    g = Grid2D(11, 11, 0.1)
    region = Rect(0.3, 0.7, 0.3, 0.7)
    c = np.ones(g.shape)
    c[5, 5] = 1.2
    med = Medium(g, c, 1.0, region)
    assert med.c_max == 1.2
    assert not med.c.flags.writeable
    c_bad = c.copy()
    c_bad[0, 0] = 1.1
    with pytest.raises(InvalidArgumentError):
        Medium(g, c_bad, 1.0, region)
    with pytest.raises(InvalidArgumentError):
        Medium(g, -c, 1.0)
    with pytest.raises(InvalidArgumentError):
        Medium(g, np.ones((3, 3)), 1.0)


def test_check_near_array():
    g = Grid2D(21, 21, 0.1, (0, 0.05))
    arr = SensorArray(g, ((10, 0),))
    c = np.ones(g.shape)
    c[10, 10] = 1.1
    med = Medium(g, c, 1.0)
    med.check_near_array(arr, 0.5)
    with pytest.raises(InvalidArgumentError):
        med.check_near_array(arr, 1.5)


def test_sensor_array_centered():
    g = Grid2D(101, 11, 0.1)
    arr = SensorArray.centered(g, 10, 0.5)
    xs = arr.positions[:, 0]
    assert arr.m == 10
    assert np.allclose(np.diff(xs), 0.5)
    assert abs(xs[0] + xs[-1] - 10.0) <= g.h + 1e-12
    assert list(arr.flat_indices()) == [i * g.nz for i, _ in arr.nodes]
    with pytest.raises(InvalidArgumentError):
        SensorArray.centered(g, 10, 0.25)
    with pytest.raises(InvalidArgumentError):
        SensorArray(g, ((5, 0), (5, 0)))
    with pytest.raises(InvalidArgumentError):
        SensorArray(g, ((0, 0),))


def test_time_grid_lattice():
    tg = TimeGrid.build(0.5, 40, 0.1, 1.15, 4.85)
    assert tg.steps_per_tau == 17
    assert tg.start_taus == 10
    assert tg.time_of_step(tg.step_of(3)) == pytest.approx(1.5)
    assert tg.t_start == pytest.approx(-5.0)
    fine = tg.refined(2)
    assert fine.dt == pytest.approx(tg.dt / 2) and fine.t_start == pytest.approx(tg.t_start)


def test_block_matrix_views():
    rng = np.random.default_rng(1)
    blocks = rng.standard_normal((3, 3, 2, 2))
    B = BlockMatrix.from_blocks(blocks)
    assert np.array_equal(B.blocks(), blocks)
    assert np.array_equal(B.block(1, 2), blocks[1, 2])
    assert np.array_equal(B.block_column(1), B.data[:, 2:4])
    with pytest.raises(IndexError):
        B.block(3, 0)
    with pytest.raises(InvalidArgumentError):
        BlockMatrix(3, 2, B.data, "symmetric")
    with pytest.raises(InvalidArgumentError):
        BlockMatrix(3, 2, B.data, "block-upper-triangular")
    assert np.array_equal(BlockMatrix.identity(2, 3).data, np.eye(6))
