import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from romwave.core import BlockMatrix
from romwave.fileio import (HEADER, FormatError, atomic_write, pack, read_block_matrix, read_cube,
                            read_grid, unpack, write_block_matrix, write_csv, write_cube,
                            write_grid)
from romwave.wave_sim import DataCube


def test_header_is_32_bytes_little_endian():
    buf = pack(1, np.zeros((2, 3, 3)), 0.5)
    assert HEADER.size == 32
    assert buf[:4] == b"RWIV"
    assert int.from_bytes(buf[4:8], "little") == 3
    assert int.from_bytes(buf[24:32], "little") == 2
    assert len(buf) == 32 + 8 * 18


@settings(max_examples=25, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 3), st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False)),
       st.floats(1e-3, 10))
def test_pack_round_trip(a, h):
    kind, h2, b = unpack(pack(0, a, h))
    assert kind == 0 and h2 == h and np.array_equal(a, b)


def test_grid_cube_and_block_files(tmp_path):
    rng = np.random.default_rng(0)
    field = rng.standard_normal((7, 5))
    write_grid(tmp_path / "g.rwiv", field, 0.1)
    arrays_, h = read_grid(tmp_path / "g.rwiv")
    assert h == 0.1 and np.array_equal(arrays_[0], field)

    cube = DataCube(rng.standard_normal((6, 3, 3)), 0.25)
    write_cube(tmp_path / "c.rwiv", cube)
    back = read_cube(tmp_path / "c.rwiv")
    assert back.tau == 0.25 and np.array_equal(back.D, cube.D)

    M = BlockMatrix.from_blocks(rng.standard_normal((3, 3, 2, 2)))
    write_block_matrix(tmp_path / "m.rwiv", M)
    assert np.array_equal(read_block_matrix(tmp_path / "m.rwiv").data, M.data)


def test_corrupt_files_are_rejected(tmp_path):
    good = pack(1, np.zeros((2, 2, 2)), 0.5)
    with pytest.raises(FormatError):
        unpack(b"XXXX" + good[4:])
    with pytest.raises(FormatError):
        unpack(good[:-8])
    with pytest.raises(FormatError):
        unpack(good[:10])
    with pytest.raises(FormatError):
        unpack(good, expect_kind=0)
    (tmp_path / "g.rwiv").write_bytes(good)
    with pytest.raises(FormatError):
        read_grid(tmp_path / "g.rwiv")


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write(target, "first")

    class Boom:
        def __len__(self):
            return 1

    with pytest.raises(TypeError):
        atomic_write(target, Boom())
    assert target.read_text() == "first"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_csv(tmp_path):
    write_csv(tmp_path / "t.csv", ["iter", "misfit"], [[0, 0.5], [1, None]])
    assert (tmp_path / "t.csv").read_text() == "iter,misfit\n0,0.5\n1,\n"
