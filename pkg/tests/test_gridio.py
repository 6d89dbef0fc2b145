import json
import struct

import numpy as np
import pytest

from nhimld.gridio import (MAGIC, OFF_SHELL_BITS, GridFormatError, decode_grid, encode_grid, grid_image,
                           load_colormap, read_grid, read_ppm, render, write_grid, write_ppm)
from nhimld.ld import VARIABLE, LdConfig, compute_grid
from nhimld.slices import SliceSpec


@pytest.fixture(scope="module")
def grid(model2):
    slc = SliceSpec.uxpx_2dof(-7.1, (4.0, 7.0), (-1.0, 1.0))
    return compute_grid(model2, slc, 15.25, LdConfig(mode=VARIABLE, tau=10.0), (17, 11))


def test_layout(grid):
    data = encode_grid(grid)
    assert data[:4] == MAGIC and struct.unpack("<II", data[4:12]) == (17, 11)
    assert len(data) == 12 + 17 * 11 * 40
    rec = np.frombuffer(data[12:], dtype="<u8").reshape(17, 11, 5)
    off = ~grid.on_shell
    assert off.any()
    assert np.all(rec[off] == OFF_SHELL_BITS)
    # row-major with the first swept axis outermost
    assert np.frombuffer(data[12:20], "<f8")[0] == grid.lf[0, 0] or off[0, 0]


def test_round_trip_bytes(grid, tmp_path):
    p1, p2 = tmp_path / "a.ldg", tmp_path / "b.ldg"
    write_grid(p1, grid, {"note": "x"})
    back = read_grid(p1)
    write_grid(p2, back)
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a.ldg.json").read_text() == (tmp_path / "b.ldg.json").read_text()
    meta = json.loads((tmp_path / "a.ldg.json").read_text())
    assert meta["ld"]["mode"] == VARIABLE and meta["model"]["model"] == "barbanis2dof"
    assert back.config == grid.config and back.slice == grid.slice
    np.testing.assert_array_equal(back.total, grid.total)


def test_decode_errors(grid):
    with pytest.raises(GridFormatError):
        decode_grid(b"LDG2" + bytes(8))
    with pytest.raises(GridFormatError):
        decode_grid(encode_grid(grid)[:-8])


def test_colormap():
    cm = load_colormap()
    assert cm.shape == (256, 3) and cm.dtype == np.uint8
    # viridis runs from dark purple to yellow
    assert cm[0].tolist() == [68, 1, 84] and cm[-1].tolist() == [253, 231, 37]


def test_ppm_round_trip(grid, tmp_path):
    img = grid_image(grid)
    assert img.shape == (11, 17, 3)
    path = tmp_path / "g.ppm"
    write_ppm(path, img)
    np.testing.assert_array_equal(read_ppm(path), img)
    assert path.read_bytes().startswith(b"P6\n17 11\n255\n")


def test_render_orientation():
    v = np.array([[0.0, 1.0], [2.0, np.nan]])
    rgb = render(v)
    # first axis runs left to right, second bottom to top
    assert rgb[1, 0].tolist() == load_colormap()[0].tolist()
    assert rgb[0, 1].tolist() == [255, 255, 255]
    assert rgb[1, 1].tolist() == load_colormap()[255].tolist()


def test_escape_colour(model2, tmp_path):
    slc = SliceSpec.uxpx_2dof(0.0, (-5.6, 5.6), (-5.6, 5.6))
    g = compute_grid(model2, slc, 15.25, LdConfig(tau=20.0), 21)
    img = grid_image(g)
    assert (img.reshape(-1, 3) == [230, 40, 40]).all(axis=1).any()
