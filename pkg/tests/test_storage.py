import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from source.errors import FormatError, TruncatedPayload
from source.geometry import DomainSpec
from source.grid import Field, PolarGrid
from source.storage import load_field, save_field, write_json, write_pgm


def _saved(tmp_path, grid, rng):
    u = Field(grid, rng.standard_normal(grid.shape))
    return u, save_field(u, tmp_path / "u")


def _edit_header(header_path, **changes):
    data = json.loads(header_path.read_text(encoding="utf-8"))
    data.update(changes)
    header_path.write_text(json.dumps(data), encoding="utf-8")


def test_roundtrip_is_bitwise(tmp_path, annulus_grid, rng):
    u, header = _saved(tmp_path, annulus_grid, rng)
    assert header.name == "u.json"
    assert (tmp_path / "u.f64").stat().st_size == 8 * annulus_grid.n_nodes

    loaded = load_field(header)
    assert loaded.grid.domain == annulus_grid.domain
    assert loaded.grid.shape == annulus_grid.shape
    assert_array_equal(loaded.values.view(np.uint64), u.values.view(np.uint64))
    assert_array_equal(load_field(tmp_path / "u.f64", annulus_grid).values, u.values)


def test_header_contents(tmp_path, disk_grid, rng):
    _, header = _saved(tmp_path, disk_grid, rng)
    data = json.loads(header.read_text(encoding="utf-8"))
    assert data == {
        "format_version": 1,
        "domain": {"kind": "Disk", "r_inner": 0.0, "r_outer": 1.0},
        "N_r": 16,
        "N_theta": 16,
        "byte_order": "little",
        "dtype": "float64",
        "count": 256,
    }


def test_truncated_payload(tmp_path, disk_grid, rng):
    _, header = _saved(tmp_path, disk_grid, rng)
    payload = tmp_path / "u.f64"
    payload.write_bytes(payload.read_bytes()[:-8])
    with pytest.raises(TruncatedPayload):
        load_field(header)
    payload.unlink()
    with pytest.raises(TruncatedPayload):
        load_field(header)


@pytest.mark.parametrize("changes, field", [
    ({"count": 255}, "count"),
    ({"N_r": 0}, "N_r"),
    ({"byte_order": "big"}, "byte_order"),
    ({"dtype": "float32"}, "dtype"),
    ({"format_version": 2}, "format_version"),
    ({"domain": {"kind": "Disk", "r_inner": 0.5, "r_outer": 1.0}}, "domain"),
])
def test_malformed_header(tmp_path, disk_grid, rng, changes, field):
    _, header = _saved(tmp_path, disk_grid, rng)
    _edit_header(header, **changes)
    with pytest.raises(FormatError) as excinfo:
        load_field(header)
    assert excinfo.value.field == field


def test_grid_mismatch(tmp_path, disk_grid, rng):
    _, header = _saved(tmp_path, disk_grid, rng)
    with pytest.raises(FormatError) as excinfo:
        load_field(header, PolarGrid(disk_grid.domain, 8, 16))
    assert excinfo.value.field == "N_r"
    with pytest.raises(FormatError) as excinfo:
        load_field(header, PolarGrid(DomainSpec.disk(2.0), 16, 16))
    assert excinfo.value.field == "domain"


def test_missing_header(tmp_path):
    with pytest.raises(FormatError) as excinfo:
        load_field(tmp_path / "nothing.json")
    assert excinfo.value.field == "header"


def test_pgm_of_radial_field(tmp_path, disk_grid):
    u = disk_grid.from_function(lambda r, t: 1.0 - r ** 2)
    path = tmp_path / "u.pgm"
    write_pgm(u, path)
    raw = path.read_bytes()
    header = b"P5\n16 16\n255\n"
    assert raw.startswith(header)
    pixels = np.frombuffer(raw[len(header):], dtype=np.uint8).reshape(disk_grid.n_theta, disk_grid.n_r)
    # Строки соответствуют θ, у радиального поля все строки одинаковы
    assert_array_equal(pixels, np.repeat(pixels[:1], disk_grid.n_theta, axis=0))
    assert pixels[0, 0] == 255 and pixels[0, -1] == 0


def test_pgm_of_constant_field(tmp_path, disk_grid):
    path = tmp_path / "zero.pgm"
    write_pgm(disk_grid.zeros(), path)
    assert set(path.read_bytes()[len(b"P5\n16 16\n255\n"):]) == {0}


def test_json_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_json(a, {"b": 1, "a": [1.5, None]})
    write_json(b, {"a": [1.5, None], "b": 1})
    assert a.read_bytes() == b.read_bytes()
