import json

import numpy as np
import pytest

from core import field_io
from core.exceptions import DataError
from models import GridField, Rank


def _vector_field():
    values = np.arange(2 * 8 * 4, dtype=float).reshape(2, 8, 4)
    return GridField(extent=(1.0, 0.5), nodes=(8, 4), rank=Rank.VECTOR, values=values, origin=(0.25, 0.0))


def test_vector_field_survives_storage(tmp_path):
    field = _vector_field()
    header = field_io.write_field(field, str(tmp_path / "u"))
    assert header.endswith("u.json")
    assert (tmp_path / "u.bin").stat().st_size == field.values.size * 8

    loaded = field_io.read_field(str(tmp_path / "u.json"))
    assert loaded.rank is Rank.VECTOR
    assert loaded.nodes == (8, 4)
    assert loaded.origin == (0.25, 0.0)
    np.testing.assert_array_equal(loaded.values, field.values)


def test_header_with_wrong_size_is_rejected(tmp_path):
    field_io.write_field(_vector_field(), str(tmp_path / "u"))
    header = json.loads((tmp_path / "u.json").read_text())
    header["nodes"] = [16, 4]
    (tmp_path / "u.json").write_text(json.dumps(header))
    with pytest.raises(DataError, match="header expects"):
        field_io.read_field(str(tmp_path / "u"))


def test_big_endian_data_is_rejected(tmp_path):
    field_io.write_field(_vector_field(), str(tmp_path / "u"))
    header = json.loads((tmp_path / "u.json").read_text())
    header["dtype"] = ">f8"
    (tmp_path / "u.json").write_text(json.dumps(header))
    with pytest.raises(DataError):
        field_io.read_field(str(tmp_path / "u"))


def test_non_finite_samples_are_rejected(tmp_path):
    field_io.write_field(_vector_field(), str(tmp_path / "u"))
    raw = np.fromfile(tmp_path / "u.bin", dtype="<f8")
    raw[3] = np.nan
    raw.tofile(tmp_path / "u.bin")
    with pytest.raises(DataError, match="non-finite"):
        field_io.read_field(str(tmp_path / "u"))


def test_missing_header_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        field_io.read_field(str(tmp_path / "absent"))
