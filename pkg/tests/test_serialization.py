"""
Tests for deterministic JSON output and atomic writes
"""

import json

import numpy as np
import pytest

from src.exceptions import FieldFormatError, FieldIOError, InvalidParameterError
from src.serialization import atomic_write_bytes, format_float, read_json, to_json_text, write_json


def test_floats_keep_seventeen_digits():
    assert format_float(0.1) == "0.10000000000000001"
    assert float(format_float(0.7000000000000001)) == 0.7000000000000001
    assert format_float(1.0) == "1.0"
    assert format_float(1e-20) == "9.9999999999999995e-21"


def test_non_finite_floats_are_rejected():
    with pytest.raises(InvalidParameterError):
        format_float(float("nan"))
    with pytest.raises(InvalidParameterError):
        to_json_text({"x": float("inf")})


def test_numpy_values_and_layout():
    text = to_json_text({"n": np.int64(3), "flag": np.bool_(True), "pixel": (2, 5), "v": np.float64(0.5),
                         "rows": np.array([[0.25, 1.0]]), "empty": [], "nested": {}})
    assert json.loads(text) == {"n": 3, "flag": True, "pixel": [2, 5], "v": 0.5,
                                "rows": [[0.25, 1.0]], "empty": [], "nested": {}}
    assert '"pixel": [2, 5]' in text
    assert text.endswith("\n")


def test_key_order_is_preserved():
    text = to_json_text({"z": 1, "a": 2})
    assert text.index('"z"') < text.index('"a"')


def test_unknown_types_are_rejected():
    with pytest.raises(InvalidParameterError):
        to_json_text({"x": object()})


def test_write_and_read(tmp_path):
    path = write_json(tmp_path / "nested" / "out.json", {"values": [0.1, 0.2]})
    assert read_json(path) == {"values": [0.1, 0.2]}
    assert [p.name for p in path.parent.iterdir()] == ["out.json"]


def test_atomic_write_replaces_existing(tmp_path):
    target = tmp_path / "data.bin"
    atomic_write_bytes(target, b"old")
    atomic_write_bytes(target, b"new")
    assert target.read_bytes() == b"new"


def test_read_errors(tmp_path):
    with pytest.raises(FieldIOError):
        read_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(FieldFormatError):
        read_json(bad)
