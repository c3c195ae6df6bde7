"""
Deterministic JSON text and atomic file writes

Every float is printed with 17 significant digits so golden files round-trip
exactly; keys keep the order the producer inserted them in.
"""

import json
import math
import os
import tempfile
import logging
from pathlib import Path
from typing import Any, Union

import numpy as np

from src.exceptions import FieldFormatError, FieldIOError, InvalidParameterError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    """Format a float with 17 significant digits as a JSON number"""
    if not math.isfinite(value):
        raise InvalidParameterError(f"Cannot serialize non-finite number {value!r}")
    text = format(value, ".17g")
    # keep a float marker so integral floats do not read back as integers
    if "." not in text and "e" not in text and "n" not in text:
        text += ".0"
    return text


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays to plain Python values"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _encode(value: Any, indent: int, level: int) -> str:
    value = _plain(value)
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)

    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        # short rows of scalars (pixels, matrix rows) stay on one line
        if all(not isinstance(_plain(v), (dict, list, tuple)) for v in value):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in value) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    raise InvalidParameterError(f"Cannot serialize object of type {type(value).__name__}")


def to_json_text(obj: Any, indent: int = 2) -> str:
    """
    Render obj as deterministic JSON text

    Args:
        obj: Nested dicts/lists of numbers, strings, booleans and None
        indent: Spaces per nesting level

    Returns:
        JSON text ending with a newline
    """
    return _encode(obj, indent, 0) + "\n"


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write data to path through a temporary file renamed into place"""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as e:
        raise FieldIOError(f"Could not write {target}: {e}") from e

    logger.debug(f"Wrote {len(data)} bytes to {target}")
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write UTF-8 text atomically"""
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: PathLike, obj: Any) -> Path:
    """Serialize obj with to_json_text and write it atomically"""
    return atomic_write_text(path, to_json_text(obj))


def read_json(path: PathLike) -> Any:
    """Read a JSON document, wrapping I/O and syntax failures"""
    try:
        with open(path, "r") as f:
            return json.load(f)
    except OSError as e:
        raise FieldIOError(f"Could not read {path}: {e}") from e
    except ValueError as e:
        raise FieldFormatError(f"Invalid JSON in {path}: {e}") from e
