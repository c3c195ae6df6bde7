"""
Scalar field I/O for topo-match

This module handles:
- The ScalarField / BinaryMask value types (2D likelihood maps and masks)
- Loading and saving raw-f32 (+ JSON header), csv and binary PGM files
- Binarization with a strict threshold
"""

import io
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.exceptions import (
    DimensionMismatchError,
    FieldFormatError,
    FieldIOError,
    FieldValueError,
    InvalidParameterError,
)
from src.serialization import atomic_write_bytes, atomic_write_text, read_json, to_json_text

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class FieldFormat(str, Enum):
    """On-disk formats accepted by load_field / save_field"""

    RAW_F32 = "raw-f32"
    CSV = "csv"
    PGM = "pgm"


_EXTENSION_FORMATS = {
    ".f32": FieldFormat.RAW_F32,
    ".json": FieldFormat.RAW_F32,
    ".csv": FieldFormat.CSV,
    ".pgm": FieldFormat.PGM,
}


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    A 2D likelihood map with every value in [0, 1], stored row-major (height, width)

    Values are rounded to the nearest float32 on construction and held as
    float64, so the raw-f32 format stores every field without loss.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise FieldFormatError(f"A field must be a non-empty 2D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FieldValueError("Field contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise FieldValueError(
                f"Field values must lie in [0, 1], got range [{values.min()!r}, {values.max()!r}]"
            )
        values = values.astype(np.float32).astype(np.float64)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def filtration(self) -> np.ndarray:
        """Filtration values g = 1 - f used by every topological computation"""
        return 1.0 - self.values

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A row-major boolean grid (feature masks, ground-truth masks)"""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise FieldFormatError(f"A mask must be a non-empty 2D grid, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits))

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))


def require_same_shape(first, second, what: str = "inputs") -> None:
    """Raise DimensionMismatchError unless two fields/masks share dimensions"""
    if first.shape != second.shape:
        raise DimensionMismatchError(
            f"{what} must share dimensions: {first.width}x{first.height} vs {second.width}x{second.height}"
        )


def resolve_format(path: PathLike, fmt: Optional[Union[str, FieldFormat]] = None) -> FieldFormat:
    """Resolve an explicit format name, or infer one from the file extension"""
    if fmt is not None:
        try:
            return FieldFormat(fmt)
        except ValueError:
            raise InvalidParameterError(
                f"Unknown field format {fmt!r}; expected one of {[f.value for f in FieldFormat]}"
            )
    suffix = Path(path).suffix.lower()
    if suffix not in _EXTENSION_FORMATS:
        raise InvalidParameterError(f"Cannot infer field format from extension {suffix!r} of {path}")
    return _EXTENSION_FORMATS[suffix]


def _raw_paths(path: PathLike) -> Tuple[Path, Path]:
    """Payload and header paths of a raw-f32 field (<name>.f32 + <name>.json)"""
    base = Path(path)
    if base.suffix.lower() in (".f32", ".json"):
        base = base.with_suffix("")
    return base.with_name(base.name + ".f32"), base.with_name(base.name + ".json")


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as e:
        raise FieldIOError(f"Could not read {path}: {e}") from e


def _load_raw(path: PathLike) -> np.ndarray:
    data_path, header_path = _raw_paths(path)
    header = read_json(header_path)
    if not isinstance(header, dict):
        raise FieldFormatError(f"Header {header_path} must be a JSON object")

    expected = {"dtype": "f32", "order": "row-major", "endianness": "little"}
    for key, value in expected.items():
        if header.get(key) != value:
            raise FieldFormatError(f"Header {header_path}: {key} must be {value!r}, got {header.get(key)!r}")

    width, height = header.get("width"), header.get("height")
    for name, dim in (("width", width), ("height", height)):
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise FieldFormatError(f"Header {header_path}: {name} must be a positive integer, got {dim!r}")

    payload = _read_bytes(data_path)
    if len(payload) != 4 * width * height:
        raise FieldFormatError(
            f"Size mismatch in {data_path}: header declares {width}x{height} "
            f"({width * height} floats) but payload holds {len(payload) / 4:g} floats"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return values.reshape(height, width)


def _load_csv(path: PathLike) -> np.ndarray:
    try:
        with open(path, "r") as f:
            values = np.loadtxt(f, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError as e:
        raise FieldIOError(f"Could not read {path}: {e}") from e
    except ValueError as e:
        raise FieldFormatError(f"Malformed csv field {path}: {e}") from e
    return values


def _next_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Next whitespace-separated header token of a PNM file, skipping comments"""
    length = len(data)
    while pos < length:
        if data[pos:pos + 1] == b"#":
            while pos < length and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < length and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FieldFormatError("Truncated PGM header")
    return data[start:pos], pos


def _load_pgm(path: PathLike) -> np.ndarray:
    data = _read_bytes(Path(path))
    magic, pos = _next_token(data, 0)
    if magic != b"P5":
        raise FieldFormatError(f"{path} is not a binary PGM (magic {magic!r})")
    try:
        width_tok, pos = _next_token(data, pos)
        height_tok, pos = _next_token(data, pos)
        maxval_tok, pos = _next_token(data, pos)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as e:
        raise FieldFormatError(f"Malformed PGM header in {path}: {e}") from e
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise FieldFormatError(f"Malformed PGM header in {path}: {width}x{height}, maxval {maxval}")

    # exactly one whitespace byte separates the header from the samples
    payload = data[pos + 1:]
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    expected = width * height * dtype.itemsize
    if len(payload) != expected:
        raise FieldFormatError(
            f"Size mismatch in {path}: header declares {width}x{height} but payload has {len(payload)} bytes"
        )
    samples = np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(height, width)
    if samples.max() > maxval:
        raise FieldFormatError(f"{path} has samples above maxval {maxval}")
    return samples / maxval


def load_field(path: PathLike, format: Optional[Union[str, FieldFormat]] = None) -> ScalarField:
    """
    Load a scalar field from disk

    Args:
        path: Field file (for raw-f32 either <name>, <name>.f32 or <name>.json)
        format: "raw-f32", "csv" or "pgm"; inferred from the extension when omitted

    Returns:
        A validated ScalarField
    """
    fmt = resolve_format(path, format)
    if fmt is FieldFormat.RAW_F32:
        values = _load_raw(path)
    elif fmt is FieldFormat.CSV:
        values = _load_csv(path)
    else:
        values = _load_pgm(path)

    field = ScalarField(values)
    logger.debug(f"Loaded {fmt.value} field {path} ({field.width}x{field.height})")
    return field


def load_mask(path: PathLike, format: Optional[Union[str, FieldFormat]] = None,
              threshold: float = 0.5) -> BinaryMask:
    """Load a field and binarize it; ground-truth masks are stored as 0/1 fields"""
    return binarize(load_field(path, format), threshold)


def quantize(values: np.ndarray, maxval: int) -> np.ndarray:
    """Nearest-integer PGM samples, ties rounding up"""
    return np.floor(values * maxval + 0.5).astype(np.int64)


def save_field(field: ScalarField, path: PathLike, format: Optional[Union[str, FieldFormat]] = None,
               maxval: int = 255) -> Path:
    """
    Save a scalar field atomically

    Args:
        field: Field to write
        path: Destination (raw-f32 writes <name>.f32 and <name>.json)
        format: "raw-f32", "csv" or "pgm"; inferred from the extension when omitted
        maxval: PGM sample range, 255 or 65535

    Returns:
        Path of the written payload
    """
    fmt = resolve_format(path, format)

    if fmt is FieldFormat.RAW_F32:
        data_path, header_path = _raw_paths(path)
        header = {
            "width": field.width,
            "height": field.height,
            "dtype": "f32",
            "order": "row-major",
            "endianness": "little",
        }
        atomic_write_bytes(data_path, field.values.astype("<f4").tobytes())
        atomic_write_text(header_path, to_json_text(header))
        target = data_path
    elif fmt is FieldFormat.CSV:
        buffer = io.StringIO()
        np.savetxt(buffer, field.values, delimiter=",", fmt="%.17g")
        target = atomic_write_text(path, buffer.getvalue())
    else:
        if maxval not in (255, 65535):
            raise InvalidParameterError(f"PGM maxval must be 255 or 65535, got {maxval}")
        samples = quantize(field.values, maxval)
        dtype = "u1" if maxval == 255 else ">u2"
        header = f"P5\n{field.width} {field.height}\n{maxval}\n".encode("ascii")
        target = atomic_write_bytes(path, header + samples.astype(dtype).tobytes())

    logger.debug(f"Saved {fmt.value} field to {target}")
    return target


def binarize(field: ScalarField, threshold: float = 0.5) -> BinaryMask:
    """Bit p is set iff value p > threshold (strict)"""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidParameterError(f"Binarization threshold must lie in [0, 1], got {threshold}")
    return BinaryMask(field.values > threshold)


def mask_to_field(mask: BinaryMask) -> ScalarField:
    """Exact 0/1 field of a mask"""
    return ScalarField(mask.bits.astype(np.float64))
