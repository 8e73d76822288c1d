"""Raster data model, seeded RNG and on-disk formats.

Cubes are held as ``(bands, height, width)`` float64 arrays, i.e. band
sequential in memory, which matches the file layout and keeps per-band
operations contiguous. Numerical routines elsewhere in the package accept
either an :class:`HsiCube` or a bare array of that shape.

Raster files are a single line of JSON followed by a binary payload::

    {"height": 4, "width": 4, "bands": 3, "dtype": "f32le", "scale_factor": 1.0, "layout": "bsq"}\\n
    <height*width*bands little-endian values, band after band>

The container format used for codec state and denoiser coefficients has the
same shape but carries named float64 arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "HsiCube",
    "Rng",
    "RasterFormatError",
    "NumericError",
    "as_cube_array",
    "check_finite",
    "spectral_angles",
    "standard_normal_field",
    "load_cube",
    "save_cube",
    "load_segmentation",
    "save_segmentation",
    "write_container",
    "read_container",
    "DEFAULT_SCALE_FACTOR",
]

DEFAULT_SCALE_FACTOR = 10000.0

_DTYPES = {"f32le": np.dtype("<f4"), "u32le": np.dtype("<u4")}
_CONTAINER_MAGIC = "gewdiff-container"


class RasterFormatError(ValueError):
    """Raised when a raster or container file is malformed."""


class NumericError(FloatingPointError):
    """Raised when a NaN or infinity shows up where finite values are required."""


def check_finite(array: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{what} contains non-finite values")
    return array


def spectral_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel angle in radians between spectra along axis 0.

    Uses ``2 * atan2(|u - v|, |u + v|)`` on unit vectors, which is exact for
    identical directions where ``arccos`` of the cosine is not. Pairs with a
    zero vector get angle 0.
    """
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    valid = (na > 0) & (nb > 0)
    u = np.divide(a, na, out=np.zeros_like(a), where=valid)
    v = np.divide(b, nb, out=np.zeros_like(b), where=valid)
    angles = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=0), np.linalg.norm(u + v, axis=0))
    return np.where(valid, angles, 0.0)


@dataclass(frozen=True)
class HsiCube:
    """A ``bands x height x width`` reflectance raster.

    ``data`` is stored band-sequential as float64 and made read-only.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if data.ndim != 3:
            raise ValueError(f"cube data must be 3-D (bands, height, width), got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"cube dimensions must be positive, got {data.shape}")
        check_finite(data, "cube")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def as_cube_array(cube: HsiCube | np.ndarray, min_channels: int = 1) -> np.ndarray:
    """Return ``cube`` as a float64 ``(channels, height, width)`` array."""
    data = cube.data if isinstance(cube, HsiCube) else np.asarray(cube, dtype=np.float64)
    if data.ndim != 3:
        raise ValueError(f"expected a (channels, height, width) array, got shape {data.shape}")
    if data.shape[0] < min_channels:
        raise ValueError(f"need at least {min_channels} channels, got {data.shape[0]}")
    return data.astype(np.float64, copy=False)


class Rng:
    """Seeded normal-variate source.

    Backed by numpy's PCG64 bit generator; normals come from
    ``Generator.standard_normal`` (ziggurat). Streams are reproducible for a
    given seed. Do not share one instance between threads: use :meth:`spawn`
    to derive independent child streams.
    """

    def __init__(self, seed: int) -> None:
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self._seq = np.random.SeedSequence(seed)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def normal(self, shape: int | Sequence[int]) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def spawn(self, n: int) -> list["Rng"]:
        children = []
        for child_seq in self._seq.spawn(n):
            child = Rng.__new__(Rng)
            child.seed = self.seed
            child._seq = child_seq
            child._gen = np.random.Generator(np.random.PCG64(child_seq))
            children.append(child)
        return children

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


def standard_normal_field(rng: Rng, shape: int | Sequence[int]) -> np.ndarray:
    """I.i.d. standard-normal draws of the given shape.

    A zero-sized shape yields an empty array.
    """
    return rng.normal(shape)


# ---------------------------------------------------------------------------
# raster files
# ---------------------------------------------------------------------------


def _split_header(raw: bytes, path: Path) -> tuple[dict[str, Any], bytes]:
    newline = raw.find(b"\n")
    if newline < 0:
        raise RasterFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RasterFormatError(f"{path}: malformed header ({exc})") from exc
    if not isinstance(header, dict):
        raise RasterFormatError(f"{path}: header must be a JSON object")
    return header, raw[newline + 1 :]


def _read_raster(path: str | Path) -> tuple[dict[str, Any], np.ndarray]:
    path = Path(path)
    header, payload = _split_header(path.read_bytes(), path)
    try:
        height = int(header["height"])
        width = int(header["width"])
        bands = int(header["bands"])
        dtype = _DTYPES[header.get("dtype", "f32le")]
    except KeyError as exc:
        raise RasterFormatError(f"{path}: malformed header, missing or unknown {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise RasterFormatError(f"{path}: malformed header ({exc})") from exc
    if header.get("layout", "bsq") != "bsq":
        raise RasterFormatError(f"{path}: unsupported layout {header['layout']!r}")
    if min(height, width, bands) < 1:
        raise RasterFormatError(f"{path}: malformed header, non-positive dimension")
    expected = height * width * bands * dtype.itemsize
    if len(payload) != expected:
        raise RasterFormatError(
            f"{path}: payload length mismatch (expected {expected} bytes, found {len(payload)})"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(bands, height, width)
    return header, values


def _write_raster(path: str | Path, values: np.ndarray, dtype: str, scale_factor: float = 1.0) -> None:
    bands, height, width = values.shape
    header = {
        "height": height,
        "width": width,
        "bands": bands,
        "dtype": dtype,
        "scale_factor": scale_factor,
        "layout": "bsq",
    }
    payload = np.ascontiguousarray(values, dtype=_DTYPES[dtype]).tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload)


def load_cube(path: str | Path) -> HsiCube:
    """Read a float raster, dividing by the header's ``scale_factor``."""
    header, values = _read_raster(path)
    if header.get("dtype", "f32le") != "f32le":
        raise RasterFormatError(f"{path}: expected dtype f32le, found {header['dtype']!r}")
    if not np.all(np.isfinite(values)):
        raise RasterFormatError(f"{path}: non-finite values in payload")
    scale = float(header.get("scale_factor", 1.0))
    if not np.isfinite(scale) or scale <= 0:
        raise RasterFormatError(f"{path}: malformed header, bad scale_factor {scale}")
    data = values.astype(np.float64)
    if scale != 1.0:
        data = data / scale
    return HsiCube(data)


def save_cube(cube: HsiCube | np.ndarray, path: str | Path) -> None:
    """Write ``cube`` as a float32 raster with ``scale_factor`` 1.

    Values are narrowed to float32; cubes whose values are float32
    representable round-trip bit-exactly through :func:`load_cube`.
    """
    if not isinstance(cube, HsiCube):
        cube = HsiCube(cube)
    _write_raster(path, cube.data, "f32le")


def load_segmentation(path: str | Path) -> np.ndarray:
    """Read a single-band ``u32le`` label raster as an ``(height, width)`` int64 array."""
    header, values = _read_raster(path)
    if header.get("dtype") != "u32le" or values.shape[0] != 1:
        raise RasterFormatError(f"{path}: segmentation rasters must be u32le with one band")
    return values[0].astype(np.int64)


def save_segmentation(labels: np.ndarray, path: str | Path) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.size == 0:
        raise ValueError("label map must be a non-empty 2-D array")
    if labels.min() < 0 or labels.max() >= 2**32:
        raise ValueError("labels must fit in an unsigned 32-bit integer")
    _write_raster(path, labels[None].astype(np.uint32), "u32le")


# ---------------------------------------------------------------------------
# named-array container (codec state, denoiser coefficients)
# ---------------------------------------------------------------------------


def write_container(path: str | Path, meta: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
    """Write named float64 arrays plus JSON metadata to ``path``."""
    entries = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape)})
        chunks.append(arr.tobytes())
    header = {"format": _CONTAINER_MAGIC, "dtype": "f64le", "meta": dict(meta), "arrays": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for chunk in chunks:
            fh.write(chunk)


def read_container(path: str | Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    path = Path(path)
    header, payload = _split_header(path.read_bytes(), path)
    if header.get("format") != _CONTAINER_MAGIC:
        raise RasterFormatError(f"{path}: not a container file")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header.get("arrays", []):
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + nbytes > len(payload):
            raise RasterFormatError(f"{path}: payload length mismatch")
        arrays[entry["name"]] = np.frombuffer(payload, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise RasterFormatError(f"{path}: payload length mismatch")
    return header.get("meta", {}), arrays
