"""Hyperspectral cube data model, file I/O, calibration and spectral smoothing.

Cubes are held in memory as ``(lines, samples, bands)`` arrays, i.e. rows of
the image first, so ``values[y, x]`` is the spectrum of pixel ``(x, y)``.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CubeFormatError", "BandRangeError", "DegenerateReferenceError", "WavelengthAxis", "HyperCube",
    "Spectrum", "CalibrationRefs", "load_cube", "save_cube", "calibrate",
    "savgol_coefficients", "savgol_smooth_array", "savgol_smooth", "crop_bands",
    "uniform_axis",
]

_DTYPES = {
    "float32": np.dtype("<f4"),
    "float64": np.dtype("<f8"),
    "uint16": np.dtype("<u2"),
}
# numeric ENVI data type codes accepted on read
_ENVI_CODES = {"4": "float32", "5": "float64", "12": "uint16"}


class CubeFormatError(ValueError):
    """Raised for malformed cube headers or header/payload mismatches."""


class BandRangeError(ValueError):
    """No band of the cube falls inside the requested wavelength range."""


class DegenerateReferenceError(ValueError):
    """Raised when the white reference is not brighter than the dark reference."""

    def __init__(self, band, wavelength=None):
        self.band = band
        self.wavelength = wavelength
        where = f"band {band}"
        if wavelength is not None:
            where += f" ({wavelength:g} nm)"
        super().__init__(f"white reference <= dark reference at {where}")


class WavelengthAxis:
    """Strictly increasing band-centre wavelengths in nanometres."""

    __slots__ = ("_nm",)

    def __init__(self, wavelengths_nm):
        nm = np.array(wavelengths_nm, dtype=np.float64).ravel()
        if nm.size < 1:
            raise ValueError("wavelength axis is empty")
        if not np.all(np.isfinite(nm)):
            raise ValueError("wavelengths must be finite")
        if nm.size > 1 and not np.all(np.diff(nm) > 0):
            raise ValueError("wavelengths must be strictly increasing")
        nm.setflags(write=False)
        self._nm = nm

    @property
    def nm(self) -> np.ndarray:
        return self._nm

    def __len__(self):
        return self._nm.size

    def __eq__(self, other):
        if not isinstance(other, WavelengthAxis):
            return NotImplemented
        return np.array_equal(self._nm, other._nm)

    def __hash__(self):
        return hash(self._nm.tobytes())

    def __repr__(self):
        if len(self) <= 4:
            return f"WavelengthAxis({self._nm.tolist()})"
        return (f"WavelengthAxis({len(self)} bands, "
                f"{self._nm[0]:g}-{self._nm[-1]:g} nm)")

    def nearest_band(self, wavelength_nm: float) -> int:
        """Index of the band closest to ``wavelength_nm`` (lower index on ties)."""
        return int(np.argmin(np.abs(self._nm - wavelength_nm)))

    def select(self, mask_or_index) -> "WavelengthAxis":
        return WavelengthAxis(self._nm[mask_or_index])


def uniform_axis(lo_nm: float, hi_nm: float, bands: int) -> WavelengthAxis:
    """Evenly spaced axis with ``bands`` points from ``lo_nm`` to ``hi_nm`` inclusive."""
    return WavelengthAxis(np.linspace(lo_nm, hi_nm, bands))


def _as_axis(axis) -> WavelengthAxis:
    return axis if isinstance(axis, WavelengthAxis) else WavelengthAxis(axis)


@dataclass(frozen=True, eq=False)
class HyperCube:
    """A ``(lines, samples, bands)`` array of pixel spectra with its wavelength axis.

    The array is made read-only on construction, so cubes can be shared freely.
    """

    values: np.ndarray
    axis: WavelengthAxis

    def __post_init__(self):
        axis = _as_axis(self.axis)
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise ValueError(f"cube values must be 3-D, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("cube must have at least one pixel")
        if values.shape[2] != len(axis):
            raise ValueError(
                f"cube has {values.shape[2]} bands but axis has {len(axis)}")
        if values.dtype.kind == "f" and not np.all(np.isfinite(values)):
            raise ValueError("cube values must be finite")
        if values.flags.writeable:
            values = values.copy()
            values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "axis", axis)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def wavelengths(self) -> np.ndarray:
        return self.axis.nm

    def pixels(self) -> np.ndarray:
        """All spectra as an ``(N, bands)`` array in row-major pixel order."""
        return self.values.reshape(-1, self.bands)

    def spectrum(self, x: int, y: int) -> "Spectrum":
        return Spectrum(self.axis, self.values[y, x])

    def with_values(self, values) -> "HyperCube":
        return HyperCube(values, self.axis)

    def __eq__(self, other):
        if not isinstance(other, HyperCube):
            return NotImplemented
        return (self.axis == other.axis and self.values.dtype == other.values.dtype
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Spectrum:
    axis: WavelengthAxis
    values: np.ndarray

    def __post_init__(self):
        axis = _as_axis(self.axis)
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != len(axis):
            raise ValueError(
                f"spectrum has {values.size} values but axis has {len(axis)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return self.axis == other.axis and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CalibrationRefs:
    """White (diffuse standard) and dark-current measurements.

    ``white`` and ``dark`` may be cubes, line scans or plain per-band vectors;
    everything except the last (band) axis is averaged away.
    """

    white: np.ndarray
    dark: np.ndarray
    reflectivity: float = 0.99
    _white_mean: np.ndarray = field(init=False, repr=False)
    _dark_mean: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        white = self.white.values if isinstance(self.white, HyperCube) else self.white
        dark = self.dark.values if isinstance(self.dark, HyperCube) else self.dark
        white = np.asarray(white, dtype=np.float64)
        dark = np.asarray(dark, dtype=np.float64)
        if white.shape != dark.shape:
            raise ValueError(
                f"white {white.shape} and dark {dark.shape} shapes differ")
        if not 0.0 < self.reflectivity <= 1.0:
            raise ValueError(f"reflectivity must be in (0, 1], got {self.reflectivity}")
        object.__setattr__(self, "white", white)
        object.__setattr__(self, "dark", dark)
        bands = white.shape[-1]
        object.__setattr__(self, "_white_mean", white.reshape(-1, bands).mean(axis=0))
        object.__setattr__(self, "_dark_mean", dark.reshape(-1, bands).mean(axis=0))

    @property
    def bands(self) -> int:
        return self.white.shape[-1]

    @property
    def white_mean(self) -> np.ndarray:
        return self._white_mean

    @property
    def dark_mean(self) -> np.ndarray:
        return self._dark_mean


# --------------------------------------------------------------------------
# file I/O

def _raw_path(header_path: Path) -> Path:
    return header_path.with_suffix(".raw")


def _parse_header(text: str) -> dict:
    fields = {}
    # brace values may span several lines
    for match in re.finditer(r"^\s*([^=\n]+?)\s*=\s*(\{[^}]*\}|[^\n]*)", text, re.M):
        key = match.group(1).strip().lower()
        value = match.group(2).strip()
        if value.startswith("{"):
            value = value[1:-1].strip()
        fields[key] = value
    return fields


def _header_int(fields, key):
    try:
        value = int(fields[key])
    except KeyError:
        raise CubeFormatError(f"header is missing required key {key!r}") from None
    except ValueError:
        raise CubeFormatError(f"header key {key!r} is not an integer") from None
    if value < 1:
        raise CubeFormatError(f"header key {key!r} must be positive, got {value}")
    return value


def load_cube(header_path) -> HyperCube:
    """Read a cube from ``<name>.hdr`` and its companion ``<name>.raw``.

    Raises:
        FileNotFoundError: header or payload missing.
        CubeFormatError: malformed header, unsupported sample type, or a payload
            whose size does not match the declared dimensions.
        ValueError: non-increasing wavelength list.
    """
    header_path = Path(header_path)
    fields = _parse_header(header_path.read_text(encoding="utf-8"))
    samples = _header_int(fields, "samples")
    lines = _header_int(fields, "lines")
    bands = _header_int(fields, "bands")

    interleave = fields.get("interleave", "").lower()
    if interleave not in ("bsq", "bil"):
        raise CubeFormatError(f"unsupported interleave {interleave!r}")
    dtype_name = fields.get("data type", "").lower()
    dtype_name = _ENVI_CODES.get(dtype_name, dtype_name)
    if dtype_name not in _DTYPES:
        raise CubeFormatError(f"unsupported data type {fields.get('data type')!r}")
    if fields.get("byte order", "0") != "0":
        raise CubeFormatError("only little-endian payloads are supported")
    offset = int(fields.get("header offset", "0"))

    if "wavelength" not in fields:
        raise CubeFormatError("header has no wavelength list")
    try:
        wavelengths = [float(w) for w in fields["wavelength"].split(",") if w.strip()]
    except ValueError:
        raise CubeFormatError("wavelength list is not numeric") from None
    if len(wavelengths) != bands:
        raise CubeFormatError(
            f"header declares {bands} bands but lists {len(wavelengths)} wavelengths")
    axis = WavelengthAxis(wavelengths)

    raw_path = _raw_path(header_path)
    dtype = _DTYPES[dtype_name]
    expected = samples * lines * bands * dtype.itemsize
    actual = os.path.getsize(raw_path) - offset
    if actual != expected:
        raise CubeFormatError(
            f"{raw_path.name} holds {actual} bytes, header implies {expected} "
            f"({lines} lines x {samples} samples x {bands} bands x {dtype.itemsize})")
    flat = np.fromfile(raw_path, dtype=dtype, offset=offset)
    if interleave == "bsq":
        values = flat.reshape(bands, lines, samples).transpose(1, 2, 0)
    else:
        values = flat.reshape(lines, bands, samples).transpose(0, 2, 1)
    return HyperCube(np.ascontiguousarray(values.astype(dtype.newbyteorder("="))), axis)


def _format_header(cube: HyperCube, interleave: str, dtype_name: str,
                   description: str | None) -> str:
    wl = ", ".join(repr(float(w)) for w in cube.wavelengths)
    lines = ["ENVI"]
    if description:
        lines.append(f"description = {{{description}}}")
    lines += [
        f"samples = {cube.width}",
        f"lines = {cube.height}",
        f"bands = {cube.bands}",
        "header offset = 0",
        "file type = ENVI Standard",
        f"data type = {dtype_name}",
        f"interleave = {interleave}",
        "byte order = 0",
        "wavelength units = Nanometers",
        f"wavelength = {{{wl}}}",
    ]
    return "\n".join(lines) + "\n"


def save_cube(cube: HyperCube, header_path, interleave: str = "bsq",
              dtype: str | None = None, description: str | None = None) -> None:
    """Write ``cube`` as a header/payload pair that :func:`load_cube` reads back.

    ``dtype`` defaults to the cube's own sample type, so the round trip is
    bit-exact. Forcing a narrower type (e.g. float32 for a float64 cube) is lossy.
    """
    header_path = Path(header_path)
    interleave = interleave.lower()
    if interleave not in ("bsq", "bil"):
        raise ValueError(f"unsupported interleave {interleave!r}")
    if dtype is None:
        dtype = {"f4": "float32", "f8": "float64", "u2": "uint16"}.get(
            f"{cube.values.dtype.kind}{cube.values.dtype.itemsize}")
        if dtype is None:
            raise ValueError(f"cannot store samples of type {cube.values.dtype}")
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported data type {dtype!r}")
    payload = cube.values.astype(_DTYPES[dtype], copy=False)
    if interleave == "bsq":
        payload = payload.transpose(2, 0, 1)
    else:
        payload = payload.transpose(0, 2, 1)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    with open(_raw_path(header_path), "wb") as fh:
        fh.write(np.ascontiguousarray(payload).tobytes())
    header_path.write_text(_format_header(cube, interleave, dtype, description),
                           encoding="utf-8")


# --------------------------------------------------------------------------
# calibration

def calibrate(raw: HyperCube, refs: CalibrationRefs) -> HyperCube:
    """Convert raw intensities to relative reflectance with a two-point formula.

    ``R = reflectivity * (raw - dark) / (white - dark)`` per band, using the
    band means of the reference scans. Negative values are clamped to zero;
    values above ``reflectivity`` (glints) are kept.
    """
    if refs.bands != raw.bands:
        raise ValueError(
            f"references have {refs.bands} bands, cube has {raw.bands}")
    span = refs.white_mean - refs.dark_mean
    bad = np.flatnonzero(~(span > 0))
    if bad.size:
        b = int(bad[0])
        raise DegenerateReferenceError(b, float(raw.wavelengths[b]))
    values = refs.reflectivity * ((raw.values.astype(np.float64) - refs.dark_mean) / span)
    np.maximum(values, 0.0, out=values)
    return HyperCube(values, raw.axis)


# --------------------------------------------------------------------------
# Savitzky-Golay smoothing

def _check_savgol(order, width):
    if order < 0:
        raise ValueError(f"smoothing order must be >= 0, got {order}")
    if width < 1 or width % 2 == 0:
        raise ValueError(f"smoothing width must be a positive odd integer, got {width}")
    if order >= width:
        raise ValueError(f"smoothing order {order} must be below width {width}")


def _window_coefficients(offsets: np.ndarray, degree: int) -> np.ndarray:
    # weights w such that w @ y is the fitted polynomial evaluated at offset 0
    scale = max(1.0, float(np.max(np.abs(offsets))))
    vander = np.vander(offsets / scale, degree + 1, increasing=True)
    return np.linalg.pinv(vander)[0]


def savgol_coefficients(n_bands: int, order: int = 4, width: int = 25) -> list:
    """Per-band ``(start, weights)`` pairs of the smoothing operator.

    Windows that would run past either end are truncated to the available
    samples and the fit degree drops to ``min(order, len(window) - 1)``.
    """
    _check_savgol(order, width)
    half = width // 2
    coeffs = []
    interior = None
    for i in range(n_bands):
        lo, hi = max(0, i - half), min(n_bands - 1, i + half)
        if lo == i - half and hi == i + half:
            if interior is None:
                interior = _window_coefficients(np.arange(-half, half + 1, dtype=float),
                                                min(order, width - 1))
            coeffs.append((lo, interior))
            continue
        n = hi - lo + 1
        offsets = np.arange(lo - i, hi - i + 1, dtype=float)
        coeffs.append((lo, _window_coefficients(offsets, min(order, n - 1))))
    return coeffs


def savgol_smooth_array(values, order: int = 4, width: int = 25) -> np.ndarray:
    """Smooth along the last axis of ``values``; works for single spectra too."""
    values = np.asarray(values, dtype=np.float64)
    n_bands = values.shape[-1]
    coeffs = savgol_coefficients(n_bands, order, width)
    out = np.empty_like(values)
    half = width // 2
    if n_bands >= width:
        windows = np.lib.stride_tricks.sliding_window_view(values, width, axis=-1)
        out[..., half:n_bands - half] = windows @ coeffs[half][1]
        edge = list(range(half)) + list(range(n_bands - half, n_bands))
    else:
        edge = range(n_bands)
    for i in edge:
        lo, w = coeffs[i]
        out[..., i] = values[..., lo:lo + w.size] @ w
    return out


def savgol_smooth(cube: HyperCube, order: int = 4, width: int = 25) -> HyperCube:
    """Savitzky-Golay smoothing of every pixel spectrum over band index."""
    return HyperCube(savgol_smooth_array(cube.values, order, width), cube.axis)


def crop_bands(cube: HyperCube, lo_nm: float, hi_nm: float) -> HyperCube:
    """Keep the bands with ``lo_nm <= wavelength <= hi_nm``."""
    if not lo_nm < hi_nm:
        raise ValueError(f"empty band range [{lo_nm}, {hi_nm}]")
    keep = (cube.wavelengths >= lo_nm) & (cube.wavelengths <= hi_nm)
    if not keep.any():
        raise BandRangeError(
            f"no bands fall in [{lo_nm}, {hi_nm}] nm "
            f"(axis spans {cube.wavelengths[0]:g}-{cube.wavelengths[-1]:g})")
    if keep.all():
        return cube
    return HyperCube(cube.values[..., keep], cube.axis.select(keep))
