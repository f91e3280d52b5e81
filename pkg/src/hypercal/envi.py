"""ENVI header parsing and flat-binary cube IO.

Only the four data types needed for detector and reflectance data are
supported: 1 (uint8), 2 (int16), 4 (float32) and 12 (uint16).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .cube import SpectralCube, Units
from .errors import FormatError, RangeError, SchemaError, TruncationError, UnsupportedFormatError

INTERLEAVES = ("bsq", "bil", "bip")

DATA_TYPES = {
    1: np.dtype("u1"),
    2: np.dtype("i2"),
    4: np.dtype("f4"),
    12: np.dtype("u2"),
}

CODE_MAX = {1: 255.0, 2: 32767.0, 12: 65535.0}

REFLECTANCE_SCALE = 10000.0

REQUIRED_KEYS = ("samples", "lines", "bands", "interleave", "data type", "byte order")

# keys owned by EnviHeader fields; everything else is carried in ``extra``
_TYPED_KEYS = set(REQUIRED_KEYS) | {"header offset", "wavelength", "wavelength units"}

# header keys written by this package for cube-level attributes
CODE_MAX_KEY = "code max"
UNITS_KEY = "units tag"
SCALE_KEY = "reflectance scale factor"
NODATA_KEY = "data ignore value"


@dataclass
class EnviHeader:
    samples: int
    lines: int
    bands: int
    interleave: str = "bsq"
    data_type: int = 4
    byte_order: int = 0
    header_offset: int = 0
    wavelengths: Optional[List[float]] = None
    wavelength_units: Optional[str] = None
    extra: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.interleave = str(self.interleave).lower()
        if self.interleave not in INTERLEAVES:
            raise UnsupportedFormatError(f"unsupported interleave {self.interleave!r}")
        if self.data_type not in DATA_TYPES:
            raise UnsupportedFormatError(f"unsupported ENVI data type {self.data_type}")
        if self.byte_order not in (0, 1):
            raise UnsupportedFormatError(f"unsupported byte order {self.byte_order}")
        for name in ("samples", "lines", "bands"):
            if getattr(self, name) <= 0:
                raise SchemaError(f"{name} must be positive")
        if self.header_offset < 0:
            raise SchemaError("header offset must be non-negative")
        if self.wavelengths is not None and len(self.wavelengths) != self.bands:
            raise SchemaError(f"{len(self.wavelengths)} wavelengths listed for {self.bands} bands")

    @property
    def dtype(self) -> np.dtype:
        return DATA_TYPES[self.data_type].newbyteorder("<" if self.byte_order == 0 else ">")

    @property
    def payload_bytes(self) -> int:
        return self.samples * self.lines * self.bands * self.dtype.itemsize

    def get(self, key, default=None):
        return self.extra.get(key.lower(), default)


def _split_entries(text: str):
    """Yield (key, raw value) pairs, joining brace values spanning lines."""
    lines = text.splitlines()
    i = 1
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line.strip() or line.lstrip().startswith(";"):
            continue
        if "=" not in line:
            raise FormatError(f"header line {i}: expected 'key = value', got {line.strip()!r}")
        key, value = line.split("=", 1)
        value = value.strip()
        if value.startswith("{"):
            while value.count("{") > value.count("}"):
                if i >= len(lines):
                    raise FormatError(f"unterminated brace list for key {key.strip()!r}")
                value += "\n" + lines[i]
                i += 1
        yield re.sub(r"\s+", " ", key.strip()).lower(), value


def split_list(value: str) -> List[str]:
    """Split an ENVI brace list ``{a, b,\\n c}`` into stripped items."""
    inner = value.strip()
    if inner.startswith("{") and inner.endswith("}"):
        inner = inner[1:-1]
    return [item.strip() for item in inner.replace("\n", " ").split(",") if item.strip()]


def _int(entries, key):
    try:
        return int(entries[key].strip())
    except ValueError as exc:
        raise SchemaError(f"header key {key!r} is not an integer: {entries[key]!r}") from exc


def parse_header(text: str) -> EnviHeader:
    """Parse the text of an ENVI ``.hdr`` file.

    Keys are case-insensitive and stored lower-case. Unrecognized keys are
    kept verbatim in ``EnviHeader.extra`` so they survive a round trip.
    """
    text = text.lstrip("﻿")
    if not text.startswith("ENVI"):
        raise FormatError("not an ENVI header: missing 'ENVI' magic")
    entries: Dict[str, str] = {}
    for key, value in _split_entries(text):
        entries[key] = value
    missing = [k for k in REQUIRED_KEYS if k not in entries]
    if missing:
        raise SchemaError(f"header missing required keys: {', '.join(missing)}")
    wavelengths = None
    if "wavelength" in entries:
        try:
            wavelengths = [float(v) for v in split_list(entries["wavelength"])]
        except ValueError as exc:
            raise SchemaError("non-numeric wavelength entry") from exc
    return EnviHeader(
        samples=_int(entries, "samples"),
        lines=_int(entries, "lines"),
        bands=_int(entries, "bands"),
        interleave=entries["interleave"].strip().lower(),
        data_type=_int(entries, "data type"),
        byte_order=_int(entries, "byte order"),
        header_offset=_int(entries, "header offset") if "header offset" in entries else 0,
        wavelengths=wavelengths,
        wavelength_units=entries.get("wavelength units"),
        extra={k: v for k, v in entries.items() if k not in _TYPED_KEYS},
    )


def render_header(header: EnviHeader) -> str:
    out = [
        "ENVI",
        f"samples = {header.samples}",
        f"lines = {header.lines}",
        f"bands = {header.bands}",
        f"header offset = {header.header_offset}",
        f"data type = {header.data_type}",
        f"interleave = {header.interleave}",
        f"byte order = {header.byte_order}",
    ]
    for key, value in header.extra.items():
        out.append(f"{key} = {value}")
    if header.wavelength_units is not None:
        out.append(f"wavelength units = {header.wavelength_units}")
    if header.wavelengths is not None:
        out.append("wavelength = {" + ", ".join(repr(float(w)) for w in header.wavelengths) + "}")
    return "\n".join(out) + "\n"


def _to_canonical(flat: np.ndarray, header: EnviHeader) -> np.ndarray:
    L, S, B = header.lines, header.samples, header.bands
    if header.interleave == "bsq":
        bsq = flat.reshape(B, L, S)
    elif header.interleave == "bil":
        bsq = flat.reshape(L, B, S).transpose(1, 0, 2)
    else:
        bsq = flat.reshape(L, S, B).transpose(2, 0, 1)
    bsq = np.ascontiguousarray(bsq, dtype=bsq.dtype.newbyteorder("="))
    return np.moveaxis(bsq, 0, 2)


def _from_canonical(data: np.ndarray, interleave: str) -> np.ndarray:
    if interleave == "bsq":
        arr = np.moveaxis(data, 2, 0)
    elif interleave == "bil":
        arr = np.moveaxis(data, 2, 1)
    else:
        arr = data
    return np.ascontiguousarray(arr)


def read_cube(header: EnviHeader, blob: bytes) -> SpectralCube:
    """Decode a flat binary payload described by ``header``."""
    need = header.header_offset + header.payload_bytes
    if len(blob) < need:
        raise TruncationError(f"payload has {len(blob)} bytes, header requires {need}")
    flat = np.frombuffer(
        blob, dtype=header.dtype, count=header.samples * header.lines * header.bands, offset=header.header_offset
    )
    data = _to_canonical(flat, header)

    extra = dict(header.extra)
    units = Units(extra.pop(UNITS_KEY).strip()) if UNITS_KEY in extra else Units.RAW_COUNTS
    code_max = float(extra.pop(CODE_MAX_KEY)) if CODE_MAX_KEY in extra else CODE_MAX.get(header.data_type, np.inf)
    nodata = float(extra.pop(NODATA_KEY)) if NODATA_KEY in extra else None
    if SCALE_KEY in extra:
        scale = float(extra.pop(SCALE_KEY))
        data = data.astype(np.float32) / np.float32(scale)
        units = Units.REFLECTANCE_FACTOR
        code_max = np.inf
    wavelengths = header.wavelengths if header.wavelengths is not None else np.arange(header.bands, dtype=float)
    if header.wavelength_units is not None:
        extra["wavelength units"] = header.wavelength_units
    return SpectralCube(data, wavelengths, code_max=code_max, units=units, metadata=extra, nodata=nodata)


def _default_data_type(cube: SpectralCube) -> int:
    kind = cube.data.dtype
    if cube.units is Units.REFLECTANCE_FACTOR:
        return 4
    for code, dt in DATA_TYPES.items():
        if dt == kind:
            return code
    return 4


def write_cube(
    cube: SpectralCube,
    interleave: str = "bsq",
    data_type: Optional[int] = None,
    byte_order: int = 0,
    scale: Optional[float] = None,
) -> Tuple[EnviHeader, bytes]:
    """Encode ``cube`` as an ENVI header and binary payload.

    Integer targets never clip: out-of-range values raise ``RangeError``.
    Reflectance cubes written to an integer type are stored as fixed point
    with ``scale`` (default 10000) recorded as ``reflectance scale factor``.
    """
    if data_type is None:
        data_type = _default_data_type(cube)
    if data_type not in DATA_TYPES:
        raise UnsupportedFormatError(f"unsupported ENVI data type {data_type}")
    target = DATA_TYPES[data_type]
    values = cube.data
    extra = {k: str(v) for k, v in cube.metadata.items() if k != "wavelength units" and not k.startswith("_")}
    wl_units = cube.metadata.get("wavelength units", "Nanometers")

    if target.kind in "iu":
        if cube.units is Units.REFLECTANCE_FACTOR:
            scale = REFLECTANCE_SCALE if scale is None else float(scale)
            values = np.rint(np.asarray(values, dtype=np.float64) * scale)
            extra[SCALE_KEY] = repr(scale)
        elif np.issubdtype(values.dtype, np.floating):
            if not np.all(np.isfinite(values)):
                raise RangeError("non-finite values cannot be stored as integers")
            values = np.rint(values)
        info = np.iinfo(target)
        lo, hi = np.min(values), np.max(values)
        if lo < info.min or hi > info.max:
            raise RangeError(f"values span [{lo}, {hi}], outside {target} range [{info.min}, {info.max}]")
    if cube.units is not Units.RAW_COUNTS or UNITS_KEY in extra:
        extra[UNITS_KEY] = cube.units.value
    if np.isfinite(cube.code_max) and cube.code_max != CODE_MAX.get(data_type):
        extra[CODE_MAX_KEY] = repr(cube.code_max)
    if cube.nodata is not None:
        extra[NODATA_KEY] = repr(cube.nodata)

    header = EnviHeader(
        samples=cube.samples,
        lines=cube.lines,
        bands=cube.bands,
        interleave=interleave,
        data_type=data_type,
        byte_order=byte_order,
        wavelengths=[float(w) for w in cube.wavelengths],
        wavelength_units=wl_units,
        extra=extra,
    )
    arr = _from_canonical(np.asarray(values), header.interleave).astype(header.dtype, copy=False)
    return header, arr.tobytes()


def _data_path(hdr_path: Path) -> Path:
    for candidate in (hdr_path.with_suffix(".img"), hdr_path.with_suffix(".raw"), hdr_path.with_suffix(".dat"),
                      hdr_path.with_suffix("")):
        if candidate.exists() and candidate != hdr_path:
            return candidate
    raise FileNotFoundError(f"no binary data file found next to {hdr_path}")


def read_envi(path: Union[str, Path]) -> SpectralCube:
    """Read ``path`` (the ``.hdr``) and its sibling binary file."""
    path = Path(path)
    if path.suffix.lower() != ".hdr":
        path = path.with_suffix(".hdr")
    header = parse_header(path.read_text(encoding="utf-8"))
    return read_cube(header, _data_path(path).read_bytes())


def write_envi(path: Union[str, Path], cube: SpectralCube, **kwargs) -> Path:
    """Write ``cube`` as ``<stem>.hdr`` plus ``<stem>.img``; returns the header path."""
    path = Path(path)
    hdr = path.with_suffix(".hdr")
    hdr.parent.mkdir(parents=True, exist_ok=True)
    header, blob = write_cube(cube, **kwargs)
    hdr.with_suffix(".img").write_bytes(blob)
    hdr.write_text(render_header(header), encoding="utf-8")
    return hdr
