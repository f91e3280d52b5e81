import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hypercal.cube import SpectralCube, Units
from hypercal.envi import (
    DATA_TYPES,
    EnviHeader,
    parse_header,
    read_cube,
    read_envi,
    render_header,
    write_cube,
    write_envi,
)
from hypercal.errors import FormatError, RangeError, SchemaError, TruncationError, UnsupportedFormatError

BASIC = """ENVI
samples = 3
lines = 2
bands = 1
interleave = bsq
data type = 12
byte order = 0
"""


def test_parse_basic_header():
    h = parse_header(BASIC)
    assert (h.samples, h.lines, h.bands, h.interleave, h.data_type, h.byte_order) == (3, 2, 1, "bsq", 12, 0)


def test_parse_multiline_wavelengths_and_case():
    text = "ENVI\nSamples = 1\nLINES = 1\nbands = 3\ninterleave = BIP\ndata type = 4\nbyte order = 0\n" \
           "wavelength = {400.0,\n 500.0, 600.0}\n"
    h = parse_header(text)
    assert h.wavelengths == [400.0, 500.0, 600.0]
    assert h.interleave == "bip"


def test_wavelength_count_mismatch():
    text = BASIC.replace("bands = 1", "bands = 2") + "wavelength = {1, 2, 3}\n"
    with pytest.raises(SchemaError):
        parse_header(text)


def test_missing_magic_and_keys():
    with pytest.raises(FormatError):
        parse_header(BASIC.replace("ENVI", "NOPE"))
    with pytest.raises(SchemaError):
        parse_header(BASIC.replace("lines = 2\n", ""))


@pytest.mark.parametrize("line,exc", [("interleave = bsx", UnsupportedFormatError),
                                      ("data type = 5", UnsupportedFormatError)])
def test_unsupported_codes(line, exc):
    key = line.split("=")[0].strip()
    text = "\n".join(line if l.startswith(key) else l for l in BASIC.splitlines())
    with pytest.raises(exc):
        parse_header(text)


def test_unknown_keys_survive_round_trip():
    text = BASIC + "sensor type = Hyperspec VNIR\ndescription = {a, b}\n"
    h = parse_header(text)
    again = parse_header(render_header(h))
    assert again.extra["sensor type"] == "Hyperspec VNIR"
    assert again.extra["description"] == "{a, b}"


def _cube222(dtype):
    data = np.arange(8, dtype=dtype).reshape(2, 2, 2)  # (line, sample, band)
    return SpectralCube(data, [500.0, 600.0])


def test_hand_computed_layouts():
    # value = 4*line + 2*sample + band
    c = _cube222(np.uint8)
    expected = {
        "bsq": [0, 2, 4, 6, 1, 3, 5, 7],   # band-major, then line, then sample
        "bil": [0, 2, 1, 3, 4, 6, 5, 7],   # line, band, sample
        "bip": [0, 1, 2, 3, 4, 5, 6, 7],   # line, sample, band
    }
    for il, order in expected.items():
        _, blob = write_cube(c, interleave=il, data_type=1)
        assert list(blob) == order
        hdr = EnviHeader(2, 2, 2, il, 1, 0)
        assert np.array_equal(read_cube(hdr, bytes(order)).data, c.data)


def test_big_endian_swap():
    hdr = EnviHeader(samples=4, lines=1, bands=1, data_type=12, byte_order=1)
    blob = bytes([0x01, 0x02, 0x00, 0xFF, 0xAB, 0xCD, 0x00, 0x01])
    c = read_cube(hdr, blob)
    assert c.data[0, :, 0].tolist() == [0x0102, 0x00FF, 0xABCD, 0x0001]


def test_zero_blob_and_truncation():
    hdr = EnviHeader(samples=2, lines=2, bands=2, data_type=2)
    assert not read_cube(hdr, bytes(16)).data.any()
    with pytest.raises(TruncationError):
        read_cube(hdr, bytes(15))


def test_header_offset():
    hdr = EnviHeader(samples=1, lines=1, bands=2, data_type=1, header_offset=3)
    assert read_cube(hdr, bytes([9, 9, 9, 5, 6])).data.ravel().tolist() == [5, 6]


def test_code_max_from_type_and_override():
    assert read_cube(EnviHeader(1, 1, 1, data_type=2), bytes(2)).code_max == 32767
    c = SpectralCube(np.zeros((1, 1, 1), np.uint16), [500.0], code_max=4095)
    h, blob = write_cube(c)
    assert read_cube(parse_header(render_header(h)), blob).code_max == 4095


def test_reflectance_fixed_point():
    c = SpectralCube(np.full((1, 1, 1), 1.03), [500.0], units=Units.REFLECTANCE_FACTOR)
    h, blob = write_cube(c, data_type=12)
    assert np.frombuffer(blob, "<u2")[0] == 10300
    assert h.extra["reflectance scale factor"] == "10000.0"
    back = read_cube(parse_header(render_header(h)), blob)
    assert back.units is Units.REFLECTANCE_FACTOR
    assert back.data[0, 0, 0] == pytest.approx(1.03, abs=1e-6)


def test_out_of_range_raises():
    c = SpectralCube(np.full((1, 1, 1), 70000.0), [500.0])
    with pytest.raises(RangeError):
        write_cube(c, data_type=12)


def test_canonical_layout_is_band_sequential():
    c = read_cube(EnviHeader(3, 2, 4, "bip", 4), bytes(4 * 24))
    assert np.moveaxis(c.data, 2, 0).flags["C_CONTIGUOUS"]
    assert not c.data.flags.writeable


def _typed(dtype):
    info = np.finfo(dtype) if np.dtype(dtype).kind == "f" else np.iinfo(dtype)
    if np.dtype(dtype).kind == "f":
        elems = st.floats(-1e6, 1e6, allow_nan=False, width=32)
    else:
        elems = st.integers(int(info.min), int(info.max))
    return arrays(dtype, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3)), elements=elems)


@pytest.mark.parametrize("code", sorted(DATA_TYPES))
@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_round_trip_property(code, data):
    arr = data.draw(_typed(DATA_TYPES[code]))
    c = SpectralCube(arr, np.arange(arr.shape[2]) + 400.0)
    decoded = []
    for il in ("bsq", "bil", "bip"):
        for bo in (0, 1):
            h, blob = write_cube(c, interleave=il, data_type=code, byte_order=bo)
            back = read_cube(parse_header(render_header(h)), blob)
            assert back.data.dtype == np.dtype(DATA_TYPES[code]).newbyteorder("=")
            assert back.data.tobytes() == np.ascontiguousarray(arr).tobytes()
            decoded.append(back)
    assert all(d.equals(decoded[0]) for d in decoded)


def test_file_round_trip(tmp_path):
    c = SpectralCube(np.arange(24, dtype=np.float32).reshape(2, 3, 4), [400, 500, 600, 700],
                     metadata={"acquisition": "test"})
    hdr = write_envi(tmp_path / "cube", c, interleave="bil", byte_order=1)
    assert hdr.suffix == ".hdr" and (tmp_path / "cube.img").exists()
    back = read_envi(hdr)
    assert back.equals(c)
    assert back.metadata["acquisition"] == "test"
