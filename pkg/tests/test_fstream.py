"""Feature-stream container and the FSTREAM/FSTREAMB file formats."""

from __future__ import annotations

import numpy as np
import pytest

from avsqueeze.errors import ContractError, ParseError
from avsqueeze.fstream import FeatureStream, read_stream, write_stream
from avsqueeze.rng import Rng

_AWKWARD = np.array(
    [
        [0.0, -0.0, 1.0],
        [np.pi, 1e300, 1e-300],
        [-1.5e-8, 5e-324, -1e308],
        [1 / 3, 2 / 3, 123456789.123456789],
    ]
)


def _stream(values=None, rate=25.0, origin=0.25):
    if values is None:
        values = Rng(0).normals(7, 3)
    return FeatureStream(values, rate, origin)


# ---------------------------------------------------------------------------
# container semantics


def test_stream_properties_and_intervals():
    s = _stream(rate=4.0, origin=10.0)
    assert s.rows == 7 and s.dim == 3
    assert s.duration_s == 7 / 4.0
    assert s.interval(0) == (10.0, 10.25)
    assert s.interval(3) == (10.75, 11.0)


def test_stream_values_read_only_and_f64():
    s = _stream(values=[[1, 2], [3, 4]])
    assert s.values.dtype == np.float64
    with pytest.raises(ValueError):
        s.values[0, 0] = 5.0


def test_stream_contract_errors():
    with pytest.raises(ContractError):
        FeatureStream(np.zeros(5), 25.0, 0.0)
    with pytest.raises(ContractError):
        FeatureStream(np.zeros((2, 2)), 0.0, 0.0)
    with pytest.raises(ContractError):
        FeatureStream(np.zeros((2, 2)), -1.0, 0.0)


def test_zero_row_stream_allowed():
    s = FeatureStream(np.zeros((0, 4)), 25.0, 0.0)
    assert s.rows == 0 and s.dim == 4 and s.duration_s == 0.0


# ---------------------------------------------------------------------------
# round trips


@pytest.mark.parametrize("binary", [False, True])
def test_round_trip_is_bit_exact(tmp_path, binary):
    s = FeatureStream(_AWKWARD, rate_hz=1 / 3, origin_s=-2.75)
    path = tmp_path / "s.fstream"
    write_stream(s, path, binary=binary)
    back = read_stream(path)
    assert back.values.tobytes() == s.values.tobytes()
    assert back.rate_hz == s.rate_hz
    assert back.origin_s == s.origin_s
    assert back.rows == s.rows and back.dim == s.dim


@pytest.mark.parametrize("binary", [False, True])
def test_round_trip_random(tmp_path, binary):
    s = _stream(Rng(9).normals(40, 6) * 1e6)
    path = tmp_path / "r.fstream"
    write_stream(s, path, binary=binary)
    assert read_stream(path).values.tobytes() == s.values.tobytes()


def test_text_and_binary_agree(tmp_path):
    s = _stream()
    write_stream(s, tmp_path / "a", binary=False)
    write_stream(s, tmp_path / "b", binary=True)
    a, b = read_stream(tmp_path / "a"), read_stream(tmp_path / "b")
    assert a.values.tobytes() == b.values.tobytes()
    assert (tmp_path / "a").read_bytes().startswith(b"FSTREAM v1 ")
    assert (tmp_path / "b").read_bytes().startswith(b"FSTREAMB v1 ")


def test_write_then_rewrite_identical_bytes(tmp_path):
    s = _stream()
    write_stream(s, tmp_path / "x")
    first = (tmp_path / "x").read_bytes()
    write_stream(s, tmp_path / "x")
    assert (tmp_path / "x").read_bytes() == first


# ---------------------------------------------------------------------------
# parse failures carry line numbers


def _write(tmp_path, text):
    p = tmp_path / "bad.fstream"
    p.write_bytes(text if isinstance(text, bytes) else text.encode())
    return p


def test_bad_magic(tmp_path):
    p = _write(tmp_path, "NOPE v1 rows=1 dim=1 rate_hz=1.0 origin_s=0.0\n0.0\n")
    with pytest.raises(ParseError) as e:
        read_stream(p)
    assert e.value.line == 1


def test_bad_header_field(tmp_path):
    p = _write(tmp_path, "FSTREAM v1 rows=1 dim=1 rate=1.0 origin_s=0.0\n0.0\n")
    with pytest.raises(ParseError) as e:
        read_stream(p)
    assert e.value.line == 1 and "rate_hz=" in str(e.value)


def test_bad_header_number(tmp_path):
    p = _write(tmp_path, "FSTREAM v1 rows=x dim=1 rate_hz=1.0 origin_s=0.0\n")
    with pytest.raises(ParseError) as e:
        read_stream(p)
    assert e.value.line == 1


def test_nonpositive_rate_rejected(tmp_path):
    p = _write(tmp_path, "FSTREAM v1 rows=0 dim=1 rate_hz=0.0 origin_s=0.0\n")
    with pytest.raises(ParseError):
        read_stream(p)


def test_wrong_value_count_names_line(tmp_path):
    p = _write(
        tmp_path,
        "FSTREAM v1 rows=2 dim=2 rate_hz=1.0 origin_s=0.0\n1.0 2.0\n3.0\n",
    )
    with pytest.raises(ParseError) as e:
        read_stream(p)
    assert e.value.line == 3
    assert str(e.value).startswith("line 3:")


def test_unparseable_value_names_line(tmp_path):
    p = _write(
        tmp_path,
        "FSTREAM v1 rows=2 dim=1 rate_hz=1.0 origin_s=0.0\n1.0\nbanana\n",
    )
    with pytest.raises(ParseError) as e:
        read_stream(p)
    assert e.value.line == 3


def test_non_finite_value_rejected(tmp_path):
    p = _write(tmp_path, "FSTREAM v1 rows=1 dim=1 rate_hz=1.0 origin_s=0.0\nnan\n")
    with pytest.raises(ParseError) as e:
        read_stream(p)
    assert e.value.line == 2


def test_row_shortfall(tmp_path):
    p = _write(tmp_path, "FSTREAM v1 rows=3 dim=1 rate_hz=1.0 origin_s=0.0\n1.0\n")
    with pytest.raises(ParseError):
        read_stream(p)


def test_binary_payload_size_mismatch(tmp_path):
    p = _write(
        tmp_path,
        b"FSTREAMB v1 rows=2 dim=2 rate_hz=1.0 origin_s=0.0\n" + b"\x00" * 24,
    )
    with pytest.raises(ParseError) as e:
        read_stream(p)
    assert e.value.line == 2


def test_empty_file(tmp_path):
    p = _write(tmp_path, "")
    with pytest.raises(ParseError):
        read_stream(p)


def test_non_ascii_text(tmp_path):
    p = _write(tmp_path, b"FSTREAM v1 rows=1 dim=1 rate_hz=1.0 origin_s=0.0\n\xff\xfe\n")
    with pytest.raises(ParseError):
        read_stream(p)
