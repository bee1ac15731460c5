"""Rate-stamped feature matrices and their on-disk formats.

A FeatureStream is an [N, d] float64 matrix plus a sample rate and an origin
time; token j covers the half-open interval
[origin_s + j/rate_hz, origin_s + (j+1)/rate_hz).

Two file encodings share one header vocabulary:

    FSTREAM v1 rows=<N> dim=<d> rate_hz=<r> origin_s=<t>
    <d space-separated floats>          (N data lines)

    FSTREAMB v1 rows=<N> dim=<d> rate_hz=<r> origin_s=<t>
    <N*d raw float64 little-endian>     (binary twin, for large streams)

Text floats are written with repr so reading them back is bit-exact.
`read_stream` sniffs the magic word and dispatches; all parse failures raise
ParseError carrying a 1-based line number.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError

_TEXT_MAGIC = "FSTREAM"
_BINARY_MAGIC = "FSTREAMB"
_VERSION = "v1"


@dataclass(frozen=True)
class FeatureStream:
    """[N, d] float64 values at rate_hz tokens/second starting at origin_s."""

    values: np.ndarray
    rate_hz: float
    origin_s: float = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2:
            raise ContractError(f"stream values must be [N, d], got shape {arr.shape}")
        if self.rate_hz <= 0:
            raise ContractError(f"rate_hz must be positive, got {self.rate_hz}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "rate_hz", float(self.rate_hz))
        object.__setattr__(self, "origin_s", float(self.origin_s))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def duration_s(self) -> float:
        return self.rows / self.rate_hz

    def interval(self, j: int) -> tuple[float, float]:
        """Half-open time interval covered by token j."""
        return (
            self.origin_s + j / self.rate_hz,
            self.origin_s + (j + 1) / self.rate_hz,
        )


def _header_line(magic: str, stream: FeatureStream) -> str:
    return (
        f"{magic} {_VERSION} rows={stream.rows} dim={stream.dim} "
        f"rate_hz={stream.rate_hz!r} origin_s={stream.origin_s!r}"
    )


def write_stream(stream: FeatureStream, path: str | Path, *, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write((_header_line(_BINARY_MAGIC, stream) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(stream.values, dtype="<f8").tobytes())
        return
    buf = io.StringIO()
    buf.write(_header_line(_TEXT_MAGIC, stream) + "\n")
    for row in stream.values:
        buf.write(" ".join(repr(float(v)) for v in row) + "\n")
    path.write_text(buf.getvalue(), encoding="ascii")


def _parse_header(line: str, magic: str) -> tuple[int, int, float, float]:
    parts = line.split()
    if len(parts) != 6 or parts[0] != magic or parts[1] != _VERSION:
        raise ParseError(
            f"bad header; expected '{magic} {_VERSION} rows=N dim=D rate_hz=R "
            f"origin_s=T', got {line!r}",
            line=1,
        )
    keys = ("rows", "dim", "rate_hz", "origin_s")
    values = []
    for key, part in zip(keys, parts[2:]):
        prefix = key + "="
        if not part.startswith(prefix):
            raise ParseError(f"expected field {prefix}..., got {part!r}", line=1)
        text = part[len(prefix):]
        try:
            values.append(int(text) if key in ("rows", "dim") else float(text))
        except ValueError:
            raise ParseError(f"bad {key} value {text!r}", line=1) from None
    rows, dim, rate_hz, origin_s = values
    if rows < 0 or dim < 1:
        raise ParseError(f"bad dimensions rows={rows} dim={dim}", line=1)
    if not (np.isfinite(rate_hz) and rate_hz > 0):
        raise ParseError(f"rate_hz must be positive and finite, got {rate_hz}", line=1)
    return int(rows), int(dim), float(rate_hz), float(origin_s)


def _read_text(raw: bytes, path: Path) -> FeatureStream:
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path.name} is not ASCII text: {exc}", line=1) from None
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    rows, dim, rate_hz, origin_s = _parse_header(lines[0], _TEXT_MAGIC)
    if len(lines) - 1 < rows:
        raise ParseError(
            f"header promises {rows} rows but file has {len(lines) - 1}",
            line=len(lines) + 1,
        )
    values = np.empty((rows, dim))
    for i in range(rows):
        lineno = i + 2
        fields = lines[i + 1].split()
        if len(fields) != dim:
            raise ParseError(
                f"expected {dim} values, found {len(fields)}", line=lineno
            )
        try:
            row = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if not all(np.isfinite(v) for v in row):
            raise ParseError("non-finite value in row", line=lineno)
        values[i] = row
    return FeatureStream(values=values, rate_hz=rate_hz, origin_s=origin_s)


def _read_binary(raw: bytes, path: Path) -> FeatureStream:
    newline = raw.find(b"\n")
    if newline < 0:
        raise ParseError("missing header line", line=1)
    header = raw[:newline].decode("ascii", errors="replace")
    rows, dim, rate_hz, origin_s = _parse_header(header, _BINARY_MAGIC)
    payload = raw[newline + 1:]
    expected = rows * dim * 8
    if len(payload) != expected:
        raise ParseError(
            f"payload holds {len(payload)} bytes, header implies {expected}",
            line=2,
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, dim)
    if not np.all(np.isfinite(values)):
        raise ParseError("non-finite value in payload", line=2)
    return FeatureStream(values=values, rate_hz=rate_hz, origin_s=origin_s)


def read_stream(path: str | Path) -> FeatureStream:
    """Load either encoding, dispatching on the magic word."""
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(_BINARY_MAGIC.encode("ascii") + b" "):
        return _read_binary(raw, path)
    if raw.startswith(_TEXT_MAGIC.encode("ascii") + b" "):
        return _read_text(raw, path)
    raise ParseError(
        f"{path.name} does not start with {_TEXT_MAGIC} or {_BINARY_MAGIC}", line=1
    )
