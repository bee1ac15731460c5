"""Ordered multimodal token sequences under three construction policies.

Inputs are timestamped visual frame blocks (P tokens per frame) and an audio
token stream (one token per 1/rate_hz seconds). The three builders produce the
same multiset of tokens in different orders:

    visual_only      frame blocks in frame order, audio dropped from the call
    non_interleaved  all visual tokens, then all audio tokens
    interleaved      each frame's tokens followed by the audio tokens whose
                     interval starts inside that frame's time interval

Frame i owns [t_i, t_{i+1}); the last frame's interval runs to the end of the
audio stream (or extrapolates the previous frame spacing when there is no
audio; 1 s for a single frame). Boundaries are half-open, so an audio token
starting exactly at t_{i+1} belongs to frame i+1, and audio before the first
frame attaches to frame 0 rather than being dropped.

Sequence files: a text file of `modality source_index t_start t_end` lines
under a `SEQ v1` header, with vectors in a sibling binary blob (same stem,
`.vec` suffix) so the text side stays human-diffable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DimensionError, ParseError
from .fstream import FeatureStream

MODALITIES = ("visual", "audio")

_SEQ_MAGIC = "SEQ"
_BLOB_MAGIC = "SEQB"
_VERSION = "v1"


@dataclass(frozen=True)
class VisualFrameBlock:
    """P tokens captured at one video frame."""

    frame_index: int
    timestamp_s: float
    tokens: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.tokens, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ContractError(
                f"frame tokens must be [P, d] with P >= 1, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "tokens", arr)


@dataclass(frozen=True)
class AudioTokenStream:
    """Audio tokens at a fixed rate; token j covers
    [origin_s + j/rate_hz, origin_s + (j+1)/rate_hz)."""

    tokens: np.ndarray
    rate_hz: float
    origin_s: float = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.tokens, dtype=np.float64))
        if arr.ndim != 2:
            raise ContractError(f"audio tokens must be [M, d], got shape {arr.shape}")
        if self.rate_hz <= 0:
            raise ContractError(f"rate_hz must be positive, got {self.rate_hz}")
        arr.setflags(write=False)
        object.__setattr__(self, "tokens", arr)

    @classmethod
    def from_stream(cls, stream: FeatureStream) -> "AudioTokenStream":
        return cls(
            tokens=stream.values, rate_hz=stream.rate_hz, origin_s=stream.origin_s
        )

    @property
    def count(self) -> int:
        return self.tokens.shape[0]

    def start(self, j: int) -> float:
        return self.origin_s + j / self.rate_hz

    @property
    def end_s(self) -> float:
        return self.origin_s + self.count / self.rate_hz


@dataclass(frozen=True)
class SequenceEntry:
    modality: str
    source_index: int
    t_start: float
    t_end: float
    vector: np.ndarray


@dataclass(frozen=True)
class TokenSequence:
    entries: tuple[SequenceEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def filter(self, modality: str) -> list[SequenceEntry]:
        return [e for e in self.entries if e.modality == modality]

    def vectors(self) -> np.ndarray:
        return np.stack([e.vector for e in self.entries])


# ---------------------------------------------------------------------------
# shared plumbing


def _check_frames(frames: list[VisualFrameBlock]) -> int:
    if not frames:
        raise ContractError("need at least one visual frame")
    width = frames[0].tokens.shape
    for prev, cur in zip(frames, frames[1:]):
        if cur.timestamp_s <= prev.timestamp_s:
            raise ContractError(
                f"frame timestamps must strictly increase; "
                f"{cur.timestamp_s} follows {prev.timestamp_s}"
            )
        if cur.tokens.shape != width:
            raise ContractError(
                f"tokens-per-frame must be constant; got {cur.tokens.shape} "
                f"after {width}"
            )
    return width[1]


def _check_dims(frames: list[VisualFrameBlock], audio: AudioTokenStream | None) -> None:
    d = _check_frames(frames)
    if audio is not None and audio.count and audio.tokens.shape[1] != d:
        raise DimensionError(
            f"audio width {audio.tokens.shape[1]} does not match "
            f"visual width {d}"
        )


def frame_intervals(
    frames: list[VisualFrameBlock], audio: AudioTokenStream | None
) -> list[tuple[float, float]]:
    """Half-open [t_i, t_{i+1}) ownership intervals, one per frame.

    The last interval ends at the audio stream end, extended to at least one
    extrapolated frame spacing (1 s for a single frame) so it is never empty.
    """
    times = [f.timestamp_s for f in frames]
    spacing = times[-1] - times[-2] if len(times) >= 2 else 1.0
    last_end = times[-1] + spacing
    if audio is not None and audio.count:
        last_end = max(last_end, audio.end_s)
    ends = times[1:] + [last_end]
    return list(zip(times, ends))


def _visual_entries(
    frames: list[VisualFrameBlock], intervals: list[tuple[float, float]]
) -> list[SequenceEntry]:
    entries = []
    source = 0
    for frame, (t0, t1) in zip(frames, intervals):
        for token in frame.tokens:
            entries.append(SequenceEntry("visual", source, t0, t1, token))
            source += 1
    return entries


def _audio_entries(audio: AudioTokenStream | None) -> list[SequenceEntry]:
    if audio is None:
        return []
    entries = []
    for j in range(audio.count):
        entries.append(
            SequenceEntry(
                "audio",
                j,
                audio.start(j),
                audio.start(j + 1),
                audio.tokens[j],
            )
        )
    return entries


# ---------------------------------------------------------------------------
# the three policies


def build_visual_only(frames: list[VisualFrameBlock]) -> TokenSequence:
    """Frame blocks concatenated in frame order; no audio entries."""
    _check_frames(frames)
    intervals = frame_intervals(frames, None)
    return TokenSequence(tuple(_visual_entries(frames, intervals)))


def build_non_interleaved(
    frames: list[VisualFrameBlock], audio: AudioTokenStream | None
) -> TokenSequence:
    """All visual tokens (frame order), then all audio tokens (time order)."""
    _check_dims(frames, audio)
    intervals = frame_intervals(frames, audio)
    return TokenSequence(
        tuple(_visual_entries(frames, intervals) + _audio_entries(audio))
    )


def build_interleaved(
    frames: list[VisualFrameBlock], audio: AudioTokenStream | None
) -> TokenSequence:
    """Each frame's tokens, then the audio tokens starting in its interval.

    Assignment is by interval start against half-open frame intervals; audio
    starting before the first frame attaches to frame 0.
    """
    _check_dims(frames, audio)
    intervals = frame_intervals(frames, audio)
    visual = _visual_entries(frames, intervals)
    audio_entries = _audio_entries(audio)
    boundaries = np.asarray([f.timestamp_s for f in frames[1:]])
    per_frame: list[list[SequenceEntry]] = [[] for _ in frames]
    for entry in audio_entries:
        frame = int(np.searchsorted(boundaries, entry.t_start, side="right"))
        per_frame[frame].append(entry)
    out: list[SequenceEntry] = []
    tokens_per_frame = frames[0].tokens.shape[0]
    for i in range(len(frames)):
        out.extend(visual[i * tokens_per_frame : (i + 1) * tokens_per_frame])
        out.extend(per_frame[i])
    return TokenSequence(tuple(out))


BUILDERS = {
    "visual": lambda frames, audio: build_visual_only(frames),
    "concat": build_non_interleaved,
    "interleave": build_interleaved,
}


# ---------------------------------------------------------------------------
# file format


def write_sequence(seq: TokenSequence, path: str | Path) -> None:
    path = Path(path)
    if len(seq) == 0:
        raise ContractError("refusing to write an empty sequence")
    dim = seq.entries[0].vector.shape[0]
    lines = [f"{_SEQ_MAGIC} {_VERSION} entries={len(seq)} dim={dim}"]
    for e in seq.entries:
        lines.append(f"{e.modality} {e.source_index} {e.t_start!r} {e.t_end!r}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    blob = path.with_suffix(path.suffix + ".vec")
    header = f"{_BLOB_MAGIC} {_VERSION} rows={len(seq)} dim={dim}\n"
    with open(blob, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(seq.vectors(), dtype="<f8").tobytes())


def read_sequence(path: str | Path) -> TokenSequence:
    path = Path(path)
    lines = path.read_text(encoding="ascii").splitlines()
    if not lines:
        raise ParseError("empty sequence file", line=1)
    head = lines[0].split()
    if (
        len(head) != 4
        or head[0] != _SEQ_MAGIC
        or head[1] != _VERSION
        or not head[2].startswith("entries=")
        or not head[3].startswith("dim=")
    ):
        raise ParseError(f"bad sequence header {lines[0]!r}", line=1)
    try:
        count = int(head[2].split("=", 1)[1])
        dim = int(head[3].split("=", 1)[1])
    except ValueError:
        raise ParseError(f"bad sequence header {lines[0]!r}", line=1) from None
    if len(lines) - 1 < count:
        raise ParseError(
            f"header promises {count} entries, file has {len(lines) - 1}",
            line=len(lines) + 1,
        )
    blob = path.with_suffix(path.suffix + ".vec")
    raw = blob.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ParseError(f"{blob.name}: missing blob header", line=1)
    expect_header = f"{_BLOB_MAGIC} {_VERSION} rows={count} dim={dim}"
    if raw[:newline].decode("ascii", errors="replace") != expect_header:
        raise ParseError(
            f"{blob.name}: blob header does not match sequence file", line=1
        )
    payload = raw[newline + 1 :]
    if len(payload) != count * dim * 8:
        raise ParseError(
            f"{blob.name}: payload holds {len(payload)} bytes, "
            f"expected {count * dim * 8}",
            line=2,
        )
    vectors = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    vectors = vectors.reshape(count, dim)
    entries = []
    for i in range(count):
        lineno = i + 2
        fields = lines[i + 1].split()
        if len(fields) != 4:
            raise ParseError(
                f"expected 'modality source_index t_start t_end', "
                f"got {lines[i + 1]!r}",
                line=lineno,
            )
        modality = fields[0]
        if modality not in MODALITIES:
            raise ParseError(f"unknown modality {modality!r}", line=lineno)
        try:
            source = int(fields[1])
            t_start = float(fields[2])
            t_end = float(fields[3])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        entries.append(SequenceEntry(modality, source, t_start, t_end, vectors[i]))
    return TokenSequence(tuple(entries))
