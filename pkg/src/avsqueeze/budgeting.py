"""Context-budget arithmetic for audio-visual token streams.

Counts are integer and floor-based throughout: a stream of duration_s seconds
at audio_rate_hz carries floor(duration_s * rate) raw tokens, compression
keeps one token per complete group of stride_R, and the query insertion
overhead is floor(raw/R)/raw, which equals (raw + floor(raw/R))/raw - 1
exactly but avoids the float cancellation of the latter form. Totals per
construction policy differ only in whether audio is present; the policies
reorder tokens and never add or remove them, so the interleaved and
non-interleaved totals coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ContractError


@dataclass(frozen=True)
class BudgetReport:
    duration_s: float
    audio_rate_hz: float
    raw_audio_tokens: int
    stride_R: int
    compressed_audio_tokens: int
    query_overhead_ratio: float
    frames: int
    tokens_per_frame: int
    visual_tokens: int
    total_visual_only: int
    total_non_interleaved: int
    total_interleaved: int


def budget(
    duration_s: float,
    audio_rate_hz: float,
    stride_R: int,
    frames: int = 0,
    tokens_per_frame: int = 0,
    *,
    trailing_policy: str = "drop_partial",
) -> BudgetReport:
    """Token counts for one clip; trailing_policy mirrors the compressor's
    partial-group handling (it affects the compressed count only)."""
    if stride_R < 1:
        raise ContractError(f"stride_R must be >= 1, got {stride_R}")
    if duration_s < 0 or audio_rate_hz < 0 or frames < 0 or tokens_per_frame < 0:
        raise ContractError("budget inputs must be nonnegative")
    if trailing_policy not in ("drop_partial", "emit_partial"):
        raise ContractError(f"unknown trailing_policy {trailing_policy!r}")
    raw = int(math.floor(duration_s * audio_rate_hz))
    compressed = raw // stride_R
    if trailing_policy == "emit_partial" and raw % stride_R:
        compressed += 1
    overhead = (raw // stride_R) / raw if raw else 0.0
    visual = frames * tokens_per_frame
    return BudgetReport(
        duration_s=float(duration_s),
        audio_rate_hz=float(audio_rate_hz),
        raw_audio_tokens=raw,
        stride_R=stride_R,
        compressed_audio_tokens=compressed,
        query_overhead_ratio=overhead,
        frames=frames,
        tokens_per_frame=tokens_per_frame,
        visual_tokens=visual,
        total_visual_only=visual,
        total_non_interleaved=visual + compressed,
        total_interleaved=visual + compressed,
    )


def kv_lines(report: BudgetReport) -> list[str]:
    """Machine-readable record, one key=value per line, fixed key order."""
    return [
        f"duration_s={report.duration_s!r}",
        f"audio_rate_hz={report.audio_rate_hz!r}",
        f"stride_R={report.stride_R}",
        f"raw_audio_tokens={report.raw_audio_tokens}",
        f"compressed_audio_tokens={report.compressed_audio_tokens}",
        f"overhead_ratio={report.query_overhead_ratio!r}",
        f"frames={report.frames}",
        f"tokens_per_frame={report.tokens_per_frame}",
        f"visual_tokens={report.visual_tokens}",
        f"total_visual_only={report.total_visual_only}",
        f"total_non_interleaved={report.total_non_interleaved}",
        f"total_interleaved={report.total_interleaved}",
    ]


def human_table(report: BudgetReport) -> str:
    rows = [
        ("duration (s)", f"{report.duration_s:g}"),
        ("audio rate (Hz)", f"{report.audio_rate_hz:g}"),
        ("stride R", str(report.stride_R)),
        ("raw audio tokens", str(report.raw_audio_tokens)),
        ("compressed audio tokens", str(report.compressed_audio_tokens)),
        ("query overhead ratio", f"{report.query_overhead_ratio:.6g}"),
        ("frames", str(report.frames)),
        ("tokens per frame", str(report.tokens_per_frame)),
        ("visual tokens", str(report.visual_tokens)),
        ("total, visual only", str(report.total_visual_only)),
        ("total, non-interleaved", str(report.total_non_interleaved)),
        ("total, interleaved", str(report.total_interleaved)),
    ]
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)
