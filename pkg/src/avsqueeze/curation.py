"""Hard-split curation from single-frame probe predictions.

A benchmark manifest (JSON Lines, one item per line) supplies questions, gold
answers, and optionally the answer a vision-only probe gave when shown a
single frame. Items the probe already answers correctly are filtered out; the
remainder is the audio-sensitive hard split. Items with no probe answer count
as incorrect (and are tallied separately), which errs toward keeping them.

Three answer matchers are available and the chosen one is recorded in the
split header, since equally defensible scoring rules disagree:

    exact             byte-for-byte string equality
    normalized-exact  lowercase, trim, collapse internal whitespace
    choice-letter     compare a leading option letter like "(B)", "b.", "B";
                      falls back to normalized-exact when either side has none

Split files carry provenance headers and item ids only, never copied content:

    #source=<manifest id>
    #matcher=<name>
    #total=<n> #correct=<n> #missing=<n> #retained=<n>
    <item_id per line>
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError, ManifestError, ParseError

MATCHERS = ("exact", "normalized-exact", "choice-letter")

_REQUIRED_FIELDS = ("item_id", "question", "gold_answer")

_CHOICE_RE = re.compile(r"^\s*[\(\[]?([A-Za-z])[\)\]\.:]?(?:\s|$)")


@dataclass(frozen=True)
class QAItem:
    item_id: str
    question: str
    gold_answer: str
    probe_answer: str | None = None
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SplitStats:
    total: int
    probe_correct: int
    missing: int
    retained: int


@dataclass(frozen=True)
class HardSplit:
    source_manifest_id: str
    retained_ids: tuple[str, ...]
    stats: SplitStats


# ---------------------------------------------------------------------------
# answer matching


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def _choice_letter(text: str) -> str | None:
    m = _CHOICE_RE.match(text)
    return m.group(1).lower() if m else None


def answers_match(gold: str, probe: str, matcher: str) -> bool:
    if matcher == "exact":
        return gold == probe
    if matcher == "normalized-exact":
        return _normalize(gold) == _normalize(probe)
    if matcher == "choice-letter":
        g, p = _choice_letter(gold), _choice_letter(probe)
        if g is None or p is None:
            return _normalize(gold) == _normalize(probe)
        return g == p
    raise ContractError(f"unknown matcher {matcher!r}; choose from {MATCHERS}")


def score_probe(items: list[QAItem], matcher: str) -> dict[str, bool]:
    """Per-item correctness of the probe; missing answers score incorrect."""
    if matcher not in MATCHERS:
        raise ContractError(f"unknown matcher {matcher!r}; choose from {MATCHERS}")
    seen: set[str] = set()
    out: dict[str, bool] = {}
    for item in items:
        if item.item_id in seen:
            raise ManifestError(f"duplicate item_id {item.item_id!r}")
        seen.add(item.item_id)
        if item.probe_answer is None:
            out[item.item_id] = False
        else:
            out[item.item_id] = answers_match(item.gold_answer, item.probe_answer, matcher)
    return out


def build_hard_split(
    items: list[QAItem],
    correctness: dict[str, bool],
    source_manifest_id: str = "",
) -> HardSplit:
    """Keep exactly the probe-incorrect items, in manifest order."""
    uncovered = [i.item_id for i in items if i.item_id not in correctness]
    if uncovered:
        raise ContractError(
            f"correctness map does not cover {len(uncovered)} items, "
            f"first {uncovered[0]!r}"
        )
    retained = tuple(i.item_id for i in items if not correctness[i.item_id])
    correct = sum(1 for i in items if correctness[i.item_id])
    missing = sum(1 for i in items if i.probe_answer is None)
    return HardSplit(
        source_manifest_id=source_manifest_id,
        retained_ids=retained,
        stats=SplitStats(
            total=len(items),
            probe_correct=correct,
            missing=missing,
            retained=len(retained),
        ),
    )


# ---------------------------------------------------------------------------
# manifest and split files


def read_manifest(path: str | Path) -> list[QAItem]:
    """JSON Lines: one object per line with item_id, question, gold_answer,
    optional probe_answer; any other keys land in metadata."""
    path = Path(path)
    items: list[QAItem] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if not isinstance(record, dict):
            raise ParseError("manifest line is not an object", line=lineno)
        for name in _REQUIRED_FIELDS:
            if name not in record:
                raise ParseError(f"missing required field {name!r}", line=lineno)
        item_id = str(record["item_id"])
        if item_id in seen:
            raise ManifestError(f"duplicate item_id {item_id!r} at line {lineno}")
        seen.add(item_id)
        probe = record.get("probe_answer")
        items.append(
            QAItem(
                item_id=item_id,
                question=str(record["question"]),
                gold_answer=str(record["gold_answer"]),
                probe_answer=None if probe is None else str(probe),
                metadata={
                    k: v
                    for k, v in record.items()
                    if k not in (*_REQUIRED_FIELDS, "probe_answer")
                },
            )
        )
    return items


def write_split(split: HardSplit, matcher: str, path: str | Path) -> None:
    s = split.stats
    lines = [
        f"#source={split.source_manifest_id}",
        f"#matcher={matcher}",
        f"#total={s.total} #correct={s.probe_correct} "
        f"#missing={s.missing} #retained={s.retained}",
    ]
    lines.extend(split.retained_ids)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_split(path: str | Path) -> tuple[dict[str, str], list[str]]:
    """Header key -> value map (keys without the '#') and the retained ids."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta: dict[str, str] = {}
    ids: list[str] = []
    for lineno, line in enumerate(lines, 1):
        if line.startswith("#"):
            if ids:
                raise ParseError("header line after item ids", line=lineno)
            for chunk in line[1:].split(" #"):
                if "=" not in chunk:
                    raise ParseError(f"bad header chunk {chunk!r}", line=lineno)
                key, value = chunk.split("=", 1)
                meta[key] = value
        elif line:
            ids.append(line)
    for key in ("source", "matcher", "total", "correct", "missing", "retained"):
        if key not in meta:
            raise ParseError(f"split header missing #{key}=", line=1)
    if int(meta["retained"]) != len(ids):
        raise ParseError(
            f"header says retained={meta['retained']} but file has {len(ids)} ids"
        )
    return meta, ids


def curate(
    items: list[QAItem], matcher: str, source_manifest_id: str = ""
) -> HardSplit:
    """score_probe followed by build_hard_split."""
    correctness = score_probe(items, matcher)
    return build_hard_split(items, correctness, source_manifest_id)
