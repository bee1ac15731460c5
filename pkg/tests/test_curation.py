"""Hard-split curation: matchers, scoring, partition invariants, files."""
from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsqueeze.curation import (
    MATCHERS,
    HardSplit,
    QAItem,
    SplitStats,
    answers_match,
    build_hard_split,
    curate,
    read_manifest,
    read_split,
    score_probe,
    write_split,
)
from avsqueeze.errors import ContractError, ManifestError, ParseError


def _item(i, gold="yes", probe="yes", **kw):
    return QAItem(item_id=f"q{i}", question=f"question {i}", gold_answer=gold,
                  probe_answer=probe, **kw)


# ---------------------------------------------------------------------------
# answer matchers


@pytest.mark.parametrize(
    "gold,probe,expect",
    [
        ("cat", "cat", True),
        ("cat", "Cat", False),
        ("cat", "cat ", False),
        ("", "", True),
    ],
)
def test_exact_matcher(gold, probe, expect):
    assert answers_match(gold, probe, "exact") is expect


@pytest.mark.parametrize(
    "gold,probe,expect",
    [
        ("  Hello   World ", "hello world", True),
        ("Hello\tWorld", "HELLO WORLD", True),
        ("hello world", "helloworld", False),
    ],
)
def test_normalized_matcher(gold, probe, expect):
    assert answers_match(gold, probe, "normalized-exact") is expect


@pytest.mark.parametrize(
    "gold,probe,expect",
    [
        ("(B)", "b.", True),
        ("B", "(b) the tall one", True),
        ("[C] option", "c: option text", True),
        ("(B)", "(C)", False),
        ("A. first", "a", True),
    ],
)
def test_choice_letter_matcher(gold, probe, expect):
    assert answers_match(gold, probe, "choice-letter") is expect


def test_choice_letter_falls_back_when_letter_missing():
    # neither side carries a leading option letter
    assert answers_match("42", "42", "choice-letter") is True
    assert answers_match("42", "43", "choice-letter") is False
    # only one side has a letter: fall back to normalized comparison
    assert answers_match("(A) cat", "cat", "choice-letter") is False
    assert answers_match("the cat", "The  Cat", "choice-letter") is True


def test_unknown_matcher_rejected():
    with pytest.raises(ContractError, match="unknown matcher"):
        answers_match("a", "a", "fuzzy")
    with pytest.raises(ContractError, match="unknown matcher"):
        score_probe([_item(0)], "fuzzy")


# ---------------------------------------------------------------------------
# scoring


def test_score_probe_marks_missing_as_incorrect():
    items = [_item(0), _item(1, probe=None), _item(2, probe="no")]
    scores = score_probe(items, "exact")
    assert scores == {"q0": True, "q1": False, "q2": False}


def test_score_probe_rejects_duplicate_ids():
    items = [_item(0), _item(0)]
    with pytest.raises(ManifestError, match="duplicate"):
        score_probe(items, "exact")


def test_build_hard_split_keeps_incorrect_in_manifest_order():
    items = [_item(0, probe="no"), _item(1), _item(2, probe=None), _item(3, probe="no")]
    split = curate(items, "exact", source_manifest_id="demo")
    assert split.retained_ids == ("q0", "q2", "q3")
    assert split.source_manifest_id == "demo"
    assert split.stats == SplitStats(total=4, probe_correct=1, missing=1, retained=3)


def test_build_hard_split_requires_full_coverage():
    items = [_item(0), _item(1)]
    with pytest.raises(ContractError, match="does not cover"):
        build_hard_split(items, {"q0": True})


def test_reference_counts():
    # the documented workload: 9185 items, 4986 probe-correct, 4199 retained
    items = []
    for i in range(9185):
        probe = "yes" if i < 4986 else "no"
        items.append(QAItem(f"item{i:05d}", "q", "yes", probe))
    split = curate(items, "exact", source_manifest_id="bench")
    assert split.stats.total == 9185
    assert split.stats.probe_correct == 4986
    assert split.stats.retained == 4199
    assert len(split.retained_ids) == 4199


@settings(max_examples=60, deadline=None)
@given(
    flags=st.lists(st.sampled_from(["correct", "wrong", "missing"]),
                   min_size=0, max_size=40),
    matcher=st.sampled_from(MATCHERS),
)
def test_partition_and_idempotence(flags, matcher):
    items = []
    for i, flag in enumerate(flags):
        probe = {"correct": "gold", "wrong": "other", "missing": None}[flag]
        items.append(QAItem(f"id{i}", "q", "gold", probe))
    split = curate(items, matcher)
    s = split.stats
    # partition: every item is either probe-correct or retained
    assert s.probe_correct + s.retained == s.total == len(items)
    assert s.missing == sum(1 for f in flags if f == "missing")
    assert s.missing <= s.retained
    # idempotence: curating only the retained items keeps all of them
    by_id = {i.item_id: i for i in items}
    again = curate([by_id[i] for i in split.retained_ids], matcher)
    assert again.retained_ids == split.retained_ids
    assert again.stats.probe_correct == 0


# ---------------------------------------------------------------------------
# manifest files


def test_read_manifest_round_trip(tmp_path):
    path = tmp_path / "manifest.jsonl"
    records = [
        {"item_id": "a", "question": "q1", "gold_answer": "yes",
         "probe_answer": "no", "difficulty": 3},
        {"item_id": "b", "question": "q2", "gold_answer": "no"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    items = read_manifest(path)
    assert [i.item_id for i in items] == ["a", "b"]
    assert items[0].probe_answer == "no"
    assert items[0].metadata == {"difficulty": 3}
    assert items[1].probe_answer is None
    assert items[1].metadata == {}


def test_read_manifest_skips_blank_lines(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"item_id": "a", "question": "q", "gold_answer": "x"}\n\n\n')
    assert len(read_manifest(path)) == 1


def test_read_manifest_coerces_ids_to_str(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"item_id": 7, "question": "q", "gold_answer": "x"}\n')
    assert read_manifest(path)[0].item_id == "7"


def test_read_manifest_bad_json_names_line(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(
        '{"item_id": "a", "question": "q", "gold_answer": "x"}\nnot json\n'
    )
    with pytest.raises(ParseError) as err:
        read_manifest(path)
    assert str(err.value).startswith("line 2:")


def test_read_manifest_non_object_line(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("[1, 2, 3]\n")
    with pytest.raises(ParseError, match="not an object"):
        read_manifest(path)


@pytest.mark.parametrize("missing", ["item_id", "question", "gold_answer"])
def test_read_manifest_missing_field(tmp_path, missing):
    record = {"item_id": "a", "question": "q", "gold_answer": "x"}
    del record[missing]
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(record) + "\n")
    with pytest.raises(ParseError, match=missing):
        read_manifest(path)


def test_read_manifest_duplicate_id(tmp_path):
    path = tmp_path / "m.jsonl"
    line = '{"item_id": "a", "question": "q", "gold_answer": "x"}'
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(ManifestError, match="line 2"):
        read_manifest(path)


# ---------------------------------------------------------------------------
# split files


def test_split_file_round_trip(tmp_path):
    items = [_item(0, probe="no"), _item(1), _item(2, probe=None)]
    split = curate(items, "normalized-exact", source_manifest_id="demo.jsonl")
    path = tmp_path / "hard.split"
    write_split(split, "normalized-exact", path)
    meta, ids = read_split(path)
    assert meta == {
        "source": "demo.jsonl",
        "matcher": "normalized-exact",
        "total": "3",
        "correct": "1",
        "missing": "1",
        "retained": "2",
    }
    assert ids == ["q0", "q2"]
    # headers first, then bare ids, trailing newline
    text = path.read_text()
    assert text.startswith("#source=demo.jsonl\n#matcher=normalized-exact\n")
    assert text.endswith("\n")


def test_split_file_with_nothing_retained(tmp_path):
    split = curate([_item(0), _item(1)], "exact")
    path = tmp_path / "empty.split"
    write_split(split, "exact", path)
    meta, ids = read_split(path)
    assert meta["retained"] == "0"
    assert ids == []


def test_read_split_rejects_header_after_ids(tmp_path):
    path = tmp_path / "bad.split"
    path.write_text(
        "#source=s\n#matcher=exact\n#total=1 #correct=0 #missing=0 #retained=1\n"
        "q0\n#late=header\n"
    )
    with pytest.raises(ParseError, match="header line after"):
        read_split(path)


def test_read_split_rejects_bad_header_chunk(tmp_path):
    path = tmp_path / "bad.split"
    path.write_text("#source=s\n#matcher exact\n")
    with pytest.raises(ParseError, match="bad header chunk"):
        read_split(path)


def test_read_split_requires_all_header_keys(tmp_path):
    path = tmp_path / "bad.split"
    path.write_text("#source=s\n#matcher=exact\n")
    with pytest.raises(ParseError, match="missing #total="):
        read_split(path)


def test_read_split_checks_retained_count(tmp_path):
    path = tmp_path / "bad.split"
    path.write_text(
        "#source=s\n#matcher=exact\n#total=2 #correct=0 #missing=0 #retained=2\n"
        "q0\n"
    )
    with pytest.raises(ParseError, match="retained=2"):
        read_split(path)


def test_curate_equals_score_plus_build():
    items = [_item(i, probe="no" if i % 2 else "yes") for i in range(6)]
    direct = curate(items, "exact", source_manifest_id="m")
    staged = build_hard_split(items, score_probe(items, "exact"), "m")
    assert direct == staged
    assert isinstance(direct, HardSplit)
