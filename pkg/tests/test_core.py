from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from plangen.core import (
    ConceptSet,
    GenerationRecord,
    Plan,
    corpus_digest,
    load_corpus,
    parse_corpus_lines,
    serialize_instance,
    validate_corpus,
)
from plangen.errors import CorpusError, PlanError

lemmas = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=10)
lemma_sets = st.sets(lemmas, min_size=1, max_size=8)


def test_validate_corpus_basic_row():
    raw = [(1, {
        "id": "1",
        "concepts": ["dance", "music", "crowd", "watch"],
        "refs": ["The crowd likes to watch her dance to the music."],
    })]
    (inst,) = validate_corpus(raw)
    assert inst.id == "1"
    assert inst.concept_set.canonical == ("crowd", "dance", "music", "watch")
    assert len(inst.references) == 1


def test_empty_concepts_rejected():
    with pytest.raises(CorpusError) as err:
        validate_corpus([(2, {"id": "2", "concepts": [], "refs": []})])
    assert "line 2" in str(err.value)


def test_duplicate_id_rejected():
    rows = [
        (1, {"id": "7", "concepts": ["a"], "refs": []}),
        (2, {"id": "7", "concepts": ["b"], "refs": []}),
    ]
    with pytest.raises(CorpusError) as err:
        validate_corpus(rows)
    assert "'7'" in str(err.value)
    assert err.value.line == 2


def test_concepts_case_folded():
    (inst,) = validate_corpus(
        [(1, {"id": "1", "concepts": ["Dance", "MUSIC"], "refs": []})]
    )
    assert inst.concept_set.canonical == ("dance", "music")


@pytest.mark.parametrize(
    "concepts",
    [
        ["two words"],
        [""],
        [f"c{i}" for i in range(9)],
        ["dup", "dup"],
        ["'edge"],
    ],
    ids=["whitespace", "empty", "oversized", "duplicate", "edge-punct"],
)
def test_bad_concept_lists_rejected(concepts):
    with pytest.raises(CorpusError):
        validate_corpus([(1, {"id": "1", "concepts": concepts, "refs": []})])


def test_malformed_json_line_number(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id":"1","concepts":["a"],"refs":[]}\nnot json\n')
    with pytest.raises(CorpusError) as err:
        load_corpus(str(path))
    assert err.value.line == 2


def test_round_trip(tmp_path):
    rows = [
        {"id": "1", "concepts": ["dance", "music"], "refs": ["people dance"]},
        {"id": "2", "concepts": ["dog"], "refs": []},
    ]
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    instances = load_corpus(str(path))
    reserialized = [serialize_instance(i) for i in instances]
    reparsed = validate_corpus(list(enumerate(reserialized, start=1)))
    assert reparsed == instances
    assert corpus_digest(reparsed) == corpus_digest(instances)


@given(lemma_sets)
def test_plan_from_any_permutation(concepts):
    cs = ConceptSet.of(concepts)
    perm = list(reversed(cs.canonical))
    plan = Plan.of(perm, cs)
    assert set(plan.ordered) == cs.concepts


@given(lemma_sets)
def test_plan_repeat_and_foreign_rejected(concepts):
    cs = ConceptSet.of(concepts)
    order = list(cs.canonical)
    with pytest.raises(PlanError):
        Plan.of(order + [order[0]], cs)
    with pytest.raises(PlanError):
        Plan.of(order[:-1] + [order[-1] + "xx"], cs)


def test_concept_set_iteration_is_lexicographic():
    cs = ConceptSet.of(["watch", "dance", "music", "crowd"])
    assert list(cs) == ["crowd", "dance", "music", "watch"]


def test_generation_record_invariants():
    plan = Plan(("a", "b"))
    record = GenerationRecord("1", plan, "a b .", (-0.5, -1.5), -2.0)
    assert record.score == -2.0
    with pytest.raises(ValueError):
        GenerationRecord("1", plan, "a b .", (-0.5, 0.25), -0.25)
    with pytest.raises(ValueError):
        GenerationRecord("1", plan, "a b .", (-0.5, -1.5), -1.0)


def test_generation_record_json_round_trip():
    record = GenerationRecord("7", Plan(("x", "y")), "x then y", (-0.25,), -0.25)
    again = GenerationRecord.from_json(
        json.loads(json.dumps(record.to_json()))
    )
    assert again == record


def test_parse_corpus_lines_skips_blanks():
    records = parse_corpus_lines(['{"id":"1","concepts":["a"],"refs":[]}', "", " "])
    assert len(records) == 1
