from __future__ import annotations

import io
import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from plangen.core import ConceptSet, Instance
from plangen.plankit import (
    enumerate_plans,
    extract_skeleton,
    oracle_plan,
    plan_from_draft,
    write_oracle_pairs,
)

CONCEPTS = ConceptSet.of(["dance", "music", "crowd", "watch"])

# Lemma pool for synthetic sentences; every entry is its own lemma and
# none collides with the filler words below.
LEMMA_POOL = [
    "apple", "bird", "canyon", "dragon", "engine", "flower", "guitar",
    "harbor", "island", "jacket", "kettle", "lantern", "mirror", "needle",
    "ocean", "pillow", "quartz", "ribbon", "summit", "tunnel",
]
FILLERS = ["a", "the", "of", "to", "and", "while", "near", "with", "some"]


def plant_sentence(order: list[str], rng: random.Random) -> str:
    """Concepts in a fixed order with random filler words between them."""
    words: list[str] = []
    for concept in order:
        words.extend(rng.choices(FILLERS, k=rng.randint(0, 3)))
        words.append(concept)
    words.extend(rng.choices(FILLERS, k=rng.randint(0, 2)))
    return " ".join(words) + "."


def test_extract_skeleton_known_orders():
    first = extract_skeleton(
        "A crowd of people are dancing to music while others watch.", CONCEPTS
    )
    assert first.ordered == ("crowd", "dance", "music", "watch")
    assert first.uncovered == ()
    second = extract_skeleton(
        "A man plays music and watches the crowd dance.", CONCEPTS
    )
    assert second.ordered == ("music", "watch", "crowd", "dance")


def test_extract_skeleton_empty_sentence():
    skeleton = extract_skeleton("", ConceptSet.of(["dance"]))
    assert skeleton.ordered == ()
    assert skeleton.covered == {"dance": False}
    assert skeleton.uncovered == ("dance",)


def test_extract_skeleton_first_occurrence():
    skeleton = extract_skeleton(
        "pour tea in a glass of tea", ConceptSet.of(["tea", "glass"])
    )
    assert skeleton.ordered == ("tea", "glass")


def test_oracle_plan_matches_reference_skeleton():
    inst = Instance(
        "1", CONCEPTS, ("The crowd likes to watch her dance to the music.",)
    )
    pair = oracle_plan(inst, 0)
    assert pair.plan.ordered == ("crowd", "watch", "dance", "music")
    assert pair.appended == ()
    assert pair.target == inst.references[0]


def test_oracle_plan_single_concept():
    inst = Instance("2", ConceptSet.of(["run"]), ("They run.",))
    assert oracle_plan(inst, 0).plan.ordered == ("run",)


def test_oracle_plan_appends_uncovered_canonically():
    inst = Instance("3", CONCEPTS, ("the crowd hears music",))
    pair = oracle_plan(inst, 0)
    assert pair.plan.ordered == ("crowd", "music", "dance", "watch")
    assert pair.appended == ("dance", "watch")


def test_oracle_plan_bad_reference_index():
    inst = Instance("4", CONCEPTS, ("crowd",))
    with pytest.raises(IndexError):
        oracle_plan(inst, 1)


def test_enumerate_plans_counts_and_order():
    single = enumerate_plans(ConceptSet.of(["a"]))
    assert [p.ordered for p in single] == [("a",)]
    three = enumerate_plans(ConceptSet.of(["a", "b", "c"]))
    assert len(three) == 6
    assert three[0].ordered == ("a", "b", "c")
    assert three[-1].ordered == ("c", "b", "a")
    assert len(enumerate_plans(CONCEPTS)) == math.factorial(4)


@given(st.sets(st.sampled_from(LEMMA_POOL), min_size=1, max_size=6))
def test_enumerate_plans_unique(concepts):
    plans = enumerate_plans(ConceptSet.of(concepts))
    assert len(plans) == math.factorial(len(concepts))
    assert len({p.ordered for p in plans}) == len(plans)
    ordered = [p.ordered for p in plans]
    assert ordered == sorted(ordered)


def test_plan_from_draft_known_order():
    plan = plan_from_draft(
        "A crowd of people watch and dance to the music.", CONCEPTS
    )
    assert plan.ordered == ("crowd", "watch", "dance", "music")


def test_plan_from_draft_empty_draft():
    assert plan_from_draft("", CONCEPTS).ordered == CONCEPTS.canonical


def test_plan_from_draft_partial_coverage():
    plan = plan_from_draft("the crowd watches a dance", CONCEPTS)
    assert plan.ordered == ("crowd", "watch", "dance", "music")


@given(
    st.lists(st.sampled_from(LEMMA_POOL), min_size=1, max_size=6, unique=True),
    st.integers(0, 2**32 - 1),
)
def test_skeleton_recovers_planted_order(order, seed):
    rng = random.Random(seed)
    rng.shuffle(order)
    concepts = ConceptSet.of(order)
    sentence = plant_sentence(order, rng)
    skeleton = extract_skeleton(sentence, concepts)
    assert skeleton.ordered == tuple(order)
    assert skeleton.uncovered == ()


@given(
    st.sets(st.sampled_from(LEMMA_POOL), min_size=1, max_size=6),
    st.integers(0, 2**32 - 1),
)
def test_oracle_plan_is_valid_permutation(concepts, seed):
    rng = random.Random(seed)
    order = sorted(concepts)
    rng.shuffle(order)
    cs = ConceptSet.of(concepts)
    covered = order[: rng.randint(1, len(order))]
    inst = Instance("p", cs, (plant_sentence(covered, rng),))
    pair = oracle_plan(inst, 0)
    assert set(pair.plan.ordered) == cs.concepts
    assert pair.plan.ordered[: len(covered)] == tuple(covered)
    assert pair.appended == tuple(sorted(set(order) - set(covered)))


def test_skeleton_order_is_subsequence_of_tokens():
    sentence = "the dragon guards a lantern near the harbor"
    concepts = ConceptSet.of(["dragon", "lantern", "harbor"])
    skeleton = extract_skeleton(sentence, concepts)
    tokens = sentence.split()
    indices = [tokens.index(c) for c in skeleton.ordered]
    assert indices == sorted(indices)


def test_write_oracle_pairs_format():
    inst = Instance("1", CONCEPTS, ("the crowd hears music",))
    buffer = io.StringIO()
    count = write_oracle_pairs([oracle_plan(inst, 0)], buffer)
    assert count == 1
    obj = json.loads(buffer.getvalue())
    assert obj == {
        "id": "1",
        "plan": ["crowd", "music", "dance", "watch"],
        "target": "the crowd hears music",
        "appended": ["dance", "watch"],
    }
