from __future__ import annotations

import io
import itertools
import threading
import random

import pytest

from plangen.core import ConceptSet, Instance
from plangen.errors import GeneratorError, PartialResultsError
from plangen.genclient import MockGenerator, MockScript
from plangen.pipeline import (
    GenerationCache,
    PipelineConfig,
    load_records,
    run_corpus,
    run_instance,
    run_planned,
    run_rank,
    run_unordered,
    write_records,
)

from oracles import oracle_rank_winner

CONCEPTS = ConceptSet.of(["dance", "music", "crowd", "watch"])
INSTANCE = Instance("1", CONCEPTS, ("The crowd watch a dance to music.",))


class FlakyGenerator:
    """Fails the first n calls, then delegates to a mock."""

    def __init__(self, failures: int):
        self.failures = failures
        self.inner = MockGenerator()
        self._lock = threading.Lock()

    def generate(self, request):
        with self._lock:
            should_fail = self.failures > 0
            if should_fail:
                self.failures -= 1
        if should_fail:
            raise GeneratorError("injected failure")
        return self.inner.generate(request)


def scripted_random_scores(
    concepts: ConceptSet, rng: random.Random
) -> MockScript:
    script = MockScript()
    for perm in itertools.permutations(concepts.canonical):
        text = " ".join(perm) + " ."
        script.add(perm, text, [round(rng.uniform(-8.0, 0.0), 6)])
    return script


def test_run_unordered_uses_canonical_order():
    script = MockScript()
    script.add(CONCEPTS.canonical, "scripted canonical draft .", [-1.0])
    record = run_unordered(INSTANCE, MockGenerator(script))
    assert record.plan.ordered == CONCEPTS.canonical
    assert record.text == "scripted canonical draft ."
    assert record.score == -1.0


def test_run_unordered_single_concept():
    inst = Instance("s", ConceptSet.of(["run"]), ())
    record = run_unordered(inst, MockGenerator())
    assert record.plan.ordered == ("run",)


def test_run_unordered_seeded_shuffle_is_deterministic():
    first = run_unordered(INSTANCE, MockGenerator(), shuffle_seed=13)
    second = run_unordered(INSTANCE, MockGenerator(), shuffle_seed=13)
    other = run_unordered(INSTANCE, MockGenerator(), shuffle_seed=14)
    assert first.plan == second.plan
    assert sorted(first.plan.ordered) == list(CONCEPTS.canonical)
    assert first.plan != other.plan or first.plan.ordered == other.plan.ordered


def test_run_unordered_error_tagged_with_instance():
    with pytest.raises(GeneratorError, match="'1'"):
        run_unordered(INSTANCE, FlakyGenerator(1))


def test_run_planned_two_stage_flow():
    script = MockScript()
    script.add(
        CONCEPTS.canonical,
        "A crowd of people watch and dance to the music.",
        [-0.5],
    )
    script.add(
        ("crowd", "watch", "dance", "music"),
        "planned final text .",
        [-0.25],
    )
    record = run_planned(INSTANCE, MockGenerator(script))
    assert record.plan.ordered == ("crowd", "watch", "dance", "music")
    assert record.text == "planned final text ."


def test_run_planned_single_concept():
    inst = Instance("s", ConceptSet.of(["run"]), ())
    record = run_planned(inst, MockGenerator())
    assert record.plan.ordered == ("run",)


def test_run_planned_draft_missing_concept_appends_tail():
    script = MockScript()
    script.add(CONCEPTS.canonical, "the crowd watches a dance .", [-0.5])
    record = run_planned(INSTANCE, MockGenerator(script))
    # draft covers crowd, watch, dance; music appended canonically
    assert record.plan.ordered == ("crowd", "watch", "dance", "music")
    assert set(record.plan.ordered) == set(CONCEPTS.canonical)


def test_run_planned_stage3_order_is_plan_of_stage1_draft():
    from plangen.plankit import plan_from_draft

    rng = random.Random(12)
    pool = ["ball", "dog", "park", "tree", "bird", "lake"]
    for trial in range(25):
        concepts = ConceptSet.of(rng.sample(pool, rng.randint(2, 4)))
        covered = rng.sample(sorted(concepts), rng.randint(1, len(concepts)))
        draft_text = "the " + " near the ".join(covered) + " ."
        script = MockScript()
        script.add(concepts.canonical, draft_text, [-0.5])

        seen_requests = []
        inner = MockGenerator(script)

        class Recording:
            def generate(self, request):
                seen_requests.append(request)
                return inner.generate(request)

        record = run_planned(
            Instance(f"t{trial}", concepts, ()), Recording()
        )
        assert seen_requests[0].mode == "draft"
        assert seen_requests[1].mode == "planned"
        expected = plan_from_draft(draft_text, concepts)
        assert seen_requests[1].concepts_in_order == expected.ordered
        assert record.plan == expected


def test_run_rank_inversion_rule_winner_is_sorted_order():
    inst = Instance("r", ConceptSet.of(["a", "b", "c"]), ())
    generator = MockGenerator(MockScript(score_rule="inversions"))
    records = run_rank(inst, generator, mode="draft", top_k=6)
    assert records[0].plan.ordered == ("a", "b", "c")
    assert records[0].score == 0.0
    assert len(records) == 6
    scores = [r.score for r in records]
    assert scores == sorted(scores, reverse=True)


def test_run_rank_single_concept():
    inst = Instance("r", ConceptSet.of(["solo"]), ())
    records = run_rank(inst, MockGenerator(), mode="planned", top_k=3)
    assert len(records) == 1
    assert records[0].plan.ordered == ("solo",)


def test_run_rank_tie_breaks_lexicographically():
    inst = Instance("r", ConceptSet.of(["x", "y"]), ())
    records = run_rank(inst, MockGenerator(), mode="draft", top_k=2)
    # zero rule scores everything 0: lexicographic plan wins
    assert records[0].plan.ordered == ("x", "y")
    assert records[1].plan.ordered == ("y", "x")


def test_run_rank_matches_brute_force_oracle():
    rng = random.Random(99)
    for trial in range(30):
        size = rng.randint(1, 4)
        lemmas = rng.sample(
            ["ball", "dog", "park", "tree", "bird", "lake"], size
        )
        concepts = ConceptSet.of(lemmas)
        inst = Instance(f"t{trial}", concepts, ())
        script = scripted_random_scores(concepts, rng)
        records = run_rank(inst, MockGenerator(script), mode="draft", top_k=1)
        scores = {
            order: sum(entry[1])
            for order, entry in script.entries.items()
        }
        assert records[0].plan.ordered == oracle_rank_winner(scores)


def test_run_rank_partial_failure():
    inst = Instance("r", ConceptSet.of(["a", "b", "c"]), ())
    with pytest.raises(PartialResultsError) as err:
        run_rank(inst, FlakyGenerator(2), mode="draft")
    assert err.value.instance_id == "r"
    assert err.value.completed == 4  # 6 permutations, 2 injected failures


def test_run_rank_top_k_none_keeps_all():
    inst = Instance("r", ConceptSet.of(["a", "b", "c"]), ())
    records = run_rank(inst, MockGenerator(), mode="draft", top_k=None)
    assert len(records) == 6


def test_cache_avoids_regeneration(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = GenerationCache(str(path))

    calls = []

    class CountingGenerator:
        def generate(self, request):
            calls.append(request.concepts_in_order)
            return MockGenerator().generate(request)

    inst = Instance("c", ConceptSet.of(["a", "b"]), ())
    run_rank(inst, CountingGenerator(), mode="draft", top_k=2, cache=cache)
    assert len(calls) == 2
    reloaded = GenerationCache(str(path))
    assert len(reloaded) == 2
    run_rank(inst, CountingGenerator(), mode="draft", top_k=2, cache=reloaded)
    assert len(calls) == 2  # all served from cache


def test_run_corpus_deterministic_and_ordered():
    rng = random.Random(4)
    instances = []
    for i in range(6):
        lemmas = rng.sample(["ball", "dog", "park", "tree", "bird"], 3)
        instances.append(Instance(str(i), ConceptSet.of(lemmas), ()))
    config = PipelineConfig(variant="planned_rank", top_k=2, workers=3)
    generator = MockGenerator(MockScript(score_rule="inversions"))
    first = run_corpus(instances, generator, config)
    second = run_corpus(instances, generator, config)
    assert first.records == second.records
    assert first.completed_ids == [str(i) for i in range(6)]
    buffer_a, buffer_b = io.StringIO(), io.StringIO()
    write_records(first.records, buffer_a)
    write_records(second.records, buffer_b)
    assert buffer_a.getvalue() == buffer_b.getvalue()


def test_run_corpus_collects_failures():
    instances = [
        Instance("ok", ConceptSet.of(["a"]), ()),
        Instance("bad", ConceptSet.of(["b"]), ()),
    ]

    class SelectiveGenerator:
        def generate(self, request):
            if request.concepts_in_order == ("b",):
                raise GeneratorError("nope")
            return MockGenerator().generate(request)

    config = PipelineConfig(variant="unordered")
    result = run_corpus(instances, SelectiveGenerator(), config)
    assert result.completed_ids == ["ok"]
    assert "bad" in result.failed


def test_records_file_round_trip(tmp_path):
    records = run_rank(
        Instance("x", ConceptSet.of(["a", "b"]), ()),
        MockGenerator(),
        mode="draft",
        top_k=2,
    )
    path = tmp_path / "records.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        write_records(records, fh)
    assert load_records(str(path)) == records


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(variant="bogus")
    with pytest.raises(ValueError):
        PipelineConfig(variant="planned", top_k=0)
    with pytest.raises(ValueError):
        PipelineConfig(variant="planned", workers=0)


def test_run_instance_dispatch():
    inst = Instance("d", ConceptSet.of(["a", "b"]), ())
    generator = MockGenerator()
    for variant, expected in [
        ("unordered", 1),
        ("planned", 1),
        ("unordered_rank", 2),
        ("planned_rank", 2),
    ]:
        config = PipelineConfig(variant=variant, top_k=2)
        assert len(run_instance(inst, generator, config)) == expected
