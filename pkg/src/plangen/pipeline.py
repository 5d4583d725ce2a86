"""System variants over a generator: unordered, planned, and their
permutation-ranking counterparts.

The unordered variant drafts on the canonical concept order (an optional
seeded shuffle emulates random linearization); the planned variant turns
a draft's skeleton into the plan for a second, planned-mode generation.
Rank variants generate on every permutation and keep the most probable
outputs. A (instance, plan) cache makes corpus runs resumable.
"""

from __future__ import annotations

import json
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

from .core import GenerationRecord, Instance, Plan
from .errors import GeneratorError, PartialResultsError
from .genclient import Generator, GeneratorRequest, score_sequence
from .plankit import enumerate_plans, plan_from_draft

VARIANTS = ("unordered", "planned", "unordered_rank", "planned_rank")


@dataclass
class PipelineConfig:
    variant: str
    top_k: int | None = 1  # None keeps every permutation's record
    workers: int = 1
    max_inflight: int = 8
    shuffle_seed: int | None = None  # draft on a seeded shuffle, not canonical

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1 (or None for all)")
        if self.workers < 1 or self.max_inflight < 1:
            raise ValueError("workers and max_inflight must be >= 1")


class GenerationCache:
    """Thread-safe (instance, plan) -> record cache with optional JSONL
    persistence, used to resume interrupted corpus runs."""

    def __init__(self, path: str | None = None):
        self._path = path
        self._lock = threading.Lock()
        self._data: dict[tuple[str, tuple[str, ...]], GenerationRecord] = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            record = GenerationRecord.from_json(json.loads(line))
                            self._data[
                                (record.instance_id, record.plan.ordered)
                            ] = record
            except FileNotFoundError:
                pass

    def __len__(self) -> int:
        return len(self._data)

    def get(self, instance_id: str, plan: Plan) -> GenerationRecord | None:
        with self._lock:
            return self._data.get((instance_id, plan.ordered))

    def put(self, record: GenerationRecord) -> None:
        with self._lock:
            key = (record.instance_id, record.plan.ordered)
            if key in self._data:
                return
            self._data[key] = record
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")


def _generate_record(
    instance: Instance,
    plan: Plan,
    generator: Generator,
    mode: str,
    cache: GenerationCache | None = None,
) -> GenerationRecord:
    if cache is not None:
        hit = cache.get(instance.id, plan)
        if hit is not None:
            return hit
    request = GeneratorRequest(
        concepts_in_order=plan.ordered, mode=mode, want_logprobs=True
    )
    try:
        response = generator.generate(request)
    except GeneratorError as exc:
        raise GeneratorError(f"instance {instance.id!r}: {exc}") from exc
    record = GenerationRecord(
        instance_id=instance.id,
        plan=plan,
        text=response.text,
        token_logprobs=response.token_logprobs or (),
        score=score_sequence(response.token_logprobs or ()),
    )
    if cache is not None:
        cache.put(record)
    return record


def _draft_order(instance: Instance, shuffle_seed: int | None) -> Plan:
    order = list(instance.concept_set.canonical)
    if shuffle_seed is not None:
        # Instance-local RNG: reordering the corpus never changes a draft.
        rng = random.Random(f"{shuffle_seed}:{instance.id}")
        rng.shuffle(order)
    return Plan.of(order, instance.concept_set)


def run_unordered(
    instance: Instance,
    generator: Generator,
    shuffle_seed: int | None = None,
    cache: GenerationCache | None = None,
) -> GenerationRecord:
    """One draft-mode generation on the canonical (or seeded-shuffle) order."""
    plan = _draft_order(instance, shuffle_seed)
    return _generate_record(instance, plan, generator, "draft", cache)


def run_planned(
    instance: Instance,
    generator: Generator,
    shuffle_seed: int | None = None,
    cache: GenerationCache | None = None,
) -> GenerationRecord:
    """Draft, extract the draft's skeleton as the plan, generate planned.

    The record stores the stage-3 plan and output; concepts the draft
    missed are appended so the final generation still sees all of them.
    """
    draft_plan = _draft_order(instance, shuffle_seed)
    draft = _generate_record(instance, draft_plan, generator, "draft")
    plan = plan_from_draft(draft.text, instance.concept_set)
    return _generate_record(instance, plan, generator, "planned", cache)


def run_rank(
    instance: Instance,
    generator: Generator,
    mode: str,
    top_k: int | None = 1,
    max_inflight: int = 8,
    cache: GenerationCache | None = None,
) -> list[GenerationRecord]:
    """Generate on every permutation and rank by score, descending.

    Ties break toward the lexicographically smaller plan. The first
    record is the variant's output; the first top_k records feed the
    diversity analysis. Any permutation failure aborts the instance with
    a partial-results error.
    """
    plans = enumerate_plans(instance.concept_set)
    records: list[GenerationRecord] = []
    failure: Exception | None = None
    with ThreadPoolExecutor(max_workers=max_inflight) as pool:
        futures = [
            pool.submit(_generate_record, instance, plan, generator, mode, cache)
            for plan in plans
        ]
        for future in futures:
            try:
                records.append(future.result())
            except GeneratorError as exc:
                failure = failure or exc
    if failure is not None:
        raise PartialResultsError(
            f"rank run aborted for instance {instance.id!r} after "
            f"{len(records)}/{len(plans)} generations: {failure}",
            instance_id=instance.id,
            completed=len(records),
        )
    records.sort(key=lambda r: (-r.score, r.plan.ordered))
    if top_k is None:
        return records
    return records[: min(top_k, len(records))]


def run_instance(
    instance: Instance,
    generator: Generator,
    config: PipelineConfig,
    cache: GenerationCache | None = None,
) -> list[GenerationRecord]:
    """Dispatch one instance through the configured variant."""
    if config.variant == "unordered":
        return [run_unordered(instance, generator, config.shuffle_seed, cache)]
    if config.variant == "planned":
        return [run_planned(instance, generator, config.shuffle_seed, cache)]
    mode = "draft" if config.variant == "unordered_rank" else "planned"
    return run_rank(
        instance,
        generator,
        mode=mode,
        top_k=config.top_k,
        max_inflight=config.max_inflight,
        cache=cache,
    )


@dataclass
class CorpusRunResult:
    records: list[GenerationRecord]
    completed_ids: list[str]
    failed: dict[str, str] = field(default_factory=dict)  # id -> error


def run_corpus(
    instances: Sequence[Instance],
    generator: Generator,
    config: PipelineConfig,
    cache: GenerationCache | None = None,
    on_instance: Callable[[str], None] | None = None,
) -> CorpusRunResult:
    """Run every instance through the variant with a worker pool.

    Records are assembled in corpus order regardless of completion
    order, so mock-generator runs are byte-identical across invocations.
    Failures are collected per instance instead of aborting the corpus.
    """
    result = CorpusRunResult(records=[], completed_ids=[])
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [
            pool.submit(run_instance, inst, generator, config, cache)
            for inst in instances
        ]
        for inst, future in zip(instances, futures):
            try:
                records = future.result()
            except (GeneratorError, PartialResultsError) as exc:
                result.failed[inst.id] = str(exc)
                continue
            result.records.extend(records)
            result.completed_ids.append(inst.id)
            if on_instance is not None:
                on_instance(inst.id)
    return result


def write_records(records: Sequence[GenerationRecord], fh: IO[str]) -> int:
    for record in records:
        fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
    return len(records)


def load_records(path: str) -> list[GenerationRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(GenerationRecord.from_json(json.loads(line)))
    return records
