"""Core domain types: concept sets, plans, skeletons, corpus instances.

All types are immutable after construction and safe to share across
concurrent workers. Concept lemmas are case-folded to lowercase at
ingestion; the canonical iteration order of a concept set is
lexicographic so that "input order" is reproducible everywhere.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import CorpusError, PlanError

MAX_CONCEPTS = 8  # ranking enumerates all permutations; 8! = 40320

_EDGE_PUNCT = string.punctuation


def _check_lemma(lemma: str) -> str:
    if not lemma:
        raise ValueError("concept lemma must be non-empty")
    if any(ch.isspace() for ch in lemma):
        raise ValueError(f"concept lemma contains whitespace: {lemma!r}")
    folded = lemma.lower()
    if folded != folded.strip(_EDGE_PUNCT):
        raise ValueError(
            f"concept lemma has leading/trailing punctuation: {lemma!r}"
        )
    return folded


@dataclass(frozen=True)
class ConceptSet:
    """An unordered set of concept lemmas (size 1..8).

    Iteration is canonical (lexicographic), which downstream code relies
    on for deterministic tie-breaking.
    """

    concepts: frozenset[str]

    def __post_init__(self):
        if not 1 <= len(self.concepts) <= MAX_CONCEPTS:
            raise ValueError(
                f"concept set size must be 1..{MAX_CONCEPTS}, "
                f"got {len(self.concepts)}"
            )

    @classmethod
    def of(cls, lemmas: Iterable[str]) -> "ConceptSet":
        folded = [_check_lemma(l) for l in lemmas]
        if len(set(folded)) != len(folded):
            raise ValueError(f"duplicate concept lemmas in {folded}")
        return cls(frozenset(folded))

    @property
    def canonical(self) -> tuple[str, ...]:
        return tuple(sorted(self.concepts))

    def __iter__(self) -> Iterator[str]:
        return iter(self.canonical)

    def __len__(self) -> int:
        return len(self.concepts)

    def __contains__(self, lemma: object) -> bool:
        return lemma in self.concepts


@dataclass(frozen=True)
class Plan:
    """A permutation of one concept set, fixed before generation."""

    ordered: tuple[str, ...]

    @classmethod
    def of(cls, ordered: Sequence[str], concepts: ConceptSet) -> "Plan":
        seq = tuple(ordered)
        if len(seq) != len(set(seq)):
            raise PlanError(f"plan repeats a concept: {seq}")
        if set(seq) != set(concepts.concepts):
            raise PlanError(
                f"plan {seq} is not a permutation of {concepts.canonical}"
            )
        return cls(seq)

    def concept_set(self) -> ConceptSet:
        return ConceptSet(frozenset(self.ordered))

    def __iter__(self) -> Iterator[str]:
        return iter(self.ordered)

    def __len__(self) -> int:
        return len(self.ordered)


@dataclass(frozen=True)
class Skeleton:
    """The order in which concepts actually occur in a sentence.

    ``ordered`` lists only the covered concepts, each once, by first
    occurrence; ``covered`` flags every concept of the originating set.
    """

    ordered: tuple[str, ...]
    covered: dict[str, bool]

    @property
    def uncovered(self) -> tuple[str, ...]:
        return tuple(sorted(c for c, ok in self.covered.items() if not ok))


@dataclass(frozen=True)
class Instance:
    """One corpus item: a concept set plus reference sentences."""

    id: str
    concept_set: ConceptSet
    references: tuple[str, ...]


@dataclass(frozen=True)
class GenerationRecord:
    """One generation result for an instance."""

    instance_id: str
    plan: Plan
    text: str
    token_logprobs: tuple[float, ...]
    score: float

    def __post_init__(self):
        if any(lp > 0 for lp in self.token_logprobs):
            raise ValueError("token log-probabilities must be <= 0")
        if abs(self.score - sum(self.token_logprobs)) > 1e-9:
            raise ValueError(
                f"score {self.score} does not equal the sum of "
                f"token_logprobs {sum(self.token_logprobs)}"
            )

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "plan": list(self.plan.ordered),
            "text": self.text,
            "token_logprobs": list(self.token_logprobs),
            "score": self.score,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GenerationRecord":
        return cls(
            instance_id=obj["instance_id"],
            plan=Plan(tuple(obj["plan"])),
            text=obj["text"],
            token_logprobs=tuple(obj["token_logprobs"]),
            score=obj["score"],
        )


def validate_corpus(raw_records: Iterable[tuple[int, dict]]) -> list[Instance]:
    """Validate parsed corpus records into Instances.

    ``raw_records`` pairs each parsed JSON object with its 1-based line
    number so errors can point at the offending line. Duplicate ids are
    rejected by name.
    """
    instances: list[Instance] = []
    seen: set[str] = set()
    for line_no, obj in raw_records:
        if not isinstance(obj, dict):
            raise CorpusError("record is not a JSON object", line=line_no)
        try:
            rid = obj["id"]
            concepts = obj["concepts"]
            refs = obj.get("refs", [])
        except KeyError as exc:
            raise CorpusError(f"missing field {exc}", line=line_no) from None
        if not isinstance(rid, str) or not rid:
            raise CorpusError("id must be a non-empty string", line=line_no)
        if rid in seen:
            raise CorpusError(f"duplicate instance id {rid!r}", line=line_no)
        if not isinstance(concepts, list) or not all(
            isinstance(c, str) for c in concepts
        ):
            raise CorpusError("concepts must be a list of strings", line=line_no)
        if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
            raise CorpusError("refs must be a list of strings", line=line_no)
        try:
            concept_set = ConceptSet.of(concepts)
        except ValueError as exc:
            raise CorpusError(str(exc), line=line_no) from None
        seen.add(rid)
        instances.append(Instance(rid, concept_set, tuple(refs)))
    return instances


def parse_corpus_lines(lines: Iterable[str]) -> list[tuple[int, dict]]:
    """Parse JSON-lines corpus text, keeping 1-based line numbers."""
    records = []
    for i, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            records.append((i, json.loads(stripped)))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON: {exc.msg}", line=i) from None
    return records


def load_corpus(path: str) -> list[Instance]:
    with open(path, encoding="utf-8") as fh:
        return validate_corpus(parse_corpus_lines(fh))


def serialize_instance(instance: Instance) -> dict:
    return {
        "id": instance.id,
        "concepts": list(instance.concept_set.canonical),
        "refs": list(instance.references),
    }


def corpus_digest(instances: Sequence[Instance]) -> str:
    """Stable content digest of a corpus, independent of file formatting."""
    payload = json.dumps(
        [serialize_instance(i) for i in instances],
        sort_keys=True,
        ensure_ascii=False,
    ).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()
