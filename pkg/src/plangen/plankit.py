"""Skeleton extraction, oracle plans, permutation enumeration, plan drafting.

A Skeleton is the order concepts actually take in a sentence; an oracle
plan reorders a concept set to match a reference's skeleton, appending
any concepts the reference misses so the plan always carries all of them.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import IO, Iterable

from .core import MAX_CONCEPTS, ConceptSet, Instance, Plan, Skeleton
from .textmatch import LemmaRules, find_concept_positions


@dataclass(frozen=True)
class OraclePair:
    """A training pair: skeleton-ordered input plus its reference target.

    ``appended`` names the concepts the reference did not cover, which
    were appended to the plan in canonical order; non-empty means the
    pair deserves a warning at export time.
    """

    instance_id: str
    plan: Plan
    target: str
    appended: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "id": self.instance_id,
            "plan": list(self.plan.ordered),
            "target": self.target,
            "appended": list(self.appended),
        }


def extract_skeleton(
    sentence: str, concepts: ConceptSet, rules: LemmaRules | None = None
) -> Skeleton:
    """Order the covered concepts by first-occurrence token index.

    Uncovered concepts are flagged and excluded from the order. Ties on
    the first-occurrence index (impossible for distinct lemmas under
    whole-token matching) break lexicographically for determinism.
    """
    first_pos: dict[str, int] = {}
    covered: dict[str, bool] = {}
    for concept in concepts:
        positions = find_concept_positions(sentence, concept, rules)
        covered[concept] = bool(positions)
        if positions:
            first_pos[concept] = positions[0]
    ordered = tuple(sorted(first_pos, key=lambda c: (first_pos[c], c)))
    return Skeleton(ordered=ordered, covered=covered)


def oracle_plan(
    instance: Instance,
    reference_index: int,
    rules: LemmaRules | None = None,
) -> OraclePair:
    """Build the oracle plan for one reference of an instance.

    The plan follows the reference's skeleton; concepts the reference
    does not cover are appended afterward in canonical input order.
    """
    if not 0 <= reference_index < len(instance.references):
        raise IndexError(
            f"instance {instance.id!r} has {len(instance.references)} "
            f"references, index {reference_index} is out of range"
        )
    target = instance.references[reference_index]
    skeleton = extract_skeleton(target, instance.concept_set, rules)
    appended = skeleton.uncovered
    plan = Plan.of(skeleton.ordered + appended, instance.concept_set)
    return OraclePair(
        instance_id=instance.id, plan=plan, target=target, appended=appended
    )


def enumerate_plans(concepts: ConceptSet) -> list[Plan]:
    """All m! plans of a concept set, in lexicographic order."""
    if len(concepts) > MAX_CONCEPTS:
        raise ValueError(
            f"refusing to enumerate permutations of {len(concepts)} concepts "
            f"(limit {MAX_CONCEPTS})"
        )
    return [Plan(perm) for perm in itertools.permutations(concepts.canonical)]


def plan_from_draft(
    draft: str, concepts: ConceptSet, rules: LemmaRules | None = None
) -> Plan:
    """Turn a planner draft into a plan: its skeleton order, then any
    uncovered concepts in canonical input order. An empty draft yields
    the canonical order."""
    skeleton = extract_skeleton(draft, concepts, rules)
    return Plan.of(skeleton.ordered + skeleton.uncovered, concepts)


def write_oracle_pairs(pairs: Iterable[OraclePair], fh: IO[str]) -> int:
    """Export oracle pairs as JSON lines; returns the number written."""
    count = 0
    for pair in pairs:
        fh.write(json.dumps(pair.to_json(), ensure_ascii=False) + "\n")
        count += 1
    return count
