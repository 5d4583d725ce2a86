"""Numerical analysis over dumped model tensors.

All kernels are pure reductions over AttentionDump collections: attention
divergence across input permutations, hidden-state variance, rank
correlation, attention probing against gold concept relations, head
importance, and cross-attention monotonicity. Cross-permutation
comparisons align positions by concept lemma, the only key that survives
permutation.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dumpio import AttentionDump
from .errors import AnalysisError
from .relations import GoldRelation
from .textmatch import lemmatize

Alignment = list[dict[str, int]]


def _concept_position(dump: AttentionDump, concept: str) -> int | None:
    for i, tok in enumerate(dump.tokens):
        if tok and (tok == concept or lemmatize(tok) == concept):
            return i
    return None


def align_permutations(dumps: Sequence[AttentionDump]) -> Alignment:
    """First-occurrence position of every concept in every dump.

    All dumps must describe the same instance with the same token
    multiset; filler positions are simply absent from the maps and thus
    excluded from all cross-permutation comparisons.
    """
    if not dumps:
        raise AnalysisError("alignment needs at least one dump")
    ids = {d.instance_id for d in dumps}
    if len(ids) > 1:
        raise AnalysisError(f"dumps mix instance ids: {sorted(ids)}")
    concepts = set(dumps[0].plan)
    reference_multiset = Counter(dumps[0].tokens)
    alignment: Alignment = []
    for dump in dumps:
        if set(dump.plan) != concepts:
            raise AnalysisError(
                f"dump plans disagree on the concept set: "
                f"{sorted(set(dump.plan))} vs {sorted(concepts)}"
            )
        if Counter(dump.tokens) != reference_multiset:
            raise AnalysisError(
                f"token multiset mismatch across dumps of {dump.instance_id!r}"
            )
        positions: dict[str, int] = {}
        for concept in concepts:
            pos = _concept_position(dump, concept)
            if pos is None:
                raise AnalysisError(
                    f"dump of {dump.instance_id!r} is missing concept "
                    f"{concept!r} among its tokens"
                )
            positions[concept] = pos
        alignment.append(positions)
    return alignment


def _entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def generalized_jsd(distributions: np.ndarray) -> float:
    """H(mean) - mean(H) in bits for k distributions stacked in rows."""
    mean = distributions.mean(axis=0)
    return _entropy_bits(mean) - float(
        np.mean([_entropy_bits(row) for row in distributions])
    )


def attention_jsd(
    dumps: Sequence[AttentionDump], alignment: Alignment
) -> tuple[np.ndarray, np.ndarray]:
    """Divergence of encoder attention across permutations.

    For each (layer, head, query concept), each dump's attention row is
    restricted to the aligned concept columns and renormalized; the
    generalized Jensen-Shannon divergence (base 2) of the k resulting
    distributions is averaged over query concepts per head, and over
    heads per layer. Returns (per_layer [L], per_head [L, H]), values in
    [0, log2 k].
    """
    if len(dumps) < 2:
        raise AnalysisError("attention_jsd needs at least two dumps")
    concepts = sorted(alignment[0])
    L, H = dumps[0].layers, dumps[0].heads
    per_head = np.zeros((L, H))
    for layer in range(L):
        for head in range(H):
            values = []
            for query in concepts:
                rows = []
                for dump, positions in zip(dumps, alignment):
                    row = dump.enc_attention[layer, head, positions[query], :]
                    restricted = np.array(
                        [row[positions[c]] for c in concepts], dtype=np.float64
                    )
                    total = restricted.sum()
                    if total <= 0:
                        raise AnalysisError(
                            f"all-zero restricted attention row for concept "
                            f"{query!r} at layer {layer}, head {head}"
                        )
                    rows.append(restricted / total)
                values.append(generalized_jsd(np.stack(rows)))
            per_head[layer, head] = float(np.mean(values))
    return per_head.mean(axis=1), per_head


def hidden_variance(
    dumps: Sequence[AttentionDump], alignment: Alignment
) -> np.ndarray:
    """Population variance of hidden states across permutations.

    For each layer, the variance over dumps of every hidden dimension at
    each concept's aligned position, averaged over dimensions and
    concepts. The permutation set is exhaustive, hence the population
    (not sample) convention. Returns one value per hidden level (L+1,
    embeddings included).
    """
    if len(dumps) < 2:
        raise AnalysisError("hidden_variance needs at least two dumps")
    concepts = sorted(alignment[0])
    dims = {d.hidden.shape[2] for d in dumps}
    levels = {d.hidden.shape[0] for d in dumps}
    if len(dims) > 1 or len(levels) > 1:
        raise AnalysisError(
            f"hidden-state shapes disagree across dumps: dims {sorted(dims)}, "
            f"levels {sorted(levels)}"
        )
    n_levels = levels.pop()
    out = np.zeros(n_levels)
    for level in range(n_levels):
        per_concept = []
        for concept in concepts:
            stacked = np.stack(
                [
                    dump.hidden[level, positions[concept], :].astype(np.float64)
                    for dump, positions in zip(dumps, alignment)
                ]
            )
            per_concept.append(stacked.var(axis=0, ddof=0).mean())
        out[level] = float(np.mean(per_concept))
    return out


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1  # ranks are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties, in [-1, 1]."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 3:
        raise ValueError("spearman needs at least 3 observations")
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise ValueError("spearman is undefined for a constant series")
    rx = np.array(_average_ranks(xs))
    ry = np.array(_average_ranks(ys))
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom)


@dataclass
class UasResult:
    """Attention-probing accuracy per head, with per-label best heads."""

    uas: np.ndarray  # [L, H], fraction of gold checks hit
    checks: int  # gold relations x dumps
    best_by_label: dict[str, tuple[int, int, float]]  # label -> (l, h, uas)


def probe_uas(
    dumps: Sequence[AttentionDump],
    gold: Sequence[GoldRelation],
    alignment: Alignment,
) -> UasResult:
    """Score every head on how well its attention tracks gold relations.

    A head hits a gold pair when the attention weight from the head
    concept's position into the dependent's position strictly exceeds
    the weight from every other concept position into the dependent.
    Ties lose.
    """
    if not gold:
        raise AnalysisError("probe_uas needs at least one gold relation")
    concepts = sorted(alignment[0])
    L, H = dumps[0].layers, dumps[0].heads
    hits = np.zeros((L, H))
    label_hits: dict[str, np.ndarray] = {}
    label_checks: Counter = Counter()
    checks = 0
    for dump, positions in zip(dumps, alignment):
        for relation in gold:
            if relation.head not in positions or relation.dependent not in positions:
                raise AnalysisError(
                    f"gold relation {relation.head}->{relation.dependent} "
                    f"involves a concept absent from dump "
                    f"{dump.instance_id!r}"
                )
            src = positions[relation.head]
            dst = positions[relation.dependent]
            others = [
                positions[c]
                for c in concepts
                if c not in (relation.head, relation.dependent)
            ]
            checks += 1
            label_checks[relation.label] += 1
            if relation.label not in label_hits:
                label_hits[relation.label] = np.zeros((L, H))
            weight = dump.enc_attention[:, :, src, dst]
            if others:
                competitors = dump.enc_attention[:, :, others, dst].max(axis=2)
                hit = weight > competitors
            else:
                hit = np.ones((L, H), dtype=bool)
            hits += hit
            label_hits[relation.label] += hit
    best_by_label = {}
    for label, grid in label_hits.items():
        acc = grid / label_checks[label]
        flat = int(np.argmax(acc))
        layer, head = divmod(flat, H)
        best_by_label[label] = (layer, head, float(acc[layer, head]))
    return UasResult(uas=hits / checks, checks=checks, best_by_label=best_by_label)


@dataclass
class HeadRank:
    layer: int
    head: int
    mean_sensitivity: float
    rank: int  # 1 = most important


def head_importance_rank(dumps: Sequence[AttentionDump]) -> list[HeadRank]:
    """Rank heads by mean absolute sensitivity over the dumps that carry
    sensitivities; ties keep (layer, head) index order."""
    grids = [d.head_sensitivity for d in dumps if d.head_sensitivity is not None]
    if not grids:
        raise AnalysisError("no dump carries head sensitivities")
    shapes = {g.shape for g in grids}
    if len(shapes) > 1:
        raise AnalysisError(f"head_sens shapes disagree: {sorted(shapes)}")
    mean = np.mean([np.abs(g.astype(np.float64)) for g in grids], axis=0)
    L, H = mean.shape
    entries = [
        (float(mean[layer, head]), layer, head)
        for layer in range(L)
        for head in range(H)
    ]
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))
    return [
        HeadRank(layer=layer, head=head, mean_sensitivity=value, rank=i + 1)
        for i, (value, layer, head) in enumerate(entries)
    ]


def monotonicity_report(dump: AttentionDump) -> float:
    """Fraction of consecutive decoding steps whose most-attended input
    concept position does not move backward.

    Uses final-layer cross attention averaged over heads, restricted to
    concept positions. A single-step output is vacuously monotone.
    """
    if dump.cross_attention is None:
        raise AnalysisError(
            f"dump of {dump.instance_id!r} has no cross-attention section"
        )
    positions: list[int] = []
    for concept in dump.plan:
        pos = _concept_position(dump, concept)
        if pos is None:
            raise AnalysisError(f"concept {concept!r} missing from dump tokens")
        positions.append(pos)
    positions = sorted(set(positions))
    final = dump.cross_attention[-1].astype(np.float64).mean(axis=0)  # [T, S]
    restricted = final[:, positions]  # [T, n_concepts]
    attended = [positions[int(np.argmax(row))] for row in restricted]
    if len(attended) <= 1:
        return 1.0
    steps = len(attended) - 1
    forward = sum(
        1 for a, b in zip(attended, attended[1:]) if b >= a
    )
    return forward / steps
