"""Corpus evaluation metrics.

Coverage and repetition use the lemma matcher; BLEU, ROUGE and CIDEr
operate on whitespace/punctuation-normalized tokens. All kernels return
values in [0, 1] (percentages use [0, 100]); Table-style display scaling
(x100 for BLEU/ROUGE, x10 for CIDEr) is applied only in the CSV summary
layer, never inside the kernels.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

from .core import Instance
from .textmatch import find_concept_positions, tokenize

DEFAULT_MAX_N = 4

# Scaling applied when a metric is written into the summary table.
DISPLAY_SCALE = {
    "bleu3": 100.0,
    "bleu4": 100.0,
    "rouge2": 100.0,
    "rougeL": 100.0,
    "cider": 10.0,
}


@dataclass
class MetricReport:
    """A corpus metric with its per-instance breakdown and config echo."""

    metric: str
    corpus_value: float
    per_instance: dict[str, float]
    config: dict = field(default_factory=dict)

    @property
    def display_value(self) -> float:
        return self.corpus_value * DISPLAY_SCALE.get(self.metric, 1.0)

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "corpus_value": self.corpus_value,
            "config": self.config,
            "per_instance": self.per_instance,
        }


def _metric_tokens(sentence: str) -> list[str]:
    return [t for t in tokenize(sentence) if t]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )


def _index_instances(instances: Sequence[Instance]) -> dict[str, Instance]:
    return {inst.id: inst for inst in instances}


def _require_instances(
    outputs: Mapping[str, str], by_id: Mapping[str, Instance]
) -> None:
    missing = sorted(set(outputs) - set(by_id))
    if missing:
        raise ValueError(f"outputs reference unknown instance ids: {missing}")


# ---------------------------------------------------------------------------
# concept-level metrics
# ---------------------------------------------------------------------------


def coverage(
    outputs: Mapping[str, str], instances: Sequence[Instance]
) -> MetricReport:
    """Average percentage of input concepts present in the outputs."""
    by_id = _index_instances(instances)
    _require_instances(outputs, by_id)
    per_instance = {}
    for rid, text in outputs.items():
        concepts = by_id[rid].concept_set
        covered = sum(
            1 for c in concepts if find_concept_positions(text, c)
        )
        per_instance[rid] = 100.0 * covered / len(concepts)
    corpus = sum(per_instance.values()) / len(per_instance) if per_instance else 0.0
    return MetricReport(
        metric="coverage",
        corpus_value=corpus,
        per_instance=per_instance,
        config={"matcher": "lemma", "aggregation": "mean"},
    )


def repetition_rate(
    outputs: Mapping[str, str], instances: Sequence[Instance]
) -> MetricReport:
    """Percentage of outputs where some concept occurs more than once."""
    by_id = _index_instances(instances)
    _require_instances(outputs, by_id)
    per_instance = {}
    for rid, text in outputs.items():
        concepts = by_id[rid].concept_set
        flagged = any(
            len(find_concept_positions(text, c)) >= 2 for c in concepts
        )
        per_instance[rid] = 1.0 if flagged else 0.0
    corpus = (
        100.0 * sum(per_instance.values()) / len(per_instance)
        if per_instance
        else 0.0
    )
    return MetricReport(
        metric="repetition",
        corpus_value=corpus,
        per_instance=per_instance,
        config={"matcher": "lemma", "aggregation": "percent-flagged"},
    )


# ---------------------------------------------------------------------------
# n-gram overlap metrics
# ---------------------------------------------------------------------------


def _clipped_counts(
    cand_tokens: Sequence[str], ref_token_lists: Sequence[Sequence[str]], n: int
) -> tuple[int, int]:
    """(clipped matches, total candidate n-grams) for order n."""
    cand_counts = _ngrams(cand_tokens, n)
    if not cand_counts:
        return 0, 0
    max_ref: Counter = Counter()
    for ref in ref_token_lists:
        for gram, count in _ngrams(ref, n).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    clipped = sum(min(c, max_ref[g]) for g, c in cand_counts.items())
    return clipped, sum(cand_counts.values())


def _closest_ref_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def _combine_bleu(
    clipped: Sequence[int],
    totals: Sequence[int],
    cand_len: int,
    ref_len: int,
    smoothing: bool,
) -> float:
    log_sum = 0.0
    for n, (m, h) in enumerate(zip(clipped, totals), start=1):
        if smoothing and n >= 2:
            m, h = m + 1, h + 1
        if m == 0 or h == 0:
            return 0.0
        log_sum += math.log(m / h)
    precision_mean = math.exp(log_sum / len(clipped))
    if cand_len == 0:
        return 0.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * precision_mean


def bleu(
    candidate: str,
    references: Sequence[str],
    max_n: int = DEFAULT_MAX_N,
    smoothing: bool = False,
) -> float:
    """Sentence BLEU: clipped modified n-gram precision geometric mean
    times the brevity penalty.

    ``smoothing`` adds one to numerator and denominator of precisions for
    n >= 2 (pairwise sentence BLEU is degenerate without it). An empty
    candidate scores 0.
    """
    if not 1 <= max_n <= 4:
        raise ValueError(f"max_n must be in 1..4, got {max_n}")
    if not references:
        raise ValueError("bleu needs at least one reference")
    cand = _metric_tokens(candidate)
    refs = [_metric_tokens(r) for r in references]
    if not cand:
        return 0.0
    clipped, totals = [], []
    for n in range(1, max_n + 1):
        m, h = _clipped_counts(cand, refs, n)
        clipped.append(m)
        totals.append(h)
    ref_len = _closest_ref_length(len(cand), [len(r) for r in refs])
    return _combine_bleu(clipped, totals, len(cand), ref_len, smoothing)


def corpus_bleu(
    outputs: Mapping[str, str],
    instances: Sequence[Instance],
    max_n: int = DEFAULT_MAX_N,
) -> MetricReport:
    """Corpus BLEU pools clipped counts over instances before combining;
    the per-instance breakdown stores unsmoothed sentence BLEU."""
    by_id = _index_instances(instances)
    _require_instances(outputs, by_id)
    pooled_clipped = [0] * max_n
    pooled_total = [0] * max_n
    cand_len_sum = 0
    ref_len_sum = 0
    per_instance = {}
    for rid, text in outputs.items():
        refs = [_metric_tokens(r) for r in by_id[rid].references]
        cand = _metric_tokens(text)
        if not refs:
            raise ValueError(f"instance {rid!r} has no references")
        per_instance[rid] = bleu(text, by_id[rid].references, max_n=max_n)
        if not cand:
            continue
        for n in range(1, max_n + 1):
            m, h = _clipped_counts(cand, refs, n)
            pooled_clipped[n - 1] += m
            pooled_total[n - 1] += h
        cand_len_sum += len(cand)
        ref_len_sum += _closest_ref_length(len(cand), [len(r) for r in refs])
    corpus = _combine_bleu(
        pooled_clipped, pooled_total, cand_len_sum, ref_len_sum, smoothing=False
    )
    return MetricReport(
        metric=f"bleu{max_n}",
        corpus_value=corpus,
        per_instance=per_instance,
        config={
            "max_n": max_n,
            "aggregation": "pooled-counts",
            "per_instance": "sentence-unsmoothed",
            "display_scale": 100,
        },
    )


def rouge_2(candidate: str, references: Sequence[str]) -> float:
    """Bigram F1, maximum over references, equal precision/recall weight."""
    return _rouge_n(candidate, references, 2)


def _rouge_n(candidate: str, references: Sequence[str], n: int) -> float:
    if not references:
        raise ValueError("rouge needs at least one reference")
    cand_counts = _ngrams(_metric_tokens(candidate), n)
    best = 0.0
    for ref in references:
        ref_counts = _ngrams(_metric_tokens(ref), n)
        overlap = sum((cand_counts & ref_counts).values())
        c_total = sum(cand_counts.values())
        r_total = sum(ref_counts.values())
        if overlap == 0 or c_total == 0 or r_total == 0:
            continue
        precision = overlap / c_total
        recall = overlap / r_total
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: str, references: Sequence[str]) -> float:
    """LCS-based F1, maximum over references, equal precision/recall
    weight (the beta parameter is a documented config choice)."""
    if not references:
        raise ValueError("rouge needs at least one reference")
    cand = _metric_tokens(candidate)
    best = 0.0
    for ref in references:
        ref_tokens = _metric_tokens(ref)
        lcs = _lcs_length(cand, ref_tokens)
        if lcs == 0 or not cand or not ref_tokens:
            continue
        precision = lcs / len(cand)
        recall = lcs / len(ref_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def _mean_report(
    metric: str,
    scorer,
    outputs: Mapping[str, str],
    instances: Sequence[Instance],
    config: dict,
) -> MetricReport:
    by_id = _index_instances(instances)
    _require_instances(outputs, by_id)
    per_instance = {
        rid: scorer(text, by_id[rid].references)
        for rid, text in outputs.items()
    }
    corpus = sum(per_instance.values()) / len(per_instance) if per_instance else 0.0
    return MetricReport(metric, corpus, per_instance, config)


def rouge_2_report(
    outputs: Mapping[str, str], instances: Sequence[Instance]
) -> MetricReport:
    return _mean_report(
        "rouge2", rouge_2, outputs, instances,
        {"aggregation": "mean", "beta": "equal", "display_scale": 100},
    )


def rouge_l_report(
    outputs: Mapping[str, str], instances: Sequence[Instance]
) -> MetricReport:
    return _mean_report(
        "rougeL", rouge_l, outputs, instances,
        {"aggregation": "mean", "beta": "equal", "display_scale": 100},
    )


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------


def _tfidf_vector(
    counts: Counter, idf: Mapping[tuple, float], unseen_idf: float
) -> tuple[dict[tuple, float], float]:
    # n-grams absent from every reference carry the clamped-df IDF log(N)
    vec = {g: c * idf.get(g, unseen_idf) for g, c in counts.items()}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    return vec, norm


def cider(
    outputs: Mapping[str, str],
    instances: Sequence[Instance],
    max_n: int = DEFAULT_MAX_N,
) -> MetricReport:
    """Consensus metric: mean over n of the average cosine similarity
    between TF-IDF n-gram vectors of the candidate and each reference.

    The sigma-free original formulation (no length penalty, no count
    clipping). IDF is computed from the reference sentences of the
    evaluated corpus, so at least two instances are required.
    """
    by_id = _index_instances(instances)
    _require_instances(outputs, by_id)
    if len(instances) < 2:
        raise ValueError(
            "cider needs at least 2 instances to define a reference IDF"
        )
    # Document frequency: number of instances whose reference set
    # contains the n-gram (counted once per instance).
    doc_freq: Counter = Counter()
    for inst in instances:
        grams: set[tuple] = set()
        for ref in inst.references:
            toks = _metric_tokens(ref)
            for n in range(1, max_n + 1):
                grams.update(_ngrams(toks, n).keys())
        doc_freq.update(grams)
    n_docs = len(instances)
    idf = {g: math.log(n_docs / max(1.0, df)) for g, df in doc_freq.items()}
    unseen_idf = math.log(n_docs)

    per_instance = {}
    for rid, text in outputs.items():
        refs = by_id[rid].references
        if not refs:
            per_instance[rid] = 0.0
            continue
        cand_tokens = _metric_tokens(text)
        ref_token_lists = [_metric_tokens(r) for r in refs]
        order_scores = []
        for n in range(1, max_n + 1):
            cand_vec, cand_norm = _tfidf_vector(
                _ngrams(cand_tokens, n), idf, unseen_idf
            )
            sims = []
            for ref_tokens in ref_token_lists:
                ref_vec, ref_norm = _tfidf_vector(
                    _ngrams(ref_tokens, n), idf, unseen_idf
                )
                if cand_norm == 0.0 or ref_norm == 0.0:
                    sims.append(0.0)
                    continue
                dot = sum(
                    v * ref_vec[g] for g, v in cand_vec.items() if g in ref_vec
                )
                sims.append(dot / (cand_norm * ref_norm))
            order_scores.append(sum(sims) / len(sims))
        per_instance[rid] = sum(order_scores) / max_n
    corpus = sum(per_instance.values()) / len(per_instance) if per_instance else 0.0
    return MetricReport(
        metric="cider",
        corpus_value=corpus,
        per_instance=per_instance,
        config={
            "max_n": max_n,
            "variant": "original-sigma-free",
            "idf": "reference-corpus",
            "display_scale": 10,
        },
    )


# ---------------------------------------------------------------------------
# diversity and human evaluation
# ---------------------------------------------------------------------------


def discrepancy(candidates: Sequence[str], max_n: int = DEFAULT_MAX_N) -> float:
    """BLEU-based diversity of a top-k candidate list.

    One minus the mean smoothed sentence BLEU over all ordered pairs
    (i != j). Identical candidates give exactly 0; candidates sharing no
    n-grams give 1. Invariant under permutation of the candidate list.
    """
    if len(candidates) < 2:
        raise ValueError("discrepancy needs at least 2 candidates")
    total = 0.0
    pairs = 0
    for i, cand in enumerate(candidates):
        for j, ref in enumerate(candidates):
            if i == j:
                continue
            total += bleu(cand, [ref], max_n=max_n, smoothing=True)
            pairs += 1
    return 1.0 - total / pairs


def pairwise_human_score(better: int, worse: int, same: int) -> float:
    """Pairwise comparison score in [-1, 1]: (better - worse) / total.

    -1 means unanimously worse, +1 unanimously better.
    """
    if min(better, worse, same) < 0:
        raise ValueError("counts must be non-negative")
    total = better + worse + same
    if total == 0:
        raise ValueError("at least one judgment is required")
    return (better - worse) / total


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def write_report_json(report: MetricReport, fh: IO[str]) -> None:
    json.dump(report.to_json(), fh, indent=2, sort_keys=True)
    fh.write("\n")


def write_summary_csv(reports: Sequence[MetricReport], fh: IO[str]) -> None:
    """One row per metric, display-scaled like the usual results tables."""
    writer = csv.writer(fh)
    writer.writerow(["metric", "corpus_value", "display_value", "instances"])
    for report in reports:
        writer.writerow(
            [
                report.metric,
                f"{report.corpus_value:.6f}",
                f"{report.display_value:.4f}",
                len(report.per_instance),
            ]
        )
