"""Permutation-invariance analysis of a generator.

Feed a generator every permutation of a concept set and measure how
often the output stays the same: exactly (mode sentence) or up to
wording (mode skeleton). An instance counts as invariant at a level when
the mode fraction exceeds the threshold alpha.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Hashable, Sequence

from .core import ConceptSet, Plan
from .errors import AnalysisError
from .plankit import enumerate_plans, extract_skeleton

DEFAULT_ALPHA = 0.9
DEFAULT_BINS = 20


def normalize_sentence(text: str) -> str:
    """Case/whitespace normalization applied before exact-match grouping."""
    return " ".join(text.split()).lower()


def mode_fraction(outputs: Sequence[Hashable]) -> tuple[Hashable, float]:
    """Most frequent item and its fraction; ties break to the smallest item."""
    if not outputs:
        raise AnalysisError("mode_fraction of an empty list is undefined")
    counts = Counter(outputs)
    best_count = max(counts.values())
    mode = min(item for item, c in counts.items() if c == best_count)
    return mode, best_count / len(outputs)


@dataclass(frozen=True)
class PermutationSweep:
    """All m! outputs of one instance, keyed by the plan that produced them."""

    instance_id: str
    outputs: dict[Plan, str]

    @property
    def m(self) -> int:
        if not self.outputs:
            raise AnalysisError(f"sweep for {self.instance_id!r} is empty")
        return len(next(iter(self.outputs)).ordered)


@dataclass(frozen=True)
class SweepResult:
    """Per-instance invariance measurements at one alpha."""

    instance_id: str
    sentence_fraction: float
    skeleton_fraction: float
    sentence_invariant: bool
    skeleton_invariant: bool
    mode_sentence: str
    mode_skeleton: tuple[str, ...]
    excluded: bool = False


def sweep_invariance(
    sweep: PermutationSweep, concepts: ConceptSet, alpha: float = DEFAULT_ALPHA
) -> SweepResult:
    """Classify one complete sweep at threshold alpha.

    Sentence-level compares normalized output strings; skeleton-level
    compares concept orders extracted from the outputs. Sweeps containing
    an empty output are excluded (mode semantics are undefined for them)
    and only counted separately in reports.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    expected = set(enumerate_plans(concepts))
    got = set(sweep.outputs)
    if got != expected:
        missing = len(expected - got)
        raise AnalysisError(
            f"sweep for {sweep.instance_id!r} is incomplete: covers "
            f"{len(got)}/{len(expected)} permutations ({missing} missing)"
        )
    sentences = [normalize_sentence(t) for t in sweep.outputs.values()]
    if any(not s for s in sentences):
        return SweepResult(
            instance_id=sweep.instance_id,
            sentence_fraction=0.0,
            skeleton_fraction=0.0,
            sentence_invariant=False,
            skeleton_invariant=False,
            mode_sentence="",
            mode_skeleton=(),
            excluded=True,
        )
    skeletons = [
        extract_skeleton(t, concepts).ordered for t in sweep.outputs.values()
    ]
    mode_sent, sent_frac = mode_fraction(sentences)
    mode_skel, skel_frac = mode_fraction(skeletons)
    return SweepResult(
        instance_id=sweep.instance_id,
        sentence_fraction=sent_frac,
        skeleton_fraction=skel_frac,
        sentence_invariant=sent_frac > alpha,
        skeleton_invariant=skel_frac > alpha,
        mode_sentence=mode_sent,
        mode_skeleton=mode_skel,
    )


@dataclass
class InvarianceReport:
    """Corpus-level invariance percentages plus histogram/CDF data."""

    alpha: float
    n_instances: int
    n_excluded: int
    sentence_invariant_pct: float
    skeleton_invariant_pct: float
    bins: int
    sentence_hist: list[int] = field(default_factory=list)
    skeleton_hist: list[int] = field(default_factory=list)

    def cdf(self, level: str) -> list[float]:
        hist = self.sentence_hist if level == "sentence" else self.skeleton_hist
        total = sum(hist)
        if total == 0:
            return [0.0] * len(hist)
        acc = 0
        out = []
        for count in hist:
            acc += count
            out.append(100.0 * acc / total)
        return out

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_instances": self.n_instances,
            "n_excluded": self.n_excluded,
            "sentence_invariant_pct": self.sentence_invariant_pct,
            "skeleton_invariant_pct": self.skeleton_invariant_pct,
            "bins": self.bins,
            "sentence_hist": self.sentence_hist,
            "skeleton_hist": self.skeleton_hist,
            "sentence_cdf": self.cdf("sentence"),
            "skeleton_cdf": self.cdf("skeleton"),
        }


def _histogram(fractions: Sequence[float], bins: int) -> list[int]:
    hist = [0] * bins
    for f in fractions:
        idx = min(int(f * bins), bins - 1)
        hist[idx] += 1
    return hist


def invariance_report(
    results: Sequence[SweepResult],
    alpha: float = DEFAULT_ALPHA,
    bins: int = DEFAULT_BINS,
) -> InvarianceReport:
    """Aggregate per-instance results into corpus percentages and
    fixed-width histograms over the mode fractions."""
    if not results:
        raise AnalysisError("invariance report needs at least one instance")
    included = [r for r in results if not r.excluded]
    excluded = len(results) - len(included)
    if not included:
        raise AnalysisError("all sweeps were excluded (empty outputs)")
    n = len(included)
    return InvarianceReport(
        alpha=alpha,
        n_instances=n,
        n_excluded=excluded,
        sentence_invariant_pct=100.0
        * sum(r.sentence_invariant for r in included)
        / n,
        skeleton_invariant_pct=100.0
        * sum(r.skeleton_invariant for r in included)
        / n,
        bins=bins,
        sentence_hist=_histogram([r.sentence_fraction for r in included], bins),
        skeleton_hist=_histogram([r.skeleton_fraction for r in included], bins),
    )


def write_histogram_csv(report: InvarianceReport, level: str, fh: IO[str]) -> None:
    """Figure data: (bin_start, bin_end, count, cumulative_pct) rows."""
    if level not in ("sentence", "skeleton"):
        raise ValueError(f"level must be sentence or skeleton, got {level!r}")
    hist = report.sentence_hist if level == "sentence" else report.skeleton_hist
    cdf = report.cdf(level)
    writer = csv.writer(fh)
    writer.writerow(["bin_start", "bin_end", "count", "cumulative_pct"])
    for i, (count, cum) in enumerate(zip(hist, cdf)):
        writer.writerow(
            [
                f"{i / report.bins:.4f}",
                f"{(i + 1) / report.bins:.4f}",
                count,
                f"{cum:.4f}",
            ]
        )


def skeleton_consistency(
    records: Sequence[tuple[Plan, str]],
) -> float:
    """Percentage of (plan, output) pairs whose output realizes the plan.

    The output's skeleton, restricted to covered concepts, must equal the
    plan restricted to the same concepts; uncovered concepts do not break
    consistency.
    """
    if not records:
        raise AnalysisError("skeleton consistency needs at least one record")
    consistent = 0
    for plan, text in records:
        concepts = plan.concept_set()
        skeleton = extract_skeleton(text, concepts)
        plan_restricted = tuple(
            c for c in plan.ordered if skeleton.covered.get(c)
        )
        if skeleton.ordered == plan_restricted:
            consistent += 1
    return 100.0 * consistent / len(records)
