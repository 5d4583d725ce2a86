#!/usr/bin/env python3
"""Reproduce the invariance histogram/CDF figure data from synthetic sweeps.

Engineers a corpus of permutation sweeps whose mode-sentence and
mode-skeleton fractions follow a right-skewed distribution, classifies
them at a threshold, and writes the histogram CSVs for plotting.

Usage: python scripts/invariance_figure.py [--alpha 0.9] [--instances 200]
"""

from __future__ import annotations

import argparse
import random
from pathlib import Path

from plangen.core import ConceptSet
from plangen.invariance import (
    PermutationSweep,
    invariance_report,
    sweep_invariance,
    write_histogram_csv,
)
from plangen.plankit import enumerate_plans

CONCEPTS = ConceptSet.of(["dance", "music", "crowd", "watch"])


def synth_sweep(rng: random.Random, idx: int) -> PermutationSweep:
    """Sweep with a random mode fraction; higher fractions more likely."""
    plans = enumerate_plans(CONCEPTS)
    mode_count = rng.choices(
        range(1, len(plans) + 1),
        weights=[i**2 for i in range(1, len(plans) + 1)],
    )[0]
    mode_sentence = "the crowd watch the dance to the music"
    outputs = {}
    for i, plan in enumerate(plans):
        if i < mode_count:
            outputs[plan] = mode_sentence
        elif rng.random() < 0.5:
            # same skeleton, different wording
            outputs[plan] = f"a crowd watch some dance to music take {i}"
        else:
            outputs[plan] = " ".join(plan.ordered) + f" variant {i}"
    return PermutationSweep(instance_id=f"synth-{idx}", outputs=outputs)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alpha", type=float, default=0.9)
    parser.add_argument("--bins", type=int, default=20)
    parser.add_argument("--instances", type=int, default=200)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--out", type=Path, default=Path("runs/invariance_figure"))
    args = parser.parse_args()

    rng = random.Random(args.seed)
    results = [
        sweep_invariance(synth_sweep(rng, i), CONCEPTS, args.alpha)
        for i in range(args.instances)
    ]
    report = invariance_report(results, alpha=args.alpha, bins=args.bins)

    args.out.mkdir(parents=True, exist_ok=True)
    for level in ("sentence", "skeleton"):
        path = args.out / f"{level}_hist.csv"
        with open(path, "w", encoding="utf-8") as fh:
            write_histogram_csv(report, level, fh)
        print(f"wrote {path}")
    print(
        f"alpha={args.alpha}: {report.sentence_invariant_pct:.1f}% sentence-"
        f"invariant, {report.skeleton_invariant_pct:.1f}% skeleton-invariant "
        f"({report.n_instances} instances)"
    )


if __name__ == "__main__":
    main()
