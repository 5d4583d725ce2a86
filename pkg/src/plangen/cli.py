"""Operator command line: prepare, run, eval, analyze.

Every command writes a config echo plus input digests into its output
directory, so reruns are auditable and mock-generator runs are
byte-identical. Exit codes: 0 success, 1 usage error, 2 validation
error, 3 generator/transport error, 4 partial run.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import os
import sys
from collections import defaultdict

import numpy as np

from . import attnlab, metrics
from .core import GenerationRecord, Instance, Plan, corpus_digest, load_corpus
from .errors import AnalysisError, CorpusError, DumpFormatError, PlangenError
from .genclient import MockGenerator, MockScript, RemoteGenerator, ServiceAddress
from .invariance import (
    DEFAULT_ALPHA,
    DEFAULT_BINS,
    PermutationSweep,
    invariance_report,
    skeleton_consistency,
    sweep_invariance,
    write_histogram_csv,
)
from .pipeline import (
    GenerationCache,
    PipelineConfig,
    load_records,
    run_corpus,
    write_records,
)
from .plankit import oracle_plan, write_oracle_pairs
from .relations import extract_gold_relations, load_parse_file, write_gold_relations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_GENERATOR = 3
EXIT_PARTIAL = 4

METRIC_NAMES = (
    "coverage",
    "repetition",
    "bleu3",
    "bleu4",
    "rouge2",
    "rougeL",
    "cider",
    "diversity",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_config_echo(out_dir: str, args: argparse.Namespace, inputs: dict) -> None:
    echo = {
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "input_digests": {
            name: _sha256_file(path)
            for name, path in sorted(inputs.items())
            if path and os.path.exists(path)
        },
    }
    with open(os.path.join(out_dir, "config_echo.json"), "w", encoding="utf-8") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _atomic_write(path: str, write_fn) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        write_fn(fh)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------


def cmd_prepare(args: argparse.Namespace) -> int:
    instances = load_corpus(args.corpus)
    os.makedirs(args.out, exist_ok=True)
    _write_config_echo(args.out, args, {"corpus": args.corpus, "parses": args.parses})

    pairs = []
    warned = 0
    for inst in instances:
        for ref_idx in range(len(inst.references)):
            pair = oracle_plan(inst, ref_idx)
            if pair.appended:
                warned += 1
                print(
                    f"warning: instance {inst.id!r} reference {ref_idx} misses "
                    f"concepts {list(pair.appended)}; appended in canonical order",
                    file=sys.stderr,
                )
            pairs.append(pair)
    path = os.path.join(args.out, "oracle_pairs.jsonl")
    _atomic_write(path, lambda fh: write_oracle_pairs(pairs, fh))
    print(f"wrote {len(pairs)} oracle pairs to {path} ({warned} with appended tails)")

    if args.parses:
        trees = load_parse_file(args.parses)
        by_instance = defaultdict(list)
        for tree in trees:
            if tree.instance_id is None:
                raise CorpusError(
                    "parse block lacks an '# id = <instance>' comment"
                )
            by_instance[tree.instance_id].append(tree)
        known = {inst.id: inst for inst in instances}
        unknown = sorted(set(by_instance) - set(known))
        if unknown:
            raise CorpusError(f"parses reference unknown instance ids: {unknown}")
        relations = {
            rid: extract_gold_relations(ts, known[rid].concept_set)
            for rid, ts in by_instance.items()
        }
        gold_path = os.path.join(args.out, "gold_relations.jsonl")
        _atomic_write(gold_path, lambda fh: write_gold_relations(relations, fh))
        total = sum(len(v) for v in relations.values())
        print(f"wrote {total} gold relations to {gold_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _build_generator(args: argparse.Namespace):
    if args.mock_script:
        script = MockScript.load(args.mock_script)
        return MockGenerator(script), script.model_tag
    address = ServiceAddress(base_url=args.endpoint, retries=args.retries)
    client = RemoteGenerator(address, pool_size=args.max_inflight)
    return client, client.healthz()


def cmd_run(args: argparse.Namespace) -> int:
    instances = load_corpus(args.corpus)
    os.makedirs(args.out, exist_ok=True)
    _write_config_echo(
        args.out, args, {"corpus": args.corpus, "mock_script": args.mock_script}
    )
    generator, model_tag = _build_generator(args)

    cache_path = os.path.join(args.out, "cache.jsonl")
    if not args.resume and os.path.exists(cache_path):
        os.remove(cache_path)
    cache = GenerationCache(cache_path)

    top_k = None if args.top_k == "all" else int(args.top_k)
    config = PipelineConfig(
        variant=args.variant,
        top_k=top_k,
        workers=args.workers,
        max_inflight=args.max_inflight,
        shuffle_seed=args.seed if args.shuffle else None,
    )
    result = run_corpus(instances, generator, config, cache)

    records_path = os.path.join(args.out, "records.jsonl")
    _atomic_write(records_path, lambda fh: write_records(result.records, fh))
    meta = {
        "variant": args.variant,
        "model_tag": model_tag,
        "top_k": args.top_k,
        "corpus_digest": corpus_digest(instances),
        "seed": args.seed,
        "shuffle": args.shuffle,
        "workers": args.workers,
        "max_inflight": args.max_inflight,
        "instances": len(instances),
        "completed": len(result.completed_ids),
    }
    _atomic_write(
        os.path.join(args.out, "run_meta.json"),
        lambda fh: json.dump(meta, fh, indent=2, sort_keys=True),
    )

    partial_path = os.path.join(args.out, "PARTIAL")
    if result.failed:
        with open(partial_path, "w", encoding="utf-8") as fh:
            json.dump(result.failed, fh, indent=2, sort_keys=True)
        for rid, message in sorted(result.failed.items()):
            print(f"failed: {rid}: {message}", file=sys.stderr)
        return EXIT_PARTIAL if result.completed_ids else EXIT_GENERATOR
    if os.path.exists(partial_path):
        os.remove(partial_path)
    print(
        f"wrote {len(result.records)} records for {len(result.completed_ids)} "
        f"instances to {records_path}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _first_record_per_instance(
    records: list[GenerationRecord],
) -> dict[str, GenerationRecord]:
    best: dict[str, GenerationRecord] = {}
    for record in records:
        best.setdefault(record.instance_id, record)
    return best


def cmd_eval(args: argparse.Namespace) -> int:
    requested = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in requested if m not in METRIC_NAMES]
    if unknown:
        raise CorpusError(
            f"unknown metric name(s) {unknown}; choose from {list(METRIC_NAMES)}"
        )
    instances = load_corpus(args.corpus)
    records = load_records(args.records)
    os.makedirs(args.out, exist_ok=True)
    _write_config_echo(
        args.out, args, {"corpus": args.corpus, "records": args.records}
    )
    outputs = {
        rid: rec.text for rid, rec in _first_record_per_instance(records).items()
    }

    reports = []
    for name in requested:
        if name == "coverage":
            report = metrics.coverage(outputs, instances)
        elif name == "repetition":
            report = metrics.repetition_rate(outputs, instances)
        elif name in ("bleu3", "bleu4"):
            report = metrics.corpus_bleu(outputs, instances, max_n=int(name[-1]))
        elif name == "rouge2":
            report = metrics.rouge_2_report(outputs, instances)
        elif name == "rougeL":
            report = metrics.rouge_l_report(outputs, instances)
        elif name == "cider":
            report = metrics.cider(outputs, instances)
        else:  # diversity
            by_instance = defaultdict(list)
            for record in records:
                by_instance[record.instance_id].append(record.text)
            per_instance = {
                rid: metrics.discrepancy(texts)
                for rid, texts in by_instance.items()
                if len(texts) >= 2
            }
            if not per_instance:
                raise AnalysisError(
                    "diversity needs at least 2 records per instance; rerun "
                    "with a rank variant and --top-k >= 2"
                )
            report = metrics.MetricReport(
                metric="diversity",
                corpus_value=sum(per_instance.values()) / len(per_instance),
                per_instance=per_instance,
                config={"kind": "bleu-discrepancy", "max_n": 4},
            )
        reports.append(report)
        path = os.path.join(args.out, f"{name}.json")
        _atomic_write(path, lambda fh, r=report: metrics.write_report_json(r, fh))
        print(f"{name}: corpus={report.corpus_value:.6f} -> {path}")
    _atomic_write(
        os.path.join(args.out, "summary.csv"),
        lambda fh: metrics.write_summary_csv(reports, fh),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _sweeps_from_records(
    records: list[GenerationRecord], instances: list[Instance]
) -> dict[str, PermutationSweep]:
    by_id = {inst.id: inst for inst in instances}
    grouped: dict[str, dict[Plan, str]] = defaultdict(dict)
    for record in records:
        if record.instance_id not in by_id:
            raise AnalysisError(
                f"record references unknown instance {record.instance_id!r}"
            )
        grouped[record.instance_id][record.plan] = record.text
    return {
        rid: PermutationSweep(instance_id=rid, outputs=outputs)
        for rid, outputs in grouped.items()
    }


def _analyze_invariance(args: argparse.Namespace) -> int:
    instances = load_corpus(args.corpus)
    records = load_records(args.records)
    os.makedirs(args.out, exist_ok=True)
    _write_config_echo(
        args.out, args, {"corpus": args.corpus, "records": args.records}
    )
    by_id = {inst.id: inst for inst in instances}
    sweeps = _sweeps_from_records(records, instances)
    results = [
        sweep_invariance(sweep, by_id[rid].concept_set, args.alpha)
        for rid, sweep in sorted(sweeps.items())
    ]
    report = invariance_report(results, alpha=args.alpha, bins=args.bins)
    consistency = skeleton_consistency([(r.plan, r.text) for r in records])

    payload = report.to_json()
    payload["skeleton_consistency_pct"] = consistency
    _atomic_write(
        os.path.join(args.out, "invariance.json"),
        lambda fh: json.dump(payload, fh, indent=2, sort_keys=True),
    )
    for level in ("sentence", "skeleton"):
        _atomic_write(
            os.path.join(args.out, f"{level}_hist.csv"),
            lambda fh, lv=level: write_histogram_csv(report, lv, fh),
        )
    print(
        f"alpha={args.alpha}: sentence-invariant "
        f"{report.sentence_invariant_pct:.1f}%, skeleton-invariant "
        f"{report.skeleton_invariant_pct:.1f}%, plan-consistency "
        f"{consistency:.1f}%"
    )
    return EXIT_OK


def _load_dump_groups(dump_paths: list[str]):
    from .dumpio import load_dump_file

    groups: dict[str, list] = defaultdict(list)
    for path in sorted(dump_paths):
        dump = load_dump_file(path)
        groups[dump.instance_id].append(dump)
    return groups


def _analyze_attn(args: argparse.Namespace) -> int:
    paths = sorted(glob.glob(os.path.join(args.dumps, "*.plgd")))
    if not paths:
        raise AnalysisError(f"no *.plgd dumps found under {args.dumps}")
    os.makedirs(args.out, exist_ok=True)
    _write_config_echo(args.out, args, {"records": args.records or ""})
    groups = _load_dump_groups(paths)

    jsd_rows = []
    var_rows = []
    variance_by_instance: dict[str, float] = {}
    for rid, dumps in sorted(groups.items()):
        if len(dumps) < 2:
            continue
        alignment = attnlab.align_permutations(dumps)
        per_layer, _ = attnlab.attention_jsd(dumps, alignment)
        variance = attnlab.hidden_variance(dumps, alignment)
        jsd_rows.append((rid, per_layer))
        var_rows.append((rid, variance))
        variance_by_instance[rid] = float(variance[-1])

    def write_layer_csv(fh, rows, header):
        writer = csv.writer(fh)
        n_layers = len(rows[0][1]) if rows else 0
        writer.writerow(["instance"] + [f"{header}{i}" for i in range(n_layers)])
        for rid, values in rows:
            writer.writerow([rid] + [f"{v:.8f}" for v in values])
        if rows:
            mean = np.mean([values for _, values in rows], axis=0)
            writer.writerow(["MEAN"] + [f"{v:.8f}" for v in mean])

    if jsd_rows:
        _atomic_write(
            os.path.join(args.out, "attention_jsd.csv"),
            lambda fh: write_layer_csv(fh, jsd_rows, "layer"),
        )
        _atomic_write(
            os.path.join(args.out, "hidden_variance.csv"),
            lambda fh: write_layer_csv(fh, var_rows, "level"),
        )

    summary: dict = {"instances_analyzed": len(jsd_rows)}

    if args.gold:
        from .relations import load_gold_relations

        gold = load_gold_relations(args.gold)
        label_best: dict[str, tuple[int, int, float]] = {}
        uas_rows = []
        for rid, dumps in sorted(groups.items()):
            relations = gold.get(rid, [])
            if not relations:
                continue
            alignment = attnlab.align_permutations(dumps)
            result = attnlab.probe_uas(dumps, relations, alignment)
            uas_rows.append((rid, result))
            for label, (layer, head, acc) in result.best_by_label.items():
                if label not in label_best or acc > label_best[label][2]:
                    label_best[label] = (layer, head, acc)

        def write_uas(fh):
            writer = csv.writer(fh)
            writer.writerow(["label", "best_layer", "best_head", "uas"])
            for label in sorted(label_best):
                layer, head, acc = label_best[label]
                writer.writerow([label, layer, head, f"{acc:.6f}"])

        if uas_rows:
            _atomic_write(os.path.join(args.out, "uas_best_heads.csv"), write_uas)
            summary["uas_instances"] = len(uas_rows)

    all_dumps = [d for dumps in groups.values() for d in dumps]
    with_sens = [d for d in all_dumps if d.head_sensitivity is not None]
    if with_sens:
        ranking = attnlab.head_importance_rank(with_sens)

        def write_ranking(fh):
            writer = csv.writer(fh)
            writer.writerow(["rank", "layer", "head", "mean_abs_sensitivity"])
            for entry in ranking:
                writer.writerow(
                    [entry.rank, entry.layer, entry.head,
                     f"{entry.mean_sensitivity:.8f}"]
                )

        _atomic_write(os.path.join(args.out, "head_importance.csv"), write_ranking)
        summary["heads_ranked"] = len(ranking)

    with_cross = [d for d in all_dumps if d.cross_attention is not None]
    if with_cross:

        def write_mono(fh):
            writer = csv.writer(fh)
            writer.writerow(["instance", "plan", "monotonicity"])
            for dump in with_cross:
                writer.writerow(
                    [
                        dump.instance_id,
                        " ".join(dump.plan),
                        f"{attnlab.monotonicity_report(dump):.6f}",
                    ]
                )

        _atomic_write(os.path.join(args.out, "cross_monotonicity.csv"), write_mono)
        summary["cross_attention_dumps"] = len(with_cross)

    if args.records and args.corpus:
        instances = load_corpus(args.corpus)
        records = load_records(args.records)
        by_id = {inst.id: inst for inst in instances}
        sweeps = _sweeps_from_records(records, instances)
        xs, ys = [], []
        for rid in sorted(variance_by_instance):
            if rid not in sweeps:
                continue
            result = sweep_invariance(sweeps[rid], by_id[rid].concept_set, args.alpha)
            if result.excluded:
                continue
            xs.append(variance_by_instance[rid])
            ys.append(result.sentence_fraction)
        if len(xs) >= 3:
            summary["spearman_variance_vs_mode_fraction"] = attnlab.spearman(xs, ys)
            summary["spearman_n"] = len(xs)

    _atomic_write(
        os.path.join(args.out, "attn_summary.json"),
        lambda fh: json.dump(summary, fh, indent=2, sort_keys=True),
    )
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.mode == "invariance":
        return _analyze_invariance(args)
    return _analyze_attn(args)


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plangen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_prepare = sub.add_parser(
        "prepare", help="build oracle-pair (and gold-relation) training files"
    )
    p_prepare.add_argument("--corpus", required=True)
    p_prepare.add_argument("--parses", default=None,
                           help="CoNLL-U-style parses of the references")
    p_prepare.add_argument("--out", required=True)
    p_prepare.set_defaults(func=cmd_prepare)

    p_run = sub.add_parser("run", help="run a pipeline variant over a corpus")
    p_run.add_argument("--corpus", required=True)
    p_run.add_argument(
        "--variant", required=True,
        choices=["unordered", "planned", "unordered_rank", "planned_rank"],
    )
    group = p_run.add_mutually_exclusive_group(required=True)
    group.add_argument("--endpoint", help="base URL of a generator service")
    group.add_argument("--mock-script", help="path to a mock-script JSON file")
    p_run.add_argument("--top-k", default="1",
                       help="records kept per instance for rank variants; "
                            "'all' keeps every permutation")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--max-inflight", type=int, default=8)
    p_run.add_argument("--retries", type=int, default=2)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--shuffle", action="store_true",
                       help="draft on a seeded shuffle instead of canonical order")
    p_run.add_argument("--resume", action="store_true",
                       help="reuse cached generations from a previous run")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score generation records")
    p_eval.add_argument("--records", required=True)
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--metrics", required=True,
                        help=f"comma-separated from {','.join(METRIC_NAMES)}")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_analyze = sub.add_parser(
        "analyze", help="invariance or attention analysis"
    )
    p_analyze.add_argument("--mode", required=True, choices=["invariance", "attn"])
    p_analyze.add_argument("--records", default=None,
                           help="records.jsonl of a full permutation sweep")
    p_analyze.add_argument("--corpus", default=None)
    p_analyze.add_argument("--dumps", default=None,
                           help="directory of *.plgd tensor dumps")
    p_analyze.add_argument("--gold", default=None,
                           help="gold_relations.jsonl from prepare")
    p_analyze.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p_analyze.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p_analyze.add_argument("--out", required=True)
    p_analyze.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze":
        if args.mode == "invariance" and not (args.records and args.corpus):
            parser.error("analyze --mode invariance needs --records and --corpus")
        if args.mode == "attn" and not args.dumps:
            parser.error("analyze --mode attn needs --dumps")
    try:
        return args.func(args)
    except (CorpusError, DumpFormatError, AnalysisError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PlangenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATOR


if __name__ == "__main__":
    sys.exit(main())
