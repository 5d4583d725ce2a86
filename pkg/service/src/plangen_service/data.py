"""Training-pair files and batching.

Reads the oracle-pair JSON-lines produced by the preparation step
({"id", "plan", "target", "appended"}). Planned mode keeps the stored
plan order as the input; draft mode replaces it with a seeded random
linearization so the model trains order-agnostic.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

import torch

from .model import PAD, Vocab, word_tokenize


@dataclass(frozen=True)
class TrainPair:
    instance_id: str
    concepts_in_order: tuple[str, ...]
    target: str


def load_pairs(path: str, mode: str = "planned", seed: int = 0) -> list[TrainPair]:
    if mode not in ("planned", "draft"):
        raise ValueError(f"mode must be planned or draft, got {mode!r}")
    rng = random.Random(seed)
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                plan = [str(c) for c in obj["plan"]]
                target = str(obj["target"])
                rid = str(obj["id"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: bad pair record: {exc}")
            if not plan or not target:
                raise ValueError(f"{path}:{line_no}: empty plan or target")
            if mode == "draft":
                rng.shuffle(plan)
            pairs.append(TrainPair(rid, tuple(plan), target))
    return pairs


def build_vocab(pairs: list[TrainPair]) -> Vocab:
    texts = [p.target for p in pairs] + [" ".join(p.concepts_in_order) for p in pairs]
    return Vocab.build(texts)


def encode_batch(
    pairs: list[TrainPair], vocab: Vocab
) -> tuple[torch.Tensor, torch.Tensor]:
    """(src_ids, tgt_ids) padded to the batch maxima; targets end in EOS."""
    from .model import EOS

    srcs = [vocab.encode(list(p.concepts_in_order)) for p in pairs]
    tgts = [vocab.encode(word_tokenize(p.target)) + [EOS] for p in pairs]
    max_s = max(len(s) for s in srcs)
    max_t = max(len(t) for t in tgts)
    src_ids = torch.full((len(pairs), max_s), PAD, dtype=torch.long)
    tgt_ids = torch.full((len(pairs), max_t), PAD, dtype=torch.long)
    for i, (s, t) in enumerate(zip(srcs, tgts)):
        src_ids[i, : len(s)] = torch.tensor(s)
        tgt_ids[i, : len(t)] = torch.tensor(t)
    return src_ids, tgt_ids


def batches(
    pairs: list[TrainPair], batch_size: int, rng: random.Random
) -> list[list[TrainPair]]:
    shuffled = list(pairs)
    rng.shuffle(shuffled)
    return [
        shuffled[i : i + batch_size]
        for i in range(0, len(shuffled), batch_size)
    ]
