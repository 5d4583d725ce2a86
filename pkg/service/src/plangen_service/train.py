"""Fine-tuning with Adam and early stopping on development loss.

Defaults follow the training recipe this service reproduces: learning
rate 2e-5, batch size 64, early stopping on the dev-set loss. Every
hyperparameter is logged verbatim into the training log.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field

import torch

from .data import TrainPair, batches, build_vocab, encode_batch
from .model import Checkpoint, MiniSeq2Seq, ModelConfig


@dataclass
class TrainConfig:
    lr: float = 2e-5
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    d_model: int = 32
    heads: int = 2
    layers: int = 2
    ffn: int = 64
    max_len: int = 48
    mode: str = "planned"  # recorded for provenance; data loading applies it


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    epochs_run: int
    best_dev_loss: float
    stopped_early: bool
    log: list[dict] = field(default_factory=list)


def _dataset_loss(model: MiniSeq2Seq, pairs, vocab) -> float:
    model.eval()
    total, tokens = 0.0, 0
    with torch.no_grad():
        for chunk in [pairs[i : i + 64] for i in range(0, len(pairs), 64)]:
            src, tgt = encode_batch(chunk, vocab)
            total += float(model.sequence_loss(src, tgt))
            tokens += int((tgt != 0).sum())
    return total / max(tokens, 1)


def finetune(
    train_pairs: list[TrainPair],
    dev_pairs: list[TrainPair],
    config: TrainConfig | None = None,
    log_path: str | None = None,
) -> TrainResult:
    if not train_pairs or not dev_pairs:
        raise ValueError("finetune needs non-empty train and dev pair lists")
    config = config or TrainConfig()
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)

    vocab = build_vocab(train_pairs + dev_pairs)
    model_config = ModelConfig(
        vocab_size=len(vocab),
        d_model=config.d_model,
        heads=config.heads,
        layers=config.layers,
        ffn=config.ffn,
        max_len=config.max_len,
    )
    model = MiniSeq2Seq(model_config)
    optimizer = torch.optim.Adam(model.trainable_parameters(), lr=config.lr)

    log: list[dict] = [{"event": "config", **asdict(config)}]
    best_dev = float("inf")
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    bad_epochs = 0
    epochs_run = 0
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        epoch_loss, epoch_tokens = 0.0, 0
        for chunk in batches(train_pairs, config.batch_size, rng):
            src, tgt = encode_batch(chunk, vocab)
            loss = model.sequence_loss(src, tgt)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            epoch_tokens += int((tgt != 0).sum())
        train_loss = epoch_loss / max(epoch_tokens, 1)
        dev_loss = _dataset_loss(model, dev_pairs, vocab)
        log.append(
            {"event": "epoch", "epoch": epoch,
             "train_loss": train_loss, "dev_loss": dev_loss}
        )
        epochs_run = epoch
        if dev_loss < best_dev - 1e-9:
            best_dev = dev_loss
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                stopped_early = True
                log.append({"event": "early_stop", "epoch": epoch})
                break

    model.load_state_dict(best_state)
    model.eval()
    tag = (
        f"mini-{config.mode}-L{config.layers}H{config.heads}"
        f"d{config.d_model}-lr{config.lr}-bs{config.batch_size}"
    )
    checkpoint = Checkpoint(
        config=model_config,
        vocab=vocab,
        model=model,
        model_tag=tag,
        meta={"train": asdict(config), "best_dev_loss": best_dev},
    )
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    return TrainResult(
        checkpoint=checkpoint,
        epochs_run=epochs_run,
        best_dev_loss=best_dev,
        stopped_early=stopped_early,
        log=log,
    )
