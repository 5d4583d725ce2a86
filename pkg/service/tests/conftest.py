from __future__ import annotations

import pytest
import torch

from plangen_service.data import TrainPair
from plangen_service.model import Checkpoint, MiniSeq2Seq, ModelConfig, Vocab

WORDS = [
    "a", "the", "to", "dog", "ball", "park", "tea", "glass", "pour",
    "crowd", "dance", "music", "watch", "in", "of", "run", "catch",
    "throw", "pitcher", "batter", "frisbee", "boy",
]

PAIRS = [
    TrainPair("1", ("dog", "ball"), "the dog catches the ball"),
    TrainPair("2", ("tea", "glass"), "pour tea in a glass"),
    TrainPair("3", ("crowd", "dance"), "the crowd watch a dance"),
    TrainPair("4", ("ball", "park"), "a ball in the park"),
    TrainPair("5", ("dog", "park"), "a dog runs in the park"),
    TrainPair("6", ("music", "dance"), "they dance to the music"),
]

DEV_PAIRS = [
    TrainPair("7", ("dog", "ball", "park"), "a dog with a ball in the park"),
    TrainPair("8", ("tea", "glass"), "tea in a glass"),
]


def tiny_checkpoint(seed: int = 0) -> Checkpoint:
    torch.manual_seed(seed)
    vocab = Vocab.build([" ".join(WORDS)])
    config = ModelConfig(vocab_size=len(vocab), d_model=16, heads=2,
                         layers=2, ffn=32, max_len=24)
    model = MiniSeq2Seq(config)
    model.eval()
    return Checkpoint(config=config, vocab=vocab, model=model,
                      model_tag="tiny-test")


@pytest.fixture
def checkpoint() -> Checkpoint:
    return tiny_checkpoint()
