from __future__ import annotations

import numpy as np
import pytest

from plangen.dumpio import AttentionDump


def random_stochastic(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Row-stochastic float32 array (softmax rows over the last axis)."""
    logits = rng.normal(size=shape).astype(np.float32)
    exp = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return (exp / exp.sum(axis=-1, keepdims=True)).astype(np.float32)


def make_dump(
    rng: np.random.Generator,
    instance_id: str = "inst",
    plan: tuple[str, ...] = ("ball", "throw"),
    fillers: tuple[str, ...] = (),
    layers: int = 2,
    heads: int = 2,
    dim: int = 3,
    with_cross: bool = False,
    out_len: int = 4,
    with_sens: bool = False,
    loss: float | None = None,
) -> AttentionDump:
    """Random but structurally valid dump whose tokens are the plan
    concepts (optionally interleaved with fillers)."""
    tokens = list(plan)
    for i, filler in enumerate(fillers):
        tokens.insert(2 * i + 1, filler)
    seq = len(tokens)
    cross = None
    out_tokens = None
    if with_cross:
        cross = random_stochastic(rng, layers, heads, out_len, seq)
        out_tokens = tuple(f"w{i}" for i in range(out_len))
    sens = None
    if with_sens:
        sens = rng.uniform(0.0, 1.0, size=(layers, heads)).astype(np.float32)
    return AttentionDump(
        instance_id=instance_id,
        plan=tuple(plan),
        tokens=tuple(tokens),
        enc_attention=random_stochastic(rng, layers, heads, seq, seq),
        hidden=rng.normal(size=(layers + 1, seq, dim)).astype(np.float32),
        cross_attention=cross,
        out_tokens=out_tokens,
        head_sensitivity=sens,
        loss=loss,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
