"""Beam-search decoding with per-token log-probabilities.

Scores are raw sums of natural-log token probabilities (no length
normalization), matching the ranking contract on the client side. The
first step never emits EOS so the returned text is always non-empty.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .model import BOS, EOS, PAD, MiniSeq2Seq


@dataclass
class DecodeResult:
    token_ids: list[int]  # generated ids, EOS excluded
    token_logprobs: list[float]  # one per emitted token, EOS included


@torch.no_grad()
def beam_search(
    model: MiniSeq2Seq,
    src_ids: torch.Tensor,
    beam_size: int = 5,
    max_len: int = 24,
) -> DecodeResult:
    """Decode one source sequence (shape [1, S])."""
    if src_ids.dim() != 2 or src_ids.shape[0] != 1:
        raise ValueError("beam_search expects a single source sequence")
    model.eval()
    memory, _, _ = model.encode(src_ids)

    # each hypothesis: (ids, logprobs, total, finished)
    beams = [([BOS], [], 0.0, False)]
    for step in range(max_len):
        candidates = []
        for ids, logprobs, total, finished in beams:
            if finished:
                candidates.append((ids, logprobs, total, True))
                continue
            tgt = torch.tensor([ids], dtype=torch.long)
            logits, _ = model.decode(tgt, memory)
            step_logprobs = torch.log_softmax(logits[0, -1], dim=-1)
            step_logprobs[PAD] = float("-inf")
            step_logprobs[BOS] = float("-inf")
            if step == 0:
                step_logprobs[EOS] = float("-inf")
            top = torch.topk(step_logprobs, k=min(beam_size, len(step_logprobs)))
            for logprob, token in zip(top.values.tolist(), top.indices.tolist()):
                candidates.append(
                    (
                        ids + [token],
                        logprobs + [logprob],
                        total + logprob,
                        token == EOS,
                    )
                )
        candidates.sort(key=lambda c: -c[2])
        beams = candidates[:beam_size]
        if all(finished for _, _, _, finished in beams):
            break

    ids, logprobs, _, finished = beams[0]
    generated = ids[1:]  # drop BOS
    if finished:
        generated = generated[:-1]  # drop EOS; its logprob stays in the score
    # clamp tiny positive float noise from log_softmax
    logprobs = [min(lp, 0.0) for lp in logprobs]
    return DecodeResult(token_ids=generated, token_logprobs=logprobs)
