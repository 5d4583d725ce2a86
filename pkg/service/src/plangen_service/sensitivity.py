"""Head sensitivities: gradient of the generation loss w.r.t. head masks.

The masks are multiplicative scalars on each encoder head's attention
output, held at 1.0; the absolute gradient of the per-example loss with
respect to each mask measures how much that head matters for the
example. Exported dumps carry the [layers, heads] grid plus the loss.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

from .data import TrainPair, encode_batch
from .dumps import build_container
from .model import Checkpoint


def head_mask_gradients(model: torch.nn.Module, loss: torch.Tensor) -> np.ndarray:
    """|d loss / d head_masks| for any module exposing a ``head_masks``
    parameter; evaluated at the masks' current values."""
    if model.head_masks.grad is not None:
        model.head_masks.grad = None
    try:
        loss.backward()
    except RuntimeError as exc:
        raise ValueError(f"loss is not differentiable: {exc}") from None
    grad = model.head_masks.grad
    if grad is None:
        raise ValueError("loss does not depend on head_masks")
    return grad.abs().detach().cpu().numpy().astype(np.float32)


@dataclass
class SensitivityDump:
    instance_id: str
    path: str
    loss: float
    head_sens: np.ndarray


def export_sensitivities(
    checkpoint: Checkpoint,
    pairs: list[TrainPair],
    out_dir: str,
) -> list[SensitivityDump]:
    """One dump per (instance, reference) pair, with head_sens and loss.

    Pairs must carry a reference target; the loss is the summed token
    NLL of that target given the plan-ordered input.
    """
    if not pairs:
        raise ValueError("export_sensitivities needs at least one pair")
    for pair in pairs:
        if not pair.target.strip():
            raise ValueError(
                f"instance {pair.instance_id!r} has no reference target"
            )
    os.makedirs(out_dir, exist_ok=True)
    model = checkpoint.model
    results = []
    for idx, pair in enumerate(pairs):
        src, tgt = encode_batch([pair], checkpoint.vocab)
        model.zero_grad(set_to_none=True)
        loss = model.sequence_loss(src, tgt)
        grid = head_mask_gradients(model, loss)
        loss_value = float(loss.detach())

        with torch.no_grad():
            _, hiddens, enc_probs = model.encode(src)
        enc_attn = (
            torch.stack([p[0] for p in enc_probs]).detach().numpy()
        )  # [L, H, S, S]
        hidden = torch.stack([h[0] for h in hiddens]).detach().numpy()
        payload = build_container(
            instance_id=pair.instance_id,
            plan=list(pair.concepts_in_order),
            tokens=list(pair.concepts_in_order),
            enc_attn=enc_attn,
            hidden=hidden,
            head_sens=grid,
            loss=loss_value,
        )
        path = os.path.join(out_dir, f"{pair.instance_id}_{idx}.plgd")
        with open(path, "wb") as fh:
            fh.write(payload)
        results.append(
            SensitivityDump(
                instance_id=pair.instance_id,
                path=path,
                loss=loss_value,
                head_sens=grid,
            )
        )
    model.zero_grad(set_to_none=True)
    return results
