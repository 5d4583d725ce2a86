"""Writer for the binary tensor-dump container.

Layout: magic "PLGD", 8-byte little-endian header length, UTF-8 JSON
header (instance_id, plan, tokens, layers/heads/seq/dim, section table
with byte offsets, optional loss and out_tokens), then row-major
little-endian float32 payload sections: enc_attn [L,H,S,S], hidden
[L+1,S,d], optional cross_attn [L,H,T,S], optional head_sens [L,H].
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"PLGD"


def build_container(
    instance_id: str,
    plan: list[str],
    tokens: list[str],
    enc_attn: np.ndarray,
    hidden: np.ndarray,
    cross_attn: np.ndarray | None = None,
    out_tokens: list[str] | None = None,
    head_sens: np.ndarray | None = None,
    loss: float | None = None,
) -> bytes:
    layers, heads, seq, _ = enc_attn.shape
    if hidden.shape[0] != layers + 1 or hidden.shape[1] != seq:
        raise ValueError(
            f"hidden shape {hidden.shape} inconsistent with enc_attn "
            f"{enc_attn.shape}"
        )
    if len(tokens) != seq:
        raise ValueError(f"{len(tokens)} tokens for seq {seq}")

    sections: list[tuple[str, np.ndarray]] = [
        ("enc_attn", enc_attn),
        ("hidden", hidden),
    ]
    if cross_attn is not None:
        if out_tokens is None:
            raise ValueError("cross_attn requires out_tokens")
        sections.append(("cross_attn", cross_attn))
    if head_sens is not None:
        sections.append(("head_sens", head_sens))

    header: dict = {
        "instance_id": instance_id,
        "plan": list(plan),
        "tokens": list(tokens),
        "layers": int(layers),
        "heads": int(heads),
        "seq": int(seq),
        "dim": int(hidden.shape[2]),
        "loss": loss,
        "sections": [],
    }
    if out_tokens is not None:
        header["out_tokens"] = list(out_tokens)

    payload = bytearray()
    for name, array in sections:
        arr = np.ascontiguousarray(array, dtype="<f4")
        header["sections"].append(
            {"name": name, "shape": list(arr.shape), "offset": len(payload)}
        )
        payload.extend(arr.tobytes())

    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(blob)) + blob + bytes(payload)
