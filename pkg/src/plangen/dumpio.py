"""Binary container for per-permutation model tensors.

Layout (bit-exact round trip):
    magic "PLGD" | 8-byte little-endian unsigned header length | JSON header
    | payload of concatenated row-major little-endian float32 sections.

The header carries instance_id, plan, tokens, dimensions, the section
table {"name", "shape", "offset"} (offset in bytes from payload start),
an optional loss, and out_tokens when a cross_attn section is present.

Sections:
    enc_attn   [L, H, S, S]   encoder self-attention, rows sum to 1
    hidden     [L+1, S, d]    embeddings plus each encoder layer output
    cross_attn [L, H, T, S]   optional decoder-to-encoder attention
    head_sens  [L, H]         optional non-negative head sensitivities
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DumpFormatError
from .textmatch import lemmatize

MAGIC = b"PLGD"
ROW_SUM_TOL = 1e-4

_REQUIRED_SECTIONS = ("enc_attn", "hidden")
_KNOWN_SECTIONS = ("enc_attn", "hidden", "cross_attn", "head_sens")


@dataclass
class AttentionDump:
    """Tensors captured from one generator forward pass."""

    instance_id: str
    plan: tuple[str, ...]
    tokens: tuple[str, ...]
    enc_attention: np.ndarray  # [L, H, S, S]
    hidden: np.ndarray  # [L+1, S, d]
    cross_attention: np.ndarray | None = None  # [L, H, T, S]
    out_tokens: tuple[str, ...] | None = None
    head_sensitivity: np.ndarray | None = None  # [L, H]
    loss: float | None = None

    @property
    def layers(self) -> int:
        return self.enc_attention.shape[0]

    @property
    def heads(self) -> int:
        return self.enc_attention.shape[1]

    @property
    def seq(self) -> int:
        return self.enc_attention.shape[2]

    @property
    def dim(self) -> int:
        return self.hidden.shape[2]


def _expected_shapes(header: dict) -> dict[str, tuple[int, ...]]:
    L, H, S, d = (header[k] for k in ("layers", "heads", "seq", "dim"))
    shapes = {
        "enc_attn": (L, H, S, S),
        "hidden": (L + 1, S, d),
        "head_sens": (L, H),
    }
    if "out_tokens" in header:
        shapes["cross_attn"] = (L, H, len(header["out_tokens"]), S)
    return shapes


def write_dump(dump: AttentionDump) -> bytes:
    """Serialize a dump; arrays are stored as little-endian float32."""
    sections: list[tuple[str, np.ndarray]] = [
        ("enc_attn", dump.enc_attention),
        ("hidden", dump.hidden),
    ]
    if dump.cross_attention is not None:
        if dump.out_tokens is None:
            raise ValueError("cross_attention requires out_tokens")
        sections.append(("cross_attn", dump.cross_attention))
    if dump.head_sensitivity is not None:
        sections.append(("head_sens", dump.head_sensitivity))

    header: dict = {
        "instance_id": dump.instance_id,
        "plan": list(dump.plan),
        "tokens": list(dump.tokens),
        "layers": int(dump.enc_attention.shape[0]),
        "heads": int(dump.enc_attention.shape[1]),
        "seq": int(dump.enc_attention.shape[2]),
        "dim": int(dump.hidden.shape[2]),
        "loss": dump.loss,
        "sections": [],
    }
    if dump.out_tokens is not None:
        header["out_tokens"] = list(dump.out_tokens)

    payload = bytearray()
    for name, array in sections:
        arr = np.ascontiguousarray(array, dtype="<f4")
        header["sections"].append(
            {"name": name, "shape": list(arr.shape), "offset": len(payload)}
        )
        payload.extend(arr.tobytes())

    header_bytes = json.dumps(header, ensure_ascii=False, sort_keys=True).encode(
        "utf-8"
    )
    return MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + bytes(payload)


def _parse_header(data: bytes) -> tuple[dict, int]:
    if len(data) < len(MAGIC) + 8:
        raise DumpFormatError("container shorter than magic plus header length")
    if data[: len(MAGIC)] != MAGIC:
        raise DumpFormatError(f"bad magic bytes {data[:4]!r}")
    (header_len,) = struct.unpack_from("<Q", data, len(MAGIC))
    start = len(MAGIC) + 8
    if start + header_len > len(data):
        raise DumpFormatError("declared header length exceeds container size")
    try:
        header = json.loads(data[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DumpFormatError(f"header is not valid UTF-8 JSON: {exc}") from None
    return header, start + header_len


def load_dump(data: bytes, validate: bool = True) -> AttentionDump:
    """Parse and validate a container.

    Raises DumpFormatError on header/shape mismatches, truncated
    payloads, row-sum violations, or negative attention entries.
    """
    header, payload_start = _parse_header(data)
    for key in ("instance_id", "plan", "tokens", "layers", "heads", "seq", "dim",
                "sections"):
        if key not in header:
            raise DumpFormatError(f"header missing field {key!r}")
    if len(header["tokens"]) != header["seq"]:
        raise DumpFormatError(
            f"header lists {len(header['tokens'])} tokens but seq is "
            f"{header['seq']}"
        )
    payload = data[payload_start:]
    expected = _expected_shapes(header)
    arrays: dict[str, np.ndarray] = {}
    for section in header["sections"]:
        name, shape, offset = section["name"], tuple(section["shape"]), section["offset"]
        if name not in _KNOWN_SECTIONS:
            raise DumpFormatError(f"unknown section {name!r}")
        if name in expected and shape != expected[name]:
            raise DumpFormatError(
                f"section {name!r} shape {shape} does not match header "
                f"dimensions {expected[name]}"
            )
        n_floats = int(np.prod(shape)) if shape else 1
        end = offset + 4 * n_floats
        if end > len(payload):
            raise DumpFormatError(
                f"section {name!r} is truncated: needs bytes up to {end}, "
                f"payload has {len(payload)}"
            )
        arrays[name] = (
            np.frombuffer(payload, dtype="<f4", count=n_floats, offset=offset)
            .reshape(shape)
            .copy()
        )
    for name in _REQUIRED_SECTIONS:
        if name not in arrays:
            raise DumpFormatError(f"container missing required section {name!r}")
    if "cross_attn" in arrays and "out_tokens" not in header:
        raise DumpFormatError("cross_attn section requires out_tokens in header")

    dump = AttentionDump(
        instance_id=header["instance_id"],
        plan=tuple(header["plan"]),
        tokens=tuple(header["tokens"]),
        enc_attention=arrays["enc_attn"],
        hidden=arrays["hidden"],
        cross_attention=arrays.get("cross_attn"),
        out_tokens=tuple(header["out_tokens"]) if "out_tokens" in header else None,
        head_sensitivity=arrays.get("head_sens"),
        loss=header.get("loss"),
    )
    if validate:
        validate_dump(dump)
    return dump


def validate_dump(dump: AttentionDump) -> None:
    """Structural checks shared by the loader and the conformance suite."""
    _check_stochastic(dump.enc_attention, "enc_attn")
    if dump.cross_attention is not None:
        _check_stochastic(dump.cross_attention, "cross_attn")
    if dump.head_sensitivity is not None and (dump.head_sensitivity < 0).any():
        raise DumpFormatError("head_sens entries must be non-negative")
    matched = {tok for tok in dump.tokens if tok} | {
        lemmatize(tok) for tok in dump.tokens if tok
    }
    missing = [c for c in dump.plan if c not in matched]
    if missing:
        raise DumpFormatError(
            f"tokens do not cover concept lemmas {missing} after lemmatization"
        )


def _check_stochastic(attention: np.ndarray, name: str) -> None:
    if (attention < 0).any():
        raise DumpFormatError(f"{name} contains negative entries")
    row_sums = attention.astype(np.float64).sum(axis=-1)
    bad = np.abs(row_sums - 1.0) > ROW_SUM_TOL
    if bad.any():
        worst = float(row_sums[bad].flat[0])
        raise DumpFormatError(
            f"{name} rows must sum to 1 within {ROW_SUM_TOL}; found {worst:.6f}"
        )


def load_dump_file(path: str, validate: bool = True) -> AttentionDump:
    with open(path, "rb") as fh:
        return load_dump(fh.read(), validate=validate)


def write_dump_file(dump: AttentionDump, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(write_dump(dump))
