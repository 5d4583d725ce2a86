from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from plangen.dumpio import (
    MAGIC,
    AttentionDump,
    load_dump,
    load_dump_file,
    write_dump,
    write_dump_file,
)
from plangen.errors import DumpFormatError

from conftest import make_dump


def test_round_trip_preserves_everything(rng):
    dump = make_dump(
        rng,
        plan=("tea", "glass"),
        fillers=("of",),
        with_cross=True,
        with_sens=True,
        loss=1.25,
    )
    loaded = load_dump(write_dump(dump))
    assert loaded.instance_id == dump.instance_id
    assert loaded.plan == dump.plan
    assert loaded.tokens == dump.tokens
    assert loaded.out_tokens == dump.out_tokens
    assert loaded.loss == dump.loss
    np.testing.assert_array_equal(loaded.enc_attention, dump.enc_attention)
    np.testing.assert_array_equal(loaded.hidden, dump.hidden)
    np.testing.assert_array_equal(loaded.cross_attention, dump.cross_attention)
    np.testing.assert_array_equal(loaded.head_sensitivity, dump.head_sensitivity)


def test_round_trip_bit_exact(rng):
    for i in range(25):
        dump = make_dump(
            rng,
            instance_id=f"inst-{i}",
            plan=("ball", "throw", "dog"),
            layers=int(rng.integers(1, 4)),
            heads=int(rng.integers(1, 4)),
            dim=int(rng.integers(1, 6)),
            with_cross=bool(rng.integers(0, 2)),
            with_sens=bool(rng.integers(0, 2)),
            loss=float(rng.uniform(0, 3)) if rng.integers(0, 2) else None,
        )
        raw = write_dump(dump)
        assert write_dump(load_dump(raw)) == raw


def test_minimal_dump_loads(rng):
    dump = make_dump(rng)
    loaded = load_dump(write_dump(dump))
    assert loaded.cross_attention is None
    assert loaded.head_sensitivity is None
    assert loaded.loss is None


def test_bad_magic_rejected(rng):
    raw = bytearray(write_dump(make_dump(rng)))
    raw[:4] = b"NOPE"
    with pytest.raises(DumpFormatError, match="magic"):
        load_dump(bytes(raw))


def test_truncated_payload_rejected(rng):
    raw = write_dump(make_dump(rng))
    with pytest.raises(DumpFormatError, match="truncat"):
        load_dump(raw[:-8])


def test_header_length_beyond_container_rejected(rng):
    raw = bytearray(write_dump(make_dump(rng)))
    struct.pack_into("<Q", raw, len(MAGIC), 2**40)
    with pytest.raises(DumpFormatError, match="header length"):
        load_dump(bytes(raw))


def test_garbage_header_rejected(rng):
    raw = bytearray(write_dump(make_dump(rng)))
    raw[len(MAGIC) + 8] = 0xFF
    with pytest.raises(DumpFormatError, match="JSON"):
        load_dump(bytes(raw))


def _header_and_payload(raw: bytes):
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(raw[start : start + header_len])
    return header, raw[start + header_len :]


def _rebuild(header: dict, payload: bytes) -> bytes:
    blob = json.dumps(header).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(blob)) + blob + payload


def test_shape_mismatch_rejected(rng):
    raw = write_dump(make_dump(rng))
    header, payload = _header_and_payload(raw)
    header["seq"] = header["seq"] + 1
    header["tokens"] = header["tokens"] + ["extra"]
    with pytest.raises(DumpFormatError, match="shape"):
        load_dump(_rebuild(header, payload))


def test_token_count_mismatch_rejected(rng):
    raw = write_dump(make_dump(rng))
    header, payload = _header_and_payload(raw)
    header["tokens"] = header["tokens"][:-1]
    with pytest.raises(DumpFormatError, match="tokens"):
        load_dump(_rebuild(header, payload))


def test_unknown_section_rejected(rng):
    raw = write_dump(make_dump(rng))
    header, payload = _header_and_payload(raw)
    header["sections"].append({"name": "mystery", "shape": [1], "offset": 0})
    with pytest.raises(DumpFormatError, match="unknown section"):
        load_dump(_rebuild(header, payload))


def test_row_sum_violation_rejected(rng):
    dump = make_dump(rng)
    bad = dump.enc_attention.copy()
    bad[0, 0, 0, :] = 0.2  # rows sum to 0.2 * seq != 1 for seq=2 -> 0.4
    broken = AttentionDump(
        instance_id=dump.instance_id,
        plan=dump.plan,
        tokens=dump.tokens,
        enc_attention=bad,
        hidden=dump.hidden,
    )
    with pytest.raises(DumpFormatError, match="sum to 1"):
        load_dump(write_dump(broken))


def test_negative_attention_rejected(rng):
    dump = make_dump(rng)
    bad = dump.enc_attention.copy()
    bad[0, 0, 0, 0] = -0.1
    bad[0, 0, 0, 1] = 1.1
    broken = AttentionDump(
        instance_id=dump.instance_id,
        plan=dump.plan,
        tokens=dump.tokens,
        enc_attention=bad,
        hidden=dump.hidden,
    )
    with pytest.raises(DumpFormatError, match="negative"):
        load_dump(write_dump(broken))


def test_negative_sensitivity_rejected(rng):
    dump = make_dump(rng, with_sens=True)
    dump.head_sensitivity[0, 0] = -1.0
    with pytest.raises(DumpFormatError, match="non-negative"):
        load_dump(write_dump(dump))


def test_missing_concept_token_rejected(rng):
    dump = make_dump(rng, plan=("tea", "glass"))
    broken = AttentionDump(
        instance_id=dump.instance_id,
        plan=("tea", "coffee"),
        tokens=dump.tokens,
        enc_attention=dump.enc_attention,
        hidden=dump.hidden,
    )
    with pytest.raises(DumpFormatError, match="lemmatization"):
        load_dump(write_dump(broken))


def test_file_round_trip(tmp_path, rng):
    dump = make_dump(rng, with_cross=True)
    path = tmp_path / "dump.plgd"
    write_dump_file(dump, str(path))
    loaded = load_dump_file(str(path))
    np.testing.assert_array_equal(loaded.enc_attention, dump.enc_attention)
