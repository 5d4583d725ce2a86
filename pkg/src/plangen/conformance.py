"""Wire-protocol conformance checks for generator services.

Drives a live endpoint through the /healthz, /generate and /dump
surfaces and validates every reply against the client contract: shapes,
log-probability domain, dump container structure, row-stochastic
attention, and 4xx error mapping for malformed requests. The primary
test suite runs this against an in-process stub; a real serving process
must pass the identical checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import requests

from .dumpio import load_dump
from .errors import DumpFormatError, GeneratorError, ProtocolError
from .genclient import GeneratorRequest, RemoteGenerator, ServiceAddress


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def run_conformance_suite(
    base_url: str,
    concepts: Sequence[str] = ("pitcher", "throw", "ball", "batter"),
    timeout: float = 30.0,
) -> list[CheckResult]:
    """Exercise every protocol surface; returns one result per check."""
    address = ServiceAddress(base_url=base_url, retries=0, timeout=timeout)
    client = RemoteGenerator(address)
    results: list[CheckResult] = []

    def check(name: str, fn) -> None:
        try:
            detail = fn() or ""
            results.append(CheckResult(name, True, detail))
        except Exception as exc:  # noqa: BLE001 - report, never raise
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))

    def healthz():
        tag = client.healthz()
        if not tag:
            raise ProtocolError("healthz returned an empty model_tag")
        return f"model_tag={tag}"

    def generate_with_logprobs():
        resp = client.generate(
            GeneratorRequest(tuple(concepts), mode="planned", want_logprobs=True)
        )
        if resp.token_logprobs is None:
            raise ProtocolError("token_logprobs missing")
        if any(lp > 0 for lp in resp.token_logprobs):
            raise ProtocolError("positive token log-probability")
        return f"text={resp.text[:40]!r} tokens={len(resp.token_logprobs)}"

    def generate_without_logprobs():
        resp = client.generate(
            GeneratorRequest(tuple(concepts), mode="draft", want_logprobs=False)
        )
        if not resp.text:
            raise ProtocolError("empty text")
        return ""

    def generate_deterministic_scoring():
        first = client.generate(
            GeneratorRequest(tuple(concepts), mode="planned", want_logprobs=True)
        )
        second = client.generate(
            GeneratorRequest(tuple(concepts), mode="planned", want_logprobs=True)
        )
        if first.text != second.text:
            raise ProtocolError("identical requests produced different text")
        return ""

    def empty_concepts_rejected():
        resp = requests.post(
            base_url.rstrip("/") + "/generate",
            json={"concepts": [], "mode": "draft", "want_logprobs": True},
            timeout=timeout,
        )
        if resp.status_code != 400:
            raise ProtocolError(
                f"empty concepts should give 400, got {resp.status_code}"
            )
        if "error" not in resp.json():
            raise ProtocolError("400 reply is missing the error field")
        return ""

    def bad_mode_rejected():
        resp = requests.post(
            base_url.rstrip("/") + "/generate",
            json={"concepts": list(concepts), "mode": "bogus",
                  "want_logprobs": True},
            timeout=timeout,
        )
        if resp.status_code != 400:
            raise ProtocolError(
                f"bad mode should give 400, got {resp.status_code}"
            )
        return ""

    def dump_container():
        raw = client.dump(concepts, mode="draft")
        dump = load_dump(raw)  # validates shapes and row sums
        if set(dump.plan) != set(concepts):
            raise DumpFormatError(
                f"dump plan {dump.plan} does not match requested concepts"
            )
        return (
            f"L={dump.layers} H={dump.heads} S={dump.seq} d={dump.dim} "
            f"cross={'yes' if dump.cross_attention is not None else 'no'}"
        )

    check("healthz", healthz)
    check("generate_with_logprobs", generate_with_logprobs)
    check("generate_without_logprobs", generate_without_logprobs)
    check("generate_deterministic_scoring", generate_deterministic_scoring)
    check("empty_concepts_rejected", empty_concepts_rejected)
    check("bad_mode_rejected", bad_mode_rejected)
    check("dump_container", dump_container)
    return results


def assert_conformant(base_url: str, **kwargs) -> list[CheckResult]:
    """Run the suite and raise on the first failure; for use in tests."""
    results = run_conformance_suite(base_url, **kwargs)
    failed = [r for r in results if not r.ok]
    if failed:
        lines = "; ".join(f"{r.name}: {r.detail}" for r in failed)
        raise GeneratorError(f"conformance failures: {lines}")
    return results
