"""HTTP serving layer implementing the generation wire protocol.

POST /generate -> {"text", "token_logprobs", "model_tag"}
POST /dump     -> binary tensor container
GET  /healthz  -> {"model_tag"}

Malformed requests get 400 with {"error": ...}; model failures get 500.
Model invocations are serialized behind a lock: concurrent requests all
complete, payloads never interleave.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .decode import beam_search
from .dumps import build_container
from .model import BOS, Checkpoint

MODES = ("draft", "planned")


@dataclass
class ServingConfig:
    checkpoints: dict[str, str]  # mode -> checkpoint path
    beam_size: int = 5
    max_len: int = 24
    model_tag: str | None = None  # default: checkpoint tag + decode settings

    def __post_init__(self):
        unknown = set(self.checkpoints) - set(MODES)
        if unknown:
            raise ValueError(f"unknown modes in checkpoint map: {sorted(unknown)}")
        if not self.checkpoints:
            raise ValueError("at least one mode checkpoint is required")


@dataclass
class ModelService:
    config: ServingConfig
    _by_mode: dict[str, Checkpoint] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        by_path: dict[str, Checkpoint] = {}
        for mode, path in self.config.checkpoints.items():
            if path not in by_path:
                by_path[path] = Checkpoint.load(path)
            self._by_mode[mode] = by_path[path]

    @property
    def model_tag(self) -> str:
        if self.config.model_tag:
            return self.config.model_tag
        tags = sorted({c.model_tag for c in self._by_mode.values()})
        return "+".join(tags) + f"-beam{self.config.beam_size}"

    def _checkpoint(self, mode: str) -> Checkpoint:
        if mode in self._by_mode:
            return self._by_mode[mode]
        # single-checkpoint deployments serve both modes
        return next(iter(self._by_mode.values()))

    def generate(self, concepts: list[str], mode: str) -> dict:
        checkpoint = self._checkpoint(mode)
        src = torch.tensor([checkpoint.vocab.encode(concepts)], dtype=torch.long)
        with self._lock:
            result = beam_search(
                checkpoint.model, src,
                beam_size=self.config.beam_size, max_len=self.config.max_len,
            )
        words = checkpoint.vocab.decode(result.token_ids)
        text = " ".join(words) if words else " ".join(concepts)
        return {
            "text": text,
            "token_logprobs": result.token_logprobs,
            "model_tag": self.model_tag,
        }

    def dump_bytes(self, concepts: list[str], mode: str) -> bytes:
        checkpoint = self._checkpoint(mode)
        model = checkpoint.model
        src = torch.tensor([checkpoint.vocab.encode(concepts)], dtype=torch.long)
        with self._lock:
            result = beam_search(
                checkpoint.model, src,
                beam_size=self.config.beam_size, max_len=self.config.max_len,
            )
            with torch.no_grad():
                memory, hiddens, enc_probs = model.encode(src)
                tgt_in = torch.tensor(
                    [[BOS] + result.token_ids], dtype=torch.long
                )
                _, cross_probs = model.decode(tgt_in, memory)
        enc_attn = torch.stack([p[0] for p in enc_probs]).numpy()
        hidden = torch.stack([h[0] for h in hiddens]).numpy()
        cross = torch.stack([p[0] for p in cross_probs]).numpy()
        # one label per decoder input position, specials kept
        out_tokens = [
            checkpoint.vocab.words[i] for i in [BOS] + result.token_ids
        ]
        # permutation-independent id so all dumps of one concept set
        # group together downstream
        return build_container(
            instance_id="-".join(sorted(concepts)),
            plan=list(concepts),
            tokens=list(concepts),
            enc_attn=enc_attn,
            hidden=hidden,
            cross_attn=cross,
            out_tokens=out_tokens,
        )


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": message})


def _validated_concepts(payload: dict) -> tuple[list[str] | None, str | None]:
    concepts = payload.get("concepts")
    if (
        not isinstance(concepts, list)
        or not concepts
        or not all(isinstance(c, str) and c for c in concepts)
    ):
        return None, "concepts must be a non-empty list of strings"
    mode = payload.get("mode", "draft")
    if mode not in MODES:
        return None, f"mode must be one of {list(MODES)}, got {mode!r}"
    return [c.lower() for c in concepts], mode


def make_app(service: ModelService) -> FastAPI:
    app = FastAPI(title="plangen-service", docs_url=None, redoc_url=None)

    @app.get("/healthz")
    def healthz():
        return {"model_tag": service.model_tag}

    @app.post("/generate")
    async def generate(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _bad_request("body is not valid JSON")
        if not isinstance(payload, dict):
            return _bad_request("body must be a JSON object")
        validated = _validated_concepts(payload)
        if validated[0] is None:
            return _bad_request(validated[1])
        concepts, mode = validated
        want_logprobs = bool(payload.get("want_logprobs", False))
        try:
            result = service.generate(concepts, mode)
        except Exception as exc:  # noqa: BLE001 - mapped to 500 per protocol
            return JSONResponse(status_code=500, content={"error": str(exc)})
        if not want_logprobs:
            result = {**result, "token_logprobs": None}
        return result

    @app.post("/dump")
    async def dump(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _bad_request("body is not valid JSON")
        if not isinstance(payload, dict):
            return _bad_request("body must be a JSON object")
        validated = _validated_concepts(payload)
        if validated[0] is None:
            return _bad_request(validated[1])
        concepts, mode = validated
        try:
            body = service.dump_bytes(concepts, mode)
        except Exception as exc:  # noqa: BLE001
            return JSONResponse(status_code=500, content={"error": str(exc)})
        return Response(content=body, media_type="application/octet-stream")

    return app


def serve(config: ServingConfig, host: str = "127.0.0.1", port: int = 8080):
    """Blocking entry point used by the CLI."""
    import uvicorn

    app = make_app(ModelService(config))
    uvicorn.run(app, host=host, port=port, log_level="warning")
