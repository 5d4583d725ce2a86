"""Miniature transformer encoder-decoder with inspectable attention.

Word-level vocabulary, learned positional embeddings, and a custom
multi-head attention that exposes per-head attention probabilities.
Encoder self-attention heads carry multiplicative mask scalars (one per
layer/head, all 1.0 in normal operation); the gradient of the generation
loss with respect to those masks is the head-sensitivity signal.
"""

from __future__ import annotations

import math
import string
from dataclasses import asdict, dataclass, field

import torch
from torch import nn

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>"]

_PUNCT = string.punctuation


def word_tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.split():
        tok = raw.strip(_PUNCT).lower()
        if tok:
            tokens.append(tok)
    return tokens


class Vocab:
    def __init__(self, words: list[str]):
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}

    @classmethod
    def build(cls, texts: list[str]) -> "Vocab":
        seen: dict[str, None] = {}
        for text in texts:
            for tok in word_tokenize(text):
                seen.setdefault(tok)
        return cls(SPECIALS + sorted(seen))

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.index.get(t, UNK) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.words[i] for i in ids if i not in (PAD, BOS, EOS)]


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 32
    heads: int = 2
    layers: int = 2
    ffn: int = 64
    max_len: int = 48

    def to_dict(self) -> dict:
        return asdict(self)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention returning per-head probabilities."""

    def __init__(self, d_model: int, heads: int):
        super().__init__()
        assert d_model % heads == 0
        self.heads = heads
        self.d_head = d_model // heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, query, key, value, attn_mask=None, head_mask=None):
        b, t, _ = query.shape
        s = key.shape[1]

        def split(x, length):
            return x.view(b, length, self.heads, self.d_head).transpose(1, 2)

        q = split(self.q_proj(query), t)
        k = split(self.k_proj(key), s)
        v = split(self.v_proj(value), s)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if attn_mask is not None:
            scores = scores + attn_mask
        probs = torch.softmax(scores, dim=-1)  # [b, heads, t, s]
        context = probs @ v
        if head_mask is not None:
            context = context * head_mask.view(1, self.heads, 1, 1)
        merged = context.transpose(1, 2).reshape(b, t, -1)
        return self.out_proj(merged), probs


class EncoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.attn = MultiHeadAttention(config.d_model, config.heads)
        self.ffn = nn.Sequential(
            nn.Linear(config.d_model, config.ffn),
            nn.ReLU(),
            nn.Linear(config.ffn, config.d_model),
        )
        self.norm1 = nn.LayerNorm(config.d_model)
        self.norm2 = nn.LayerNorm(config.d_model)

    def forward(self, x, head_mask):
        attn_out, probs = self.attn(x, x, x, head_mask=head_mask)
        x = self.norm1(x + attn_out)
        x = self.norm2(x + self.ffn(x))
        return x, probs


class DecoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(config.d_model, config.heads)
        self.cross_attn = MultiHeadAttention(config.d_model, config.heads)
        self.ffn = nn.Sequential(
            nn.Linear(config.d_model, config.ffn),
            nn.ReLU(),
            nn.Linear(config.ffn, config.d_model),
        )
        self.norm1 = nn.LayerNorm(config.d_model)
        self.norm2 = nn.LayerNorm(config.d_model)
        self.norm3 = nn.LayerNorm(config.d_model)

    def forward(self, x, memory, causal_mask):
        self_out, _ = self.self_attn(x, x, x, attn_mask=causal_mask)
        x = self.norm1(x + self_out)
        cross_out, cross_probs = self.cross_attn(x, memory, memory)
        x = self.norm2(x + cross_out)
        x = self.norm3(x + self.ffn(x))
        return x, cross_probs


class MiniSeq2Seq(nn.Module):
    """Encoder-decoder over word ids; exposes attention internals.

    ``head_masks`` multiplies each encoder self-attention head's output;
    it stays at 1.0 and is excluded from optimization. Its gradient is
    the expected-sensitivity signal for head importance.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.token_embed = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_embed = nn.Embedding(config.max_len, config.d_model)
        self.enc_layers = nn.ModuleList(
            EncoderLayer(config) for _ in range(config.layers)
        )
        self.dec_layers = nn.ModuleList(
            DecoderLayer(config) for _ in range(config.layers)
        )
        self.lm_head = nn.Linear(config.d_model, config.vocab_size)
        self.head_masks = nn.Parameter(
            torch.ones(config.layers, config.heads), requires_grad=True
        )

    def trainable_parameters(self):
        return (p for n, p in self.named_parameters() if n != "head_masks")

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        return self.token_embed(ids) + self.pos_embed(positions)[None, :, :]

    def encode(self, src_ids: torch.Tensor):
        """Returns (memory, hidden_per_level, attn_probs_per_layer)."""
        x = self._embed(src_ids)
        hiddens = [x]
        all_probs = []
        for layer_idx, layer in enumerate(self.enc_layers):
            x, probs = layer(x, self.head_masks[layer_idx])
            hiddens.append(x)
            all_probs.append(probs)
        return x, hiddens, all_probs

    def decode(self, tgt_in_ids: torch.Tensor, memory: torch.Tensor):
        """Returns (logits, cross_probs_per_layer)."""
        t = tgt_in_ids.shape[1]
        causal = torch.full((t, t), float("-inf"), device=tgt_in_ids.device)
        causal = torch.triu(causal, diagonal=1)
        x = self._embed(tgt_in_ids)
        cross_all = []
        for layer in self.dec_layers:
            x, cross_probs = layer(x, memory, causal)
            cross_all.append(cross_probs)
        return self.lm_head(x), cross_all

    def forward(self, src_ids: torch.Tensor, tgt_in_ids: torch.Tensor):
        memory, _, _ = self.encode(src_ids)
        logits, _ = self.decode(tgt_in_ids, memory)
        return logits

    def sequence_loss(
        self, src_ids: torch.Tensor, tgt_ids: torch.Tensor
    ) -> torch.Tensor:
        """Summed token NLL of the target given the source, per batch."""
        bos = torch.full_like(tgt_ids[:, :1], BOS)
        tgt_in = torch.cat([bos, tgt_ids[:, :-1]], dim=1)
        logits = self.forward(src_ids, tgt_in)
        return nn.functional.cross_entropy(
            logits.reshape(-1, logits.shape[-1]),
            tgt_ids.reshape(-1),
            ignore_index=PAD,
            reduction="sum",
        )


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocab
    model: MiniSeq2Seq
    model_tag: str
    meta: dict = field(default_factory=dict)

    def save(self, path: str) -> None:
        torch.save(
            {
                "config": self.config.to_dict(),
                "vocab": self.vocab.words,
                "state": self.model.state_dict(),
                "model_tag": self.model_tag,
                "meta": self.meta,
            },
            path,
        )

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        config = ModelConfig(**payload["config"])
        vocab = Vocab(payload["vocab"])
        model = MiniSeq2Seq(config)
        model.load_state_dict(payload["state"])
        model.eval()
        return cls(
            config=config,
            vocab=vocab,
            model=model,
            model_tag=payload["model_tag"],
            meta=payload.get("meta", {}),
        )
