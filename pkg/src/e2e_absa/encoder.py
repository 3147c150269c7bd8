"""Toy BERT-style contextual encoder: summed embeddings and a transformer stack."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Layout, Module, TransformerLayer, normal


class VocabularyError(IndexError):
    def __init__(self, kind: str, index: int, limit: int):
        super().__init__(f"{kind} id {index} out of range [0, {limit})")
        self.index = index


@dataclass
class EncoderConfig:
    vocab_size: int
    max_len: int = 64
    num_layers: int = 2
    dim_h: int = 32
    num_attn_heads: int = 4
    ffn_dim: int | None = None  # defaults to 4 * dim_h
    num_segments: int = 1
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.dim_h
        if self.dim_h % self.num_attn_heads:
            raise ValueError(f"dim_h={self.dim_h} not divisible by num_attn_heads={self.num_attn_heads}")

    def to_dict(self) -> dict:
        return asdict(self)


class Encoder(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        c = config
        self.params["token_emb"] = normal(rng, (c.vocab_size, c.dim_h))
        self.params["pos_emb"] = normal(rng, (c.max_len, c.dim_h))
        self.params["seg_emb"] = normal(rng, (c.num_segments, c.dim_h))
        self.layers = [
            TransformerLayer(c.dim_h, c.num_attn_heads, c.ffn_dim, rng, c.ln_eps) for _ in range(c.num_layers)
        ]
        for i, layer in enumerate(self.layers):
            self.children[f"layer{i}"] = layer
        self.frozen = False

    def freeze(self, frozen: bool = True) -> None:
        self.frozen = frozen
        self.set_requires_grad(not frozen)

    def embed(self, token_ids, segment_ids=None, positions=None) -> Tensor:
        """Token + position + segment embedding for each (packed) row."""
        c = self.config
        token_ids = np.asarray(token_ids, dtype=np.intp).reshape(-1)
        segment_ids = np.zeros_like(token_ids) if segment_ids is None else np.asarray(segment_ids, dtype=np.intp).reshape(-1)
        positions = np.arange(len(token_ids)) if positions is None else np.asarray(positions, dtype=np.intp)
        for kind, ids, limit in (
            ("token", token_ids, c.vocab_size),
            ("segment", segment_ids, c.num_segments),
            ("position", positions, c.max_len),
        ):
            bad = ids[(ids < 0) | (ids >= limit)]
            if bad.size:
                raise VocabularyError(kind, int(bad[0]), limit)
        p = self.params
        return ad.add(
            ad.add(ad.take_rows(p["token_emb"], token_ids), ad.take_rows(p["pos_emb"], positions)),
            ad.take_rows(p["seg_emb"], segment_ids),
        )

    def encode(self, token_ids, segment_ids=None, layout: Layout | Sequence[int] | None = None) -> Tensor:
        """Contextual representations for every packed row.

        ``layout`` may be a single-sentence mask; ``token_ids`` is then a flat
        sequence of that sentence's ids.
        """
        token_ids = np.asarray(token_ids, dtype=np.intp)
        if layout is None:
            layout = Layout.from_mask(np.ones(token_ids.size, dtype=np.int8))
        elif not isinstance(layout, Layout):
            layout = Layout.from_mask(layout)
        h = self.embed(token_ids.reshape(-1), None if segment_ids is None else segment_ids, layout.positions)
        if not self.layers:
            return h
        bias = layout.attention_bias()
        for layer in self.layers:
            h = layer(h, layout, bias)
        return h

    __call__ = encode
