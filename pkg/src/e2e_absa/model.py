"""Encoder + tagging head, wired for batches."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Batch
from .crf import CRFHead
from .encoder import Encoder, EncoderConfig
from .heads import GRUHead, LinearHead, SANHead, TFMHead, token_nll
from .layers import Layout, Module
from .tagging import repair, tag_ids


def build_head(variant: str, dim: int, rng: np.random.Generator, *, head_attn_heads: int = 1,
               crf_constrained: bool = False, eps: float = 1e-5) -> Module:
    variant = variant.lower()
    if variant == "linear":
        return LinearHead(dim, rng)
    if variant == "gru":
        return GRUHead(dim, rng, eps=eps)
    if variant == "san":
        return SANHead(dim, rng, n_heads=head_attn_heads, eps=eps)
    if variant == "tfm":
        return TFMHead(dim, rng, n_heads=head_attn_heads, eps=eps)
    if variant == "crf":
        return CRFHead(dim, rng, constrained=crf_constrained)
    raise ValueError(f"unknown head variant {variant!r}; expected linear, gru, san, tfm or crf")


class Tagger(Module):
    def __init__(self, enc_config: EncoderConfig, head: str, rng: np.random.Generator, *,
                 dropout: float = 0.1, head_attn_heads: int = 1, crf_constrained: bool = False):
        super().__init__()
        self.enc_config = enc_config
        self.variant = head.lower()
        self.dropout = dropout
        self.encoder = Encoder(enc_config, rng)
        self.head = build_head(self.variant, enc_config.dim_h, rng, head_attn_heads=head_attn_heads,
                               crf_constrained=crf_constrained, eps=enc_config.ln_eps)
        self.children["encoder"] = self.encoder
        self.children["head"] = self.head

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def _encode(self, batch: Batch, rng: np.random.Generator | None) -> tuple[Tensor, Layout]:
        layout = Layout(batch.mask)
        h = self.encoder.encode(batch.token_ids, layout=layout)
        return ad.dropout(h, self.dropout, rng), layout

    def loss(self, batch: Batch, rng: np.random.Generator | None = None) -> Tensor:
        """Training loss; dropout is applied only when ``rng`` is given."""
        h, layout = self._encode(batch, rng)
        gold = batch.tag_ids.reshape(-1)
        if self.variant == "crf":
            return self.head.loss(h, gold, layout)
        return token_nll(self.head(h, layout), gold, layout.flat_mask)

    def predict(self, batch: Batch) -> list[list[str]]:
        """Repaired tag names for every sentence of the batch."""
        with ad.no_grad():
            h, layout = self._encode(batch, None)
            if self.variant == "crf":
                raw = self.head.decode(h, layout)
            else:
                best = self.head(h, layout).data.argmax(axis=1).reshape(layout.batch_size, layout.t_max)
                raw = [list(best[i, :n]) for i, n in enumerate(batch.lengths)]
        return [repair([int(t) for t in seq]) for seq in raw]

    def predict_ids(self, batch: Batch) -> list[list[int]]:
        return [tag_ids(seq) for seq in self.predict(batch)]
