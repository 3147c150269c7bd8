"""Token-level tagging layers over the encoder output.

Each head maps packed encoder rows ``H`` (``N x dim_h``) to per-row tag
distributions (``N x |Y|``). All share the output projection
``softmax(h W_o + b_o)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .layers import Layout, Module, TransformerLayer, linear, normal, ones, self_attention, zeros
from .tagging import NUM_TAGS

HEAD_VARIANTS = ("linear", "gru", "san", "tfm", "crf")


def _layout(layout) -> Layout:
    return layout if isinstance(layout, Layout) else Layout.from_mask(layout)


class TokenHead(Module):
    variant = ""

    def __init__(self, dim: int, rng: np.random.Generator, num_tags: int = NUM_TAGS):
        super().__init__()
        self.dim = dim
        self.params["w_o"] = normal(rng, (dim, num_tags))
        self.params["b_o"] = zeros(num_tags)

    def features(self, h: Tensor, layout: Layout) -> Tensor:
        return h

    def forward(self, h: Tensor, layout: Layout | Sequence[int] | None = None) -> Tensor:
        if layout is None:
            layout = Layout.from_mask(np.ones(h.shape[0], dtype=np.int8))
        feats = self.features(h, _layout(layout))
        return ad.softmax_rows(linear(feats, self.params["w_o"], self.params["b_o"]))

    __call__ = forward


class LinearHead(TokenHead):
    variant = "linear"


class GRUHead(TokenHead):
    """Left-to-right GRU whose gate pre-activations are layer-normalised.

    ``W_x, W_h`` are stored as ``2d x d`` (rows stack the reset and update
    gates); ``W_xn, W_hn`` as ``d x d``. Each of the four pre-activations has
    its own LN gain and bias; there are no other gate biases.
    """

    variant = "gru"

    def __init__(self, dim: int, rng: np.random.Generator, num_tags: int = NUM_TAGS, eps: float = 1e-5):
        super().__init__(dim, rng, num_tags)
        self.eps = eps
        p = self.params
        p["w_x"], p["w_h"] = normal(rng, (2 * dim, dim)), normal(rng, (2 * dim, dim))
        p["w_xn"], p["w_hn"] = normal(rng, (dim, dim)), normal(rng, (dim, dim))
        for site, width in (("x", 2 * dim), ("h", 2 * dim), ("xn", dim), ("hn", dim)):
            p[f"ln_{site}_g"], p[f"ln_{site}_b"] = ones(width), zeros(width)

    def _ln(self, x: Tensor, site: str) -> Tensor:
        return ad.layer_norm(x, self.params[f"ln_{site}_g"], self.params[f"ln_{site}_b"], self.eps)

    def features(self, h: Tensor, layout: Layout) -> Tensor:
        p, d = self.params, self.dim
        # input-side terms do not depend on the recurrence: compute for all rows at once
        gx = self._ln(ad.matmul(h, ad.transpose(p["w_x"])), "x")
        nx = self._ln(ad.matmul(h, ad.transpose(p["w_xn"])), "xn")
        w_h_t, w_hn_t = ad.transpose(p["w_h"]), ad.transpose(p["w_hn"])
        state = Tensor(np.zeros((layout.batch_size, d)))
        outs = []
        for t in range(layout.t_max):
            rows = layout.time_rows(t)
            gates = ad.sigmoid(ad.add(ad.take_rows(gx, rows), self._ln(ad.matmul(state, w_h_t), "h")))
            r, z = ad.slice_cols(gates, 0, d), ad.slice_cols(gates, d, 2 * d)
            n = ad.tanh(ad.add(ad.take_rows(nx, rows), ad.mul(r, self._ln(ad.matmul(state, w_hn_t), "hn"))))
            state = ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, state))
            outs.append(state)
        # time-major -> batch-major row order
        stacked = ad.concat_rows(outs)
        order = (np.arange(layout.t_max)[None, :] * layout.batch_size + np.arange(layout.batch_size)[:, None]).reshape(-1)
        return ad.take_rows(stacked, order)


class SANHead(TokenHead):
    """``LN(H + SelfAttention(H W^Q, H W^K, H W^V))``."""

    variant = "san"

    def __init__(self, dim: int, rng: np.random.Generator, num_tags: int = NUM_TAGS, n_heads: int = 1, eps: float = 1e-5):
        super().__init__(dim, rng, num_tags)
        self.n_heads = n_heads
        self.eps = eps
        p = self.params
        p["w_q"], p["w_k"], p["w_v"] = (normal(rng, (dim, dim)) for _ in range(3))
        p["ln_g"], p["ln_b"] = ones(dim), zeros(dim)

    def features(self, h: Tensor, layout: Layout) -> Tensor:
        p = self.params
        att = self_attention(
            ad.matmul(h, p["w_q"]), ad.matmul(h, p["w_k"]), ad.matmul(h, p["w_v"]),
            layout.attention_bias(), self.n_heads,
        )
        return ad.layer_norm(ad.add(h, att), p["ln_g"], p["ln_b"], self.eps)


class TFMHead(TokenHead):
    """One extra transformer encoder layer before the projection."""

    variant = "tfm"

    def __init__(self, dim: int, rng: np.random.Generator, num_tags: int = NUM_TAGS, n_heads: int = 1,
                 ffn_dim: int | None = None, eps: float = 1e-5):
        super().__init__(dim, rng, num_tags)
        self.layer = TransformerLayer(dim, n_heads, ffn_dim or 4 * dim, rng, eps)
        self.children["tfm"] = self.layer

    def features(self, h: Tensor, layout: Layout) -> Tensor:
        return self.layer(h, layout)


def token_nll(probs: Tensor, gold: Sequence[int], mask: Sequence[int] | None = None) -> Tensor:
    """Mean negative log-likelihood of the gold tags over unmasked rows."""
    gold = np.asarray(gold, dtype=np.intp).reshape(-1)
    mask = np.ones(len(gold), dtype=bool) if mask is None else np.asarray(mask).reshape(-1).astype(bool)
    if len(gold) != probs.shape[0] or len(mask) != len(gold):
        raise ContractError(f"{len(gold)} gold tags / {len(mask)} mask entries for {probs.shape[0]} rows")
    if np.any((gold < 0) | (gold >= probs.shape[1])):
        raise ContractError(f"gold tag index out of range [0, {probs.shape[1]})")
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ContractError("token_nll needs at least one unmasked position")
    return ad.scale(ad.mean(ad.log(ad.pick(probs, rows, gold[rows]))), -1.0)
