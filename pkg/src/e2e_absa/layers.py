"""Shared building blocks: parameter containers, packed-batch layout, attention.

A batch of ``B`` sentences padded to ``T_max`` is processed as one
``(B*T_max) x d`` matrix. Attention keeps sentences apart with an additive
bias that is ``-1e9`` for keys in another sentence or at masked positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor

MASK_VALUE = -1e9
INIT_STD = 0.02


class Module:
    """Named leaf tensors plus child modules."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.children: dict[str, Module] = {}

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self.params.items():
            yield prefix + name, p
        for cname, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag
            p.grad = np.zeros_like(p.data) if flag else None


def normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


@dataclass
class Layout:
    """Where each row of a packed ``(B*T_max) x d`` matrix comes from."""

    key_mask: np.ndarray  # [B, T_max] of {0, 1}

    @classmethod
    def from_mask(cls, mask: Sequence[int]) -> "Layout":
        return cls(np.asarray(mask, dtype=np.int8).reshape(1, -1))

    @classmethod
    def from_lengths(cls, lengths: Sequence[int]) -> "Layout":
        lengths = np.asarray(lengths)
        t_max = int(lengths.max()) if len(lengths) else 0
        return cls((np.arange(t_max)[None, :] < lengths[:, None]).astype(np.int8))

    @property
    def batch_size(self) -> int:
        return self.key_mask.shape[0]

    @property
    def t_max(self) -> int:
        return self.key_mask.shape[1]

    @property
    def n_rows(self) -> int:
        return self.key_mask.size

    @property
    def flat_mask(self) -> np.ndarray:
        return self.key_mask.reshape(-1)

    @property
    def positions(self) -> np.ndarray:
        return np.tile(np.arange(self.t_max), self.batch_size)

    def attention_bias(self) -> np.ndarray:
        if np.any(self.key_mask.sum(axis=1) == 0):
            raise ContractError("every sentence needs at least one unmasked position")
        sent = np.repeat(np.arange(self.batch_size), self.t_max)
        ok = (sent[:, None] == sent[None, :]) & (self.flat_mask[None, :] == 1)
        return np.where(ok, 0.0, MASK_VALUE)

    def time_rows(self, t: int) -> np.ndarray:
        """Row indices of position ``t`` in every sentence."""
        return np.arange(self.batch_size) * self.t_max + t


def self_attention(q: Tensor, k: Tensor, v: Tensor, bias: np.ndarray, n_heads: int) -> Tensor:
    """Multi-head scaled dot-product attention over packed rows."""
    d = q.shape[1]
    if d % n_heads:
        raise ValueError(f"width {d} not divisible by {n_heads} heads")
    dk = d // n_heads
    scale = 1.0 / np.sqrt(dk)
    outs = []
    for h in range(n_heads):
        sl = slice(h * dk, (h + 1) * dk)
        qh = ad.slice_cols(q, sl.start, sl.stop) if n_heads > 1 else q
        kh = ad.slice_cols(k, sl.start, sl.stop) if n_heads > 1 else k
        vh = ad.slice_cols(v, sl.start, sl.stop) if n_heads > 1 else v
        scores = ad.add(ad.scale(ad.matmul(qh, ad.transpose(kh)), scale), bias)
        outs.append(ad.matmul(ad.softmax_rows(scores), vh))
    return outs[0] if n_heads == 1 else ad.concat_cols(outs)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = ad.matmul(x, w)
    return y if b is None else ad.add(y, b)


class TransformerLayer(Module):
    """Post-LN encoder layer: attention + residual + LN, then FFN + residual + LN."""

    def __init__(self, dim: int, n_heads: int, ffn_dim: int, rng: np.random.Generator, eps: float = 1e-5):
        super().__init__()
        if dim % n_heads:
            raise ValueError(f"dim_h={dim} not divisible by num_attn_heads={n_heads}")
        self.n_heads = n_heads
        self.eps = eps
        p = self.params
        for name in ("wq", "wk", "wv", "wo"):
            p[name] = normal(rng, (dim, dim))
            p["b" + name[1]] = zeros(dim)
        p["ln1_g"], p["ln1_b"] = ones(dim), zeros(dim)
        p["w1"], p["b1"] = normal(rng, (dim, ffn_dim)), zeros(ffn_dim)
        p["w2"], p["b2"] = normal(rng, (ffn_dim, dim)), zeros(dim)
        p["ln2_g"], p["ln2_b"] = ones(dim), zeros(dim)

    def attend(self, h: Tensor, bias: np.ndarray) -> Tensor:
        p = self.params
        att = self_attention(
            linear(h, p["wq"], p["bq"]),
            linear(h, p["wk"], p["bk"]),
            linear(h, p["wv"], p["bv"]),
            bias,
            self.n_heads,
        )
        return ad.layer_norm(ad.add(h, linear(att, p["wo"], p["bo"])), p["ln1_g"], p["ln1_b"], self.eps)

    def ffn(self, h: Tensor) -> Tensor:
        p = self.params
        return linear(ad.gelu(linear(h, p["w1"], p["b1"])), p["w2"], p["b2"])

    def forward(self, h: Tensor, layout: Layout | Sequence[int], bias: np.ndarray | None = None) -> Tensor:
        if not isinstance(layout, Layout):
            layout = Layout.from_mask(layout)
        if bias is None:
            bias = layout.attention_bias()
        hat = self.attend(h, bias)
        return ad.layer_norm(ad.add(hat, self.ffn(hat)), self.params["ln2_g"], self.params["ln2_b"], self.eps)

    __call__ = forward
