"""Central finite-difference checks of the analytic gradients."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

STEP = 1e-6
# entries whose true gradient is ~0 would otherwise turn round-off into huge ratios
REL_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    """Max over entries of ``|a - n| / max(|a|, |n|, floor)``."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_grad(fn: Callable[[], float], x: Tensor, h: float = STEP) -> np.ndarray:
    g = np.zeros_like(x.data)
    flat, gflat = x.data.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn()
        flat[i] = orig - h
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = STEP,
          corrupt: bool = False) -> float:
    """Max relative error between backprop and finite differences over ``params``.

    ``corrupt`` perturbs the analytic gradient (negative control).
    """
    ad.zero_grads(params)
    ad.backward(loss_fn())
    analytic = [p.grad.copy() for p in params]
    if corrupt:
        analytic[0].reshape(-1)[0] += 1.0 + abs(analytic[0].reshape(-1)[0])

    def value() -> float:
        with ad.no_grad():
            return float(loss_fn().data)

    worst = 0.0
    for p, a in zip(params, analytic):
        worst = max(worst, relative_error(a, numeric_grad(value, p, h)))
    return worst


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def suite(dim_h: int = 8, length: int = 5, seed: int = 0, tolerance: float = 1e-4,
          corrupt: str | None = None) -> list[CheckResult]:
    """Gradient checks of every head's training loss (encoder unfrozen) and the CRF.

    ``corrupt`` names a check whose analytic gradient is deliberately broken.
    """
    from .corpus import Example, make_batch
    from .encoder import EncoderConfig
    from .model import Tagger
    from .tagging import TAGS

    rng = np.random.default_rng(seed)
    vocab_size = 11
    lengths = [length, length - 2]
    examples = []
    for n in lengths:
        ex = Example([f"w{i}" for i in range(n)], [])
        ex.token_ids = list(rng.integers(2, vocab_size, size=n))
        ex.tag_ids = list(rng.integers(0, len(TAGS), size=n))
        examples.append(ex)
    batch = make_batch(examples)
    cfg = EncoderConfig(vocab_size=vocab_size, max_len=16, num_layers=1, dim_h=dim_h, num_attn_heads=2)

    results = []
    for variant in ("linear", "gru", "san", "tfm", "crf"):
        model = Tagger(cfg, variant, np.random.default_rng(seed + 1), dropout=0.0)
        # scale weights up from the tiny init so the check exercises non-trivial curvature
        for name, p in model.named_parameters():
            if p.data.ndim == 2 and "transitions" not in name:
                p.data *= 10.0
        if variant == "crf":
            groups = {
                "crf.emissions": [model.head.params["w_e"], model.head.params["b_e"]],
                "crf.transitions": [model.head.params["transitions"]],
                "crf.encoder": model.encoder.parameters(),
            }
        else:
            groups = {f"{variant}.head": model.head.parameters(), f"{variant}.encoder": model.encoder.parameters()}
        for name, params in groups.items():
            t0 = time.perf_counter()
            err = check(lambda: model.loss(batch), params, corrupt=(corrupt == name))
            results.append(CheckResult(name, err, tolerance, time.perf_counter() - t0))
    return results
