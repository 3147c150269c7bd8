"""Span-level micro precision / recall / F1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .tagging import AspectSpan


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "EvalReport":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(tp, fp, fn, p, r, f)

    def line(self) -> str:
        return f"P={self.precision:.4f} R={self.recall:.4f} F1={self.f1:.4f}"

    def key_values(self) -> str:
        return "\n".join(
            [
                f"tp={self.tp}",
                f"fp={self.fp}",
                f"fn={self.fn}",
                f"precision={self.precision!r}",
                f"recall={self.recall!r}",
                f"f1={self.f1!r}",
            ]
        )


def micro_prf(
    gold: Sequence[Sequence[AspectSpan]], pred: Sequence[Sequence[AspectSpan]]
) -> EvalReport:
    """Pool exact (start, end, sentiment) matches over all sentences.

    Duplicate predictions within a sentence count once.
    """
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sentences but pred has {len(pred)}")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        gs = {tuple(s) for s in g}
        ps = {tuple(s) for s in p}
        hit = len(gs & ps)
        tp += hit
        fp += len(ps) - hit
        fn += len(gs) - hit
    return EvalReport.from_counts(tp, fp, fn)
