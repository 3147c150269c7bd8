"""Template-generated review sentences with aspect/sentiment annotations.

Aspect words carry no sentiment on their own; the polarity comes from the
opinion word attached to them, so tagging needs context.
"""

from __future__ import annotations

import numpy as np

from .corpus import Example
from .tagging import AspectSpan

ASPECTS = (
    ("food",), ("service",), ("pizza",), ("staff",), ("wine",), ("price",),
    ("battery", "life"), ("wine", "list"), ("delivery", "time"),
)
OPINIONS = {
    "POS": ("great", "excellent", "friendly"),
    "NEG": ("dreadful", "terrible", "slow"),
    "NEU": ("average", "okay", "standard"),
}
SENTIMENTS = tuple(OPINIONS)

# A / O mark aspect and opinion slots; templates with two pairs use A2 / O2
TEMPLATES = (
    ("the", "A", "was", "O", "."),
    ("the", "A", "is", "O", "."),
    ("O", "A", "but", "the", "A2", "is", "O2", "."),
    ("i", "thought", "the", "A", "was", "O", "."),
    ("O", "A", "."),
    ("the", "A", "is", "O", "and", "the", "A2", "is", "O2", "."),
    ("we", "found", "the", "A", "rather", "O", "."),
    ("nothing", "special", "here", "."),
)


def generate(n: int, seed: int = 0) -> list[Example]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        picks = {}
        for slot in ("", "2"):
            picks["A" + slot] = ASPECTS[rng.integers(len(ASPECTS))]
            sent = SENTIMENTS[rng.integers(len(SENTIMENTS))]
            picks["S" + slot] = sent
            picks["O" + slot] = OPINIONS[sent][rng.integers(len(OPINIONS[sent]))]
        tokens: list[str] = []
        spans = []
        for piece in template:
            if piece in ("A", "A2"):
                words = picks[piece]
                spans.append(AspectSpan(len(tokens), len(tokens) + len(words) - 1, picks["S" + piece[1:]]))
                tokens.extend(words)
            elif piece in ("O", "O2"):
                tokens.append(picks[piece])
            else:
                tokens.append(piece)
        out.append(Example(tokens, spans))
    return out


def showcase_sentence() -> Example:
    """``Great food but the service is dreadful .`` with its two gold aspects."""
    return Example("Great food but the service is dreadful .".split(),
                   [AspectSpan(1, 1, "POS"), AspectSpan(4, 4, "NEG")])


def splits(n_train: int = 30, n_dev: int = 30, n_test: int = 30, seed: int = 0):
    """Disjoint-seed train / dev / test draws from the same generator."""
    return generate(n_train, seed), generate(n_dev, seed + 1000), generate(n_test, seed + 2000)


def write_splits(directory, n_train: int = 30, n_dev: int = 30, n_test: int = 30, seed: int = 0) -> None:
    """Write ``train/dev/test.conll`` under ``directory``."""
    from pathlib import Path

    from .corpus import write_conll

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, examples in zip(("train", "dev", "test"), splits(n_train, n_dev, n_test, seed)):
        write_conll(examples, out / f"{name}.conll")
