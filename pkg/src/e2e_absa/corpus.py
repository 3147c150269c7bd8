"""Dataset files, vocabulary, batching and corpus statistics.

Two on-disk formats are understood:

* CoNLL-style: one ``token<TAB>tag`` per line, blank line between sentences;
* JSON lines: ``{"tokens": [...], "spans": [[start, end, "POS"], ...]}`` per line.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tagging import (
    TAGS,
    AnnotationError,
    AspectSpan,
    first_violation,
    spans_to_tags,
    tag_ids,
    tags_to_spans,
)

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1


class CorpusError(ValueError):
    """Malformed dataset file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass
class Example:
    tokens: list[str]
    spans: list[AspectSpan]
    token_ids: list[int] = field(default_factory=list)
    tag_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.spans = [AspectSpan(int(s), int(e), str(p)) for s, e, p in self.spans]
        if not self.tag_ids:
            self.tag_ids = tag_ids(spans_to_tags(len(self.tokens), self.spans))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def tags(self) -> list[str]:
        return [TAGS[i] for i in self.tag_ids]


class Vocab:
    """Lower-cased token -> index map with ``<pad>`` = 0 and ``<unk>`` = 1."""

    def __init__(self, itos: Sequence[str]):
        if list(itos[:2]) != [PAD, UNK]:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        self.itos = list(itos)
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate entries in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token.lower(), UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index(t) for t in tokens]


def build_vocab(examples: Iterable[Example], min_freq: int = 1) -> Vocab:
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter(t.lower() for ex in examples for t in ex.tokens)
    kept = sorted((w for w, c in counts.items() if c >= min_freq and w not in (PAD, UNK)),
                  key=lambda w: (-counts[w], w))
    return Vocab([PAD, UNK] + kept)


def index_examples(examples: Iterable[Example], vocab: Vocab) -> list[Example]:
    return [replace(ex, token_ids=vocab.encode(ex.tokens)) for ex in examples]


def _check_length(tokens, max_len, line):
    if max_len is not None and len(tokens) > max_len:
        raise CorpusError(f"sentence of {len(tokens)} tokens exceeds max_len={max_len}", line)


def read_conll(path, max_len: int | None = None) -> list[Example]:
    examples: list[Example] = []
    tokens: list[str] = []
    tags: list[str] = []
    first_line = 0

    def flush():
        if not tokens:
            return
        bad = first_violation(tags)
        if bad is not None:
            raise CorpusError(f"invalid tag sequence at {tags[bad]!r}", first_line + bad)
        _check_length(tokens, max_len, first_line)
        examples.append(Example(list(tokens), tags_to_spans(tags)))
        tokens.clear()
        tags.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                flush()
                continue
            if line.startswith("#") and "\t" not in line:
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0]:
                raise CorpusError(f"expected 'token<TAB>tag', got {line!r}", lineno)
            if fields[1] not in TAGS:
                raise CorpusError(f"unknown tag {fields[1]!r}", lineno)
            if not tokens:
                first_line = lineno
            tokens.append(fields[0])
            tags.append(fields[1])
    flush()
    return examples


def render_conll(examples: Sequence[Example]) -> str:
    blocks = ["".join(f"{tok}\t{tag}\n" for tok, tag in zip(ex.tokens, ex.tags)) for ex in examples]
    return "\n".join(blocks)


def write_conll(examples: Sequence[Example], path) -> None:
    Path(path).write_text(render_conll(examples), encoding="utf-8")


def read_jsonl(path, max_len: int | None = None) -> list[Example]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tokens = [str(t) for t in rec["tokens"]]
                spans = [AspectSpan(int(s), int(e), str(p)) for s, e, p in rec.get("spans", [])]
            except (ValueError, KeyError, TypeError) as err:
                raise CorpusError(f"bad record: {err}", lineno) from None
            _check_length(tokens, max_len, lineno)
            try:
                examples.append(Example(tokens, spans))
            except AnnotationError as err:
                raise CorpusError(str(err), lineno) from None
    return examples


def write_jsonl(examples: Sequence[Example], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {"tokens": ex.tokens, "spans": [[s.start, s.end, s.sentiment] for s in ex.spans]}
            fh.write(json.dumps(rec) + "\n")


def load_examples(path, max_len: int | None = None) -> list[Example]:
    """Dispatch on extension: ``.jsonl``/``.json`` are JSON lines, anything else CoNLL."""
    if Path(path).suffix in (".jsonl", ".json"):
        return read_jsonl(path, max_len)
    return read_conll(path, max_len)


def stats(examples: Sequence[Example]) -> tuple[int, int]:
    """(number of sentences, number of gold aspect spans)."""
    return len(examples), sum(len(ex.spans) for ex in examples)


@dataclass
class Batch:
    token_ids: np.ndarray  # [B, T_max]
    mask: np.ndarray  # [B, T_max], 1 on real tokens
    tag_ids: np.ndarray  # [B, T_max], O on padding
    lengths: np.ndarray  # [B]
    examples: list[Example]

    @property
    def size(self) -> int:
        return len(self.lengths)

    @property
    def t_max(self) -> int:
        return self.token_ids.shape[1]


def make_batch(examples: Sequence[Example]) -> Batch:
    lengths = np.array([len(ex) for ex in examples], dtype=np.intp)
    t_max = int(lengths.max()) if len(lengths) else 0
    ids = np.zeros((len(examples), t_max), dtype=np.intp)
    tags = np.zeros((len(examples), t_max), dtype=np.intp)
    for i, ex in enumerate(examples):
        if len(ex.token_ids) != len(ex):
            raise ValueError("example has no token ids; run index_examples first")
        ids[i, : len(ex)] = ex.token_ids
        tags[i, : len(ex)] = ex.tag_ids
    mask = (np.arange(t_max)[None, :] < lengths[:, None]).astype(np.int8)
    return Batch(ids, mask, tags, lengths, list(examples))


def batch(examples: Sequence[Example], batch_size: int, shuffle_seed: int | None = None) -> list[Batch]:
    """Split into right-padded batches; the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(examples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(examples))
    return [
        make_batch([examples[i] for i in order[k : k + batch_size]])
        for k in range(0, len(examples), batch_size)
    ]
