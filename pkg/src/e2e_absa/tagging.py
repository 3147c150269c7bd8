"""BIOES x sentiment tag alphabet and span <-> tag conversion.

Index order is fixed: ``O`` first, then B/I/E/S for POS, NEG and NEU::

    0 O
    1 B-POS  2 I-POS  3 E-POS  4 S-POS
    5 B-NEG  6 I-NEG  7 E-NEG  8 S-NEG
    9 B-NEU 10 I-NEU 11 E-NEU 12 S-NEU
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

SENTIMENTS = ("POS", "NEG", "NEU")
POSITIONS = ("B", "I", "E", "S")

TAGS: tuple[str, ...] = ("O",) + tuple(f"{p}-{s}" for s in SENTIMENTS for p in POSITIONS)
TAG2IDX = {t: i for i, t in enumerate(TAGS)}
NUM_TAGS = len(TAGS)
O = 0


class AnnotationError(ValueError):
    """Spans overlap, are unsorted, or fall outside the sentence."""


class TagSequenceError(ValueError):
    """A tag sequence violates the BIOES grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position


class AspectSpan(NamedTuple):
    start: int
    end: int  # inclusive
    sentiment: str


def tag_index(tag: str) -> int:
    try:
        return TAG2IDX[tag]
    except KeyError:
        raise ValueError(f"unknown tag {tag!r}") from None


def split_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    pos, _, sent = tag.partition("-")
    return pos, sent


def _as_names(tags: Sequence) -> list[str]:
    return [TAGS[t] if not isinstance(t, str) else t for t in tags]


def spans_to_tags(length: int, spans: Sequence[AspectSpan]) -> list[str]:
    tags = ["O"] * length
    prev_end = -1
    for span in spans:
        start, end, sent = span
        if sent not in SENTIMENTS:
            raise AnnotationError(f"span ({start},{end}) has unknown sentiment {sent!r}")
        if not 0 <= start <= end < length:
            raise AnnotationError(f"span ({start},{end}) out of range for length {length}")
        if start <= prev_end:
            raise AnnotationError(f"span ({start},{end}) overlaps or precedes a span ending at {prev_end}")
        if start == end:
            tags[start] = f"S-{sent}"
        else:
            tags[start] = f"B-{sent}"
            for t in range(start + 1, end):
                tags[t] = f"I-{sent}"
            tags[end] = f"E-{sent}"
        prev_end = end
    return tags


def first_violation(tags: Sequence) -> int | None:
    """Position of the first grammar violation, or None if the sequence is valid.

    A run left open at the end of the sequence is reported at its last token.
    """
    open_sent = None
    for i, tag in enumerate(_as_names(tags)):
        pos, sent = split_tag(tag)
        if pos in ("I", "E"):
            if open_sent != sent:
                return i
            if pos == "E":
                open_sent = None
        else:
            if open_sent is not None:
                return i
            if pos == "B":
                open_sent = sent
    if open_sent is not None:
        return len(tags) - 1
    return None


def is_valid(tags: Sequence) -> bool:
    return first_violation(tags) is None


def tags_to_spans(tags: Sequence) -> list[AspectSpan]:
    names = _as_names(tags)
    bad = first_violation(names)
    if bad is not None:
        raise TagSequenceError(f"invalid tag {names[bad]!r} at position {bad}", bad)
    spans = []
    start = None
    for i, tag in enumerate(names):
        pos, sent = split_tag(tag)
        if pos == "S":
            spans.append(AspectSpan(i, i, sent))
        elif pos == "B":
            start = i
        elif pos == "E":
            spans.append(AspectSpan(start, i, sent))
    return spans


def repair(tags: Sequence) -> list[str]:
    """Rewrite an arbitrary tag sequence into a valid one, left to right.

    * an I/E with no open run opens one (emitted as B, or S if it ends up alone);
    * an open run is closed by O, B, S or the end of the sentence, rewriting its
      last token to E (or to S when the run is a single token);
    * tokens inside a run take the run's first sentiment.
    """
    out = _as_names(tags)
    out = list(out)
    run_start = None
    run_sent = None

    def close(last: int) -> None:
        out[last] = f"S-{run_sent}" if last == run_start else f"E-{run_sent}"

    for i, tag in enumerate(out):
        pos, sent = split_tag(tag)
        if pos in ("I", "E"):
            if run_start is None:
                run_start, run_sent = i, sent
                out[i] = f"B-{sent}"
                continue
            out[i] = f"{pos}-{run_sent}"
            if pos == "E":
                run_start = None
            continue
        if run_start is not None:
            close(i - 1)
            run_start = None
        if pos == "B":
            run_start, run_sent = i, sent
    if run_start is not None:
        close(len(out) - 1)
    return out


def tag_ids(tags: Sequence[str]) -> list[int]:
    return [tag_index(t) for t in tags]


def tag_names(ids: Sequence[int]) -> list[str]:
    return [TAGS[i] for i in ids]
