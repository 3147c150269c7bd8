"""
BIOES tags crossed with sentiment
=================================
"""

from e2e_absa.tagging import TAGS, AspectSpan, first_violation, repair, spans_to_tags, tags_to_spans

print(len(TAGS), "tags:", " ".join(TAGS))

tokens = "Great food but the service is dreadful .".split()
spans = [AspectSpan(1, 1, "POS"), AspectSpan(4, 4, "NEG")]
tags = spans_to_tags(len(tokens), spans)
for tok, tag in zip(tokens, tags):
    print(f"{tok:10s}{tag}")

# multi-word aspects use B / I / E
print(spans_to_tags(5, [AspectSpan(1, 3, "NEU")]))
print(tags_to_spans(["O", "B-NEU", "I-NEU", "E-NEU", "O"]))

# a tagger can emit broken sequences; repair turns them into the closest valid one
broken = ["I-POS", "E-NEG", "O", "B-NEU", "B-NEG", "O"]
print("first violation at", first_violation(broken))
fixed = repair(broken)
print(broken, "->", fixed)
print("spans after repair:", tags_to_spans(fixed))
assert repair(fixed) == fixed
