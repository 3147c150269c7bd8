"""
Training every head on the synthetic review corpus
==================================================

A two-layer toy encoder with each tagging head; dev F1 is logged at every
selection point and the best checkpoint is kept.
"""

import time

from e2e_absa import synthetic
from e2e_absa.corpus import index_examples, make_batch
from e2e_absa.encoder import EncoderConfig
from e2e_absa.tagging import tags_to_spans
from e2e_absa.training import TrainConfig, train

train_set, dev_set, _ = synthetic.splits(200, 100, 0, seed=0)
print(" ".join(train_set[0].tokens), train_set[0].tags)

encoder = EncoderConfig(vocab_size=0, max_len=32, num_layers=2, dim_h=32, num_attn_heads=4)
# the default step protocol: 1500 steps, dev selection every 100 steps from step 1000
config = TrainConfig(batch_size=8)
best = None

for head in ("linear", "gru", "san", "tfm", "crf"):
    t0 = time.time()
    result = train(TrainConfig(**{**config.__dict__, "head": head}), train_set, dev_set, seed=1, encoder_config=encoder)
    curve = " ".join(f"{row.step}:{row.dev_f1:.2f}" for row in result.trajectory)
    print(f"{head:6s} best dev F1 {result.checkpoint.best_dev_f1:.3f} at step {result.checkpoint.best_step}"
          f"  [{curve}]  {time.time() - t0:.0f}s")
    if best is None or result.checkpoint.best_dev_f1 > best.checkpoint.best_dev_f1:
        best = result

# the best model tags the showcase sentence; a toy encoder trained on 200 sentences
# does not always carry the second opinion over to the second aspect
(example,) = index_examples([synthetic.showcase_sentence()], best.checkpoint.get_vocab())
(tags,) = best.model.predict(make_batch([example]))
print(list(zip(example.tokens, tags)))
print(tags_to_spans(tags))
