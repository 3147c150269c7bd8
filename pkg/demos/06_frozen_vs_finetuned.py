"""
Does the encoder need to be trained?
====================================

Same seeds, same data order; only ``freeze_encoder`` differs.
"""

from e2e_absa import synthetic
from e2e_absa.encoder import EncoderConfig
from e2e_absa.training import TrainConfig, compare_frozen

train_set, dev_set, test_set = synthetic.splits(200, 200, 200, seed=0)
encoder = EncoderConfig(vocab_size=0, max_len=32, num_layers=2, dim_h=32, num_attn_heads=4)
config = TrainConfig(head="linear", batch_size=8, max_steps=600, selection_start=300, selection_every=100,
                     seeds=(1, 2, 3))

results = compare_frozen(config, train_set, dev_set, test_set, encoder_config=encoder)
for label, res in results.items():
    per_seed = ", ".join(f"{r.dev_f1:.3f}" for r in res.runs)
    print(f"{label:10s} mean dev F1 {res.dev_f1:.3f} ({per_seed})  test {res.line()}")
