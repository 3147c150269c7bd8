import numpy as np
import pytest

from e2e_absa import autodiff as ad
from e2e_absa.autodiff import ContractError, Tensor
from e2e_absa.corpus import Example, make_batch
from e2e_absa.encoder import Encoder, EncoderConfig, VocabularyError
from e2e_absa.layers import Layout, TransformerLayer, self_attention
from e2e_absa.model import Tagger
from e2e_absa.training import AdamState, adam_step


def make_encoder(seed=0, **kw):
    cfg = EncoderConfig(vocab_size=kw.pop("vocab_size", 12), max_len=16, dim_h=8, num_attn_heads=2, **kw)
    return Encoder(cfg, np.random.default_rng(seed))


def test_config_defaults_and_validation():
    cfg = EncoderConfig(vocab_size=5)
    assert (cfg.num_layers, cfg.dim_h, cfg.num_attn_heads, cfg.ffn_dim, cfg.max_len) == (2, 32, 4, 128, 64)
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=5, dim_h=10, num_attn_heads=4)


def test_embed_zero_tables():
    enc = make_encoder()
    for p in enc.params.values():
        p.data[:] = 0.0
    np.testing.assert_array_equal(enc.embed([1, 2, 3]).data, np.zeros((3, 8)))


def test_embed_is_sum_of_three_rows():
    enc = make_encoder()
    p = enc.params
    h = enc.embed([3], [0])
    np.testing.assert_array_equal(h.data[0], p["token_emb"].data[3] + p["pos_emb"].data[0] + p["seg_emb"].data[0])


def test_embed_position_term():
    enc = make_encoder()
    h = enc.embed([4, 4]).data
    assert not np.array_equal(h[0], h[1])


def test_embed_out_of_range():
    enc = make_encoder()
    with pytest.raises(VocabularyError) as err:
        enc.embed([1, 12])
    assert err.value.index == 12
    with pytest.raises(VocabularyError):
        enc.embed(list(range(1, 12)) + [1] * 6)  # 17 positions > max_len


@pytest.mark.parametrize("t", range(1, 9))
def test_transformer_layer_preserves_shape(t):
    layer = TransformerLayer(8, 2, 32, np.random.default_rng(t))
    h = Tensor(np.random.default_rng(100 + t).normal(size=(t, 8)))
    assert layer(h, [1] * t).shape == (t, 8)


def test_masked_positions_do_not_leak():
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = int(rng.integers(2, 8))
        mask = (rng.random(t) < 0.6).astype(int)
        mask[rng.integers(t)] = 1
        enc = make_encoder(int(rng.integers(1000)))
        ids = rng.integers(2, 12, size=t)
        a = enc.encode(ids, layout=mask).data
        ids2 = ids.copy()
        ids2[mask == 0] = rng.integers(2, 12, size=int((mask == 0).sum()))
        b = enc.encode(ids2, layout=mask).data
        np.testing.assert_allclose(a[mask == 1], b[mask == 1], rtol=0, atol=1e-12)


def test_all_masked_is_rejected():
    layer = TransformerLayer(8, 2, 32, np.random.default_rng(0))
    with pytest.raises(ContractError):
        layer(Tensor(np.ones((3, 8))), [0, 0, 0])


def test_singleton_attention_returns_value_row():
    rng = np.random.default_rng(1)
    q, k, v = (Tensor(rng.normal(size=(1, 8))) for _ in range(3))
    out = self_attention(q, k, v, Layout.from_mask([1]).attention_bias(), 2)
    np.testing.assert_allclose(out.data, v.data, rtol=1e-15)


def test_packed_batch_matches_single_sentences():
    enc = make_encoder(3)
    rng = np.random.default_rng(3)
    a, b = rng.integers(2, 12, size=5), rng.integers(2, 12, size=3)
    layout = Layout.from_lengths([5, 3])
    ids = np.zeros((2, 5), dtype=int)
    ids[0], ids[1, :3] = a, b
    packed = enc.encode(ids, layout=layout).data
    np.testing.assert_allclose(packed[:5], enc.encode(a).data, atol=1e-12)
    np.testing.assert_allclose(packed[5:8], enc.encode(b).data, atol=1e-12)


def test_zero_layers_returns_embeddings():
    enc = make_encoder(num_layers=0)
    ids = [2, 5, 7]
    np.testing.assert_array_equal(enc.encode(ids).data, enc.embed(ids).data)


def test_depth_changes_output():
    one, two = make_encoder(4, num_layers=1), make_encoder(4, num_layers=2)
    ids = [2, 3, 4, 5]
    assert not np.allclose(one.encode(ids).data, two.encode(ids).data)


def test_permutation_sensitivity():
    rng = np.random.default_rng(5)
    for _ in range(5):
        enc = make_encoder(int(rng.integers(1000)))
        ids = rng.permutation(np.arange(2, 8))
        perm = rng.permutation(len(ids))
        assert not np.allclose(enc.encode(ids[perm]).data, enc.encode(ids).data[perm])


def test_frozen_encoder_is_bitwise_unchanged_by_training():
    cfg = EncoderConfig(vocab_size=12, max_len=16, dim_h=8, num_attn_heads=2)
    model = Tagger(cfg, "linear", np.random.default_rng(0), dropout=0.0)
    model.encoder.freeze()
    before = {n: p.data.copy() for n, p in model.encoder.named_parameters()}
    ex = Example(["a", "b", "c"], [(1, 1, "POS")])
    ex.token_ids = [2, 3, 4]
    batch = make_batch([ex])
    params = model.trainable_parameters()
    state = AdamState.zeros_like([p.data for p in params])
    for _ in range(2):
        ad.zero_grads(params)
        ad.backward(model.loss(batch))
        adam_step([p.data for p in params], [p.grad for p in params], state, lr=0.1)
    for n, p in model.encoder.named_parameters():
        assert p.data.tobytes() == before[n].tobytes()
        assert p.grad is None
    assert all(id(p) not in {id(q) for q in model.encoder.parameters()} for p in params)


def test_every_encoder_parameter_gets_gradient():
    cfg = EncoderConfig(vocab_size=12, max_len=16, dim_h=8, num_attn_heads=2)
    model = Tagger(cfg, "linear", np.random.default_rng(0), dropout=0.0)
    rng = np.random.default_rng(1)
    exs = []
    for n in (5, 4):
        ex = Example(["w"] * n, [])
        ex.token_ids = list(rng.integers(0, 12, size=n))
        ex.tag_ids = list(rng.integers(0, 13, size=n))
        exs.append(ex)
    ad.backward(model.loss(make_batch(exs)))
    # seg_emb/pos_emb rows used by the batch, and every dense weight, must move
    for name, p in model.encoder.named_parameters():
        assert np.any(p.grad != 0), name
