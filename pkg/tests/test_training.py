import csv
from dataclasses import replace

import numpy as np
import pytest

from e2e_absa.corpus import index_examples
from e2e_absa.encoder import EncoderConfig
from e2e_absa.synthetic import splits
from e2e_absa.training import (
    AdamState,
    ModelCheckpoint,
    TrainConfig,
    TrainingError,
    adam_step,
    clip_by_global_norm,
    evaluate,
    multi_seed_run,
    train,
    train_config_from_dict,
)

TOY = EncoderConfig(vocab_size=0, max_len=16, num_layers=1, dim_h=16, num_attn_heads=2)
FAST = TrainConfig(head="linear", batch_size=8, max_steps=60, selection_start=20, selection_every=20,
                   seeds=(1,), dropout=0.0, learning_rate=3e-3)


@pytest.fixture(scope="module")
def data():
    return splits(30, 20, 20, seed=0)


def test_config_invariants():
    assert TrainConfig().selection_points() == list(range(1000, 1501, 100))
    assert TrainConfig(max_steps=50, selection_start=0, selection_every=100).selection_points() == [50]
    with pytest.raises(ValueError):
        TrainConfig(max_steps=10, selection_start=20)
    with pytest.raises(ValueError):
        TrainConfig(selection_every=0)
    cfg = train_config_from_dict({"head": "crf", "seeds": [3, 4]})
    assert cfg.head == "crf" and cfg.seeds == (3, 4)


def test_adam_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    state = AdamState.zeros_like([p])
    adam_step([p], [np.zeros(2)], state, lr=0.1)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_is_lr():
    w = np.array([0.5])
    adam_step([w], [np.array([1.0])], AdamState.zeros_like([w]), lr=0.1)
    assert w[0] == pytest.approx(0.4, abs=1e-8)


def test_adam_matches_hand_two_steps():
    w = np.array([0.0])
    state = AdamState.zeros_like([w])
    adam_step([w], [np.array([2.0])], state, lr=0.01)
    adam_step([w], [np.array([-1.0])], state, lr=0.01)
    m = 0.9 * 0.1 * 2.0 + 0.1 * -1.0
    v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0
    step2 = 0.01 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    assert w[0] == pytest.approx(-0.01 * 2 / (2 + 1e-8) - step2, rel=1e-12)


def test_clipping_scales_update():
    g = [np.array([6.0, 8.0])]
    clipped, norm = clip_by_global_norm(g, 1.0)
    assert norm == 10.0
    np.testing.assert_allclose(clipped[0], g[0] / 10.0)
    # Adam itself is scale-free; the 10x shrink is on the gradient it consumes
    unclipped, _ = clip_by_global_norm(g, 0.0)
    np.testing.assert_array_equal(unclipped[0], g[0])


def test_max_steps_zero_returns_initial_model(data):
    tr, dev, _ = data
    cfg = replace(FAST, max_steps=0, selection_start=0)
    res = train(cfg, tr, dev, encoder_config=TOY)
    assert [r.step for r in res.trajectory] == [0]
    assert res.checkpoint.best_step == 0
    assert res.checkpoint.best_dev_f1 == res.trajectory[0].dev_f1
    assert res.losses == []


def test_selection_is_argmax_of_trajectory(data, tmp_path):
    tr, dev, _ = data
    res = train(FAST, tr, dev, encoder_config=TOY)
    f1s = [r.dev_f1 for r in res.trajectory]
    assert [r.step for r in res.trajectory] == [20, 40, 60]
    assert res.checkpoint.best_dev_f1 == max(f1s)
    assert res.checkpoint.best_step == res.trajectory[int(np.argmax(f1s))].step
    path = tmp_path / "traj.csv"
    res.write_trajectory(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["step", "loss", "dev_f1"]
    assert [float(r[2]) for r in rows[1:]] == f1s


@pytest.mark.parametrize("head", ["linear", "crf"])
def test_checkpoint_reload_reproduces_dev_f1(data, tmp_path, head):
    tr, dev, _ = data
    res = train(replace(FAST, head=head), tr, dev, encoder_config=TOY)
    path = tmp_path / "model.npz"
    res.checkpoint.save(path)
    ck = ModelCheckpoint.load(path)
    assert ck.best_step == res.checkpoint.best_step and ck.seed == 1
    model = ck.build_model()
    report = evaluate(model, index_examples(dev, ck.get_vocab()))
    assert report.f1 == res.checkpoint.best_dev_f1
    for name, p in res.model.named_parameters():
        assert p.data.tobytes() == ck.params[name].tobytes()


def test_checkpoint_rejects_mismatched_architecture(data, tmp_path):
    tr, dev, _ = data
    res = train(replace(FAST, max_steps=0, selection_start=0), tr, dev, encoder_config=TOY)
    ck = res.checkpoint
    ck.train_config = dict(ck.train_config, head="gru")
    with pytest.raises(ValueError, match="architecture"):
        ck.build_model()


def test_training_is_deterministic(data):
    tr, dev, _ = data
    cfg = replace(FAST, dropout=0.1)
    a = train(cfg, tr, dev, encoder_config=TOY)
    b = train(cfg, tr, dev, encoder_config=TOY)
    assert a.losses == b.losses
    assert all(a.checkpoint.params[k].tobytes() == b.checkpoint.params[k].tobytes() for k in a.checkpoint.params)
    c = train(cfg, tr, dev, encoder_config=TOY, seed=2)
    assert c.losses != a.losses


def test_divergence_raises_with_step(data):
    tr, dev, _ = data
    with pytest.raises(TrainingError) as err:
        train(replace(FAST, learning_rate=float("nan")), tr, dev, encoder_config=TOY)
    assert err.value.step == 2


def test_empty_sets_rejected(data):
    with pytest.raises(ValueError):
        train(FAST, [], data[1], encoder_config=TOY)


def test_frozen_training_keeps_encoder(data):
    tr, dev, _ = data
    init = train(replace(FAST, max_steps=0, selection_start=0), tr, dev, encoder_config=TOY).checkpoint.params
    frozen = train(replace(FAST, freeze_encoder=True), tr, dev, encoder_config=TOY).checkpoint.params
    for k in init:
        same = init[k].tobytes() == frozen[k].tobytes()
        assert same == k.startswith("encoder.")


def test_multi_seed_averages(data):
    tr, dev, te = data
    res = multi_seed_run(FAST, tr, dev, te, encoder_config=TOY, seeds=[1, 1, 2])
    a, b, c = res.runs
    assert a.test == b.test and a.dev_f1 == b.dev_f1
    f1s = [r.test.f1 for r in res.runs]
    assert min(f1s) <= res.f1 <= max(f1s)
    assert res.f1 == pytest.approx(np.mean(f1s), abs=1e-15)
    single = multi_seed_run(FAST, tr, dev, te, encoder_config=TOY, seeds=[2])
    assert (single.precision, single.recall, single.f1) == (c.test.precision, c.test.recall, c.test.f1)


@pytest.mark.parametrize("head", ["linear", "gru", "san", "tfm", "crf"])
def test_late_loss_below_early_loss(data, head):
    tr, dev, _ = data
    cfg = replace(FAST, head=head, max_steps=150, selection_start=150, selection_every=150)
    losses = train(cfg, tr, dev, encoder_config=TOY).losses
    k = len(losses) // 10
    assert np.mean(losses[-k:]) < np.mean(losses[:k])
