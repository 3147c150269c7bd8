"""Step-based training with periodic dev-set model selection.

Selection points are the steps ``s >= selection_start`` with
``s % selection_every == 0``; if none fall inside ``max_steps`` the final
step is used. The parameters with the best dev micro-F1 (earliest on ties)
are returned.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .corpus import Example, Vocab, batch, build_vocab, index_examples, make_batch
from .encoder import EncoderConfig
from .evaluation import EvalReport, micro_prf
from .model import Tagger
from .tagging import tags_to_spans

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class TrainConfig:
    head: str = "linear"
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_steps: int = 1500
    selection_start: int = 1000
    selection_every: int = 100
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    freeze_encoder: bool = False
    dropout: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0  # global-norm clip; 0 disables
    eval_batch_size: int = 64
    head_attn_heads: int = 1
    crf_constrained: bool = False
    early_stop_f1: float | None = None  # stop once dev F1 reaches this value

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.selection_every < 1:
            raise ValueError("selection_every must be >= 1")
        if self.selection_start > self.max_steps:
            raise ValueError(f"selection_start={self.selection_start} exceeds max_steps={self.max_steps}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def selection_points(self) -> list[int]:
        pts = [s for s in range(max(self.selection_start, 1), self.max_steps + 1) if s % self.selection_every == 0]
        return pts or [self.max_steps]


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def clip_by_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        return [g * factor for g in grads], norm
    return list(grads), norm


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, *,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              grad_clip: float = 0.0) -> float:
    """In-place bias-corrected Adam update; returns the pre-clip gradient norm."""
    grads, norm = clip_by_global_norm(grads, grad_clip)
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return norm


# ---------------------------------------------------------------- checkpoint


@dataclass
class ModelCheckpoint:
    train_config: dict
    encoder_config: dict
    vocab: list[str]
    params: dict[str, np.ndarray]
    best_dev_f1: float
    best_step: int
    seed: int
    format_version: int = FORMAT_VERSION

    def meta(self) -> dict:
        return {
            "format_version": self.format_version,
            "train_config": self.train_config,
            "encoder_config": self.encoder_config,
            "vocab": self.vocab,
            "best_dev_f1": self.best_dev_f1,
            "best_step": self.best_step,
            "seed": self.seed,
        }

    def save(self, path) -> None:
        blob = np.frombuffer(json.dumps(self.meta()).encode("utf-8"), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=blob, **{f"param/{k}": v for k, v in self.params.items()})

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(z["__meta__"].tobytes().decode("utf-8"))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported checkpoint format {meta.get('format_version')!r}")
            params = {k[len("param/"):]: z[k].copy() for k in z.files if k.startswith("param/")}
        return cls(meta["train_config"], meta["encoder_config"], meta["vocab"], params,
                   meta["best_dev_f1"], meta["best_step"], meta["seed"])

    def config(self) -> TrainConfig:
        return train_config_from_dict(self.train_config)

    def build_model(self) -> Tagger:
        cfg = self.config()
        if len(self.vocab) != self.encoder_config["vocab_size"]:
            raise ValueError(f"checkpoint vocabulary has {len(self.vocab)} entries but the encoder "
                             f"expects {self.encoder_config['vocab_size']}")
        model = Tagger(EncoderConfig(**self.encoder_config), cfg.head, np.random.default_rng(0),
                       dropout=cfg.dropout, head_attn_heads=cfg.head_attn_heads,
                       crf_constrained=cfg.crf_constrained)
        named = dict(model.named_parameters())
        if set(named) != set(self.params):
            raise ValueError("checkpoint parameters do not match the model architecture")
        for name, p in named.items():
            if p.data.shape != self.params[name].shape:
                raise ValueError(f"shape mismatch for {name}: {p.data.shape} vs {self.params[name].shape}")
            p.data = self.params[name].copy()
        return model

    def get_vocab(self) -> Vocab:
        return Vocab(self.vocab)


def train_config_from_dict(d: dict) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in d.items() if k in known})


# ---------------------------------------------------------------- loop


@dataclass
class LogRow:
    step: int
    loss: float
    dev_f1: float


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    trajectory: list[LogRow]
    losses: list[float] = field(repr=False)
    model: Tagger = field(repr=False)

    def write_trajectory(self, path) -> None:
        write_trajectory(self.trajectory, path)


def write_trajectory(rows: Sequence[LogRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "dev_f1"])
        for r in rows:
            w.writerow([r.step, repr(r.loss), repr(r.dev_f1)])


def evaluate(model: Tagger, examples: Sequence[Example], batch_size: int = 64) -> EvalReport:
    gold, pred = [], []
    for b in batch(examples, batch_size):
        for ex, tags in zip(b.examples, model.predict(b)):
            gold.append(ex.spans)
            pred.append(tags_to_spans(tags))
    return micro_prf(gold, pred)


def _snapshot(model: Tagger) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters()}


def train(config: TrainConfig, train_set: Sequence[Example], dev_set: Sequence[Example], *,
          seed: int | None = None, encoder_config: EncoderConfig | None = None,
          vocab: Vocab | None = None) -> TrainResult:
    """Train one model and keep the best dev-F1 parameters."""
    if not train_set or not dev_set:
        raise ValueError("train and dev sets must be non-empty")
    seed = config.seeds[0] if seed is None else int(seed)
    vocab = vocab or build_vocab(train_set)
    enc_cfg = replace(encoder_config or EncoderConfig(vocab_size=len(vocab)), vocab_size=len(vocab))
    longest = max(len(ex) for ex in list(train_set) + list(dev_set))
    if longest > enc_cfg.max_len:
        raise ValueError(f"sentence of {longest} tokens exceeds max_len={enc_cfg.max_len}")
    train_set = index_examples(train_set, vocab)
    dev_set = index_examples(dev_set, vocab)

    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(seed).spawn(3)
    model = Tagger(enc_cfg, config.head, np.random.default_rng(init_ss), dropout=config.dropout,
                   head_attn_heads=config.head_attn_heads, crf_constrained=config.crf_constrained)
    if config.freeze_encoder:
        model.encoder.freeze()
    params = model.trainable_parameters()
    state = AdamState.zeros_like([p.data for p in params])
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)

    points = set(config.selection_points())
    trajectory: list[LogRow] = []
    losses: list[float] = []
    best_f1, best_step, best_params = -1.0, 0, None
    pending: list[Sequence] = []
    window: list[float] = []

    def select(step: int) -> bool:
        nonlocal best_f1, best_step, best_params
        f1 = evaluate(model, dev_set, config.eval_batch_size).f1
        loss = float(np.mean(window)) if window else float("nan")
        window.clear()
        trajectory.append(LogRow(step, loss, f1))
        log.info("step %d loss %.4f dev_f1 %.4f", step, loss, f1)
        if f1 > best_f1:
            best_f1, best_step, best_params = f1, step, _snapshot(model)
        return config.early_stop_f1 is not None and f1 >= config.early_stop_f1

    if config.max_steps == 0:
        select(0)
    for step in range(1, config.max_steps + 1):
        if not pending:
            order = shuffle_rng.permutation(len(train_set))
            pending = [order[k: k + config.batch_size] for k in range(0, len(order), config.batch_size)][::-1]
        b = make_batch([train_set[i] for i in pending.pop()])
        ad.zero_grads(params)
        loss = model.loss(b, drop_rng)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(f"loss became {value}", step)
        ad.backward(loss)
        adam_step([p.data for p in params], [p.grad for p in params], state, lr=config.learning_rate,
                  beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps, grad_clip=config.grad_clip)
        losses.append(value)
        window.append(value)
        if step in points and select(step):
            break

    ckpt = ModelCheckpoint(asdict(config), enc_cfg.to_dict(), vocab.itos, best_params, best_f1, best_step, seed)
    named = dict(model.named_parameters())
    for name, arr in best_params.items():
        named[name].data = arr.copy()
    return TrainResult(ckpt, trajectory, losses, model)


# ---------------------------------------------------------------- protocol


@dataclass
class SeedRun:
    seed: int
    dev_f1: float
    best_step: int
    test: EvalReport
    trajectory: list[LogRow] = field(repr=False)
    checkpoint: ModelCheckpoint = field(repr=False)


@dataclass
class MultiSeedResult:
    runs: list[SeedRun]

    @property
    def precision(self) -> float:
        return float(np.mean([r.test.precision for r in self.runs]))

    @property
    def recall(self) -> float:
        return float(np.mean([r.test.recall for r in self.runs]))

    @property
    def f1(self) -> float:
        return float(np.mean([r.test.f1 for r in self.runs]))

    @property
    def dev_f1(self) -> float:
        return float(np.mean([r.dev_f1 for r in self.runs]))

    def line(self) -> str:
        return f"P={self.precision:.4f} R={self.recall:.4f} F1={self.f1:.4f}"


def _run_seed(args) -> SeedRun:
    config, train_set, dev_set, test_set, seed, enc_cfg, vocab = args
    res = train(config, train_set, dev_set, seed=seed, encoder_config=enc_cfg, vocab=vocab)
    test = evaluate(res.model, index_examples(test_set, vocab), config.eval_batch_size)
    return SeedRun(seed, res.checkpoint.best_dev_f1, res.checkpoint.best_step, test, res.trajectory, res.checkpoint)


def multi_seed_run(config: TrainConfig, train_set, dev_set, test_set, *,
                   encoder_config: EncoderConfig | None = None, seeds: Sequence[int] | None = None,
                   workers: int = 1) -> MultiSeedResult:
    """One model per seed; test reports are averaged in seed order."""
    seeds = list(config.seeds if seeds is None else seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    vocab = build_vocab(train_set)
    jobs = [(config, train_set, dev_set, test_set, s, encoder_config, vocab) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_seed, jobs))
    else:
        runs = [_run_seed(j) for j in jobs]
    return MultiSeedResult(runs)


def compare_frozen(config: TrainConfig, train_set, dev_set, test_set, *,
                   encoder_config: EncoderConfig | None = None, workers: int = 1) -> dict[str, MultiSeedResult]:
    """Same seeds and data order, differing only in whether the encoder trains."""
    return {
        label: multi_seed_run(replace(config, freeze_encoder=frozen), train_set, dev_set, test_set,
                              encoder_config=encoder_config, workers=workers)
        for label, frozen in (("fine_tuned", False), ("frozen", True))
    }
