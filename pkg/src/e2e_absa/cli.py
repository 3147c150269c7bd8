"""Command-line entry point: ``train``, ``eval``, ``predict``, ``gradcheck``, ``stats``.

Run configuration comes from an optional ``key = value`` file (``#`` starts a
comment) overridden by ``--key value`` flags. Exit status is 0 on success, 1
for usage / config / input errors and 2 for runtime or numeric failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Sequence

from .corpus import CorpusError, Example, Vocab, index_examples, load_examples, make_batch, stats
from .encoder import EncoderConfig, VocabularyError
from .evaluation import EvalReport
from .training import ModelCheckpoint, TrainConfig, TrainingError, evaluate, multi_seed_run, write_trajectory
from .tagging import tags_to_spans

log = logging.getLogger("e2e_absa")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
SPLIT_SUFFIXES = (".conll", ".tsv", ".txt", ".jsonl", ".json")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    return lambda text: None if text.strip().lower() in ("none", "") else conv(text)


def _parse_seeds(text: str) -> tuple[int, ...]:
    seeds = tuple(int(s) for s in text.replace(" ", "").split(",") if s)
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


PATH_KEYS = {
    "data": str,
    "train_file": str,
    "dev_file": str,
    "test_file": str,
    "output_dir": str,
    "parallel_seeds": int,
}


def _converters() -> dict:
    conv = {}
    for f in fields(TrainConfig):
        default = f.default
        if f.name == "seeds":
            conv[f.name] = _parse_seeds
        elif f.name == "early_stop_f1":
            conv[f.name] = _optional(float)
        elif isinstance(default, bool):
            conv[f.name] = _parse_bool
        elif isinstance(default, int):
            conv[f.name] = int
        elif isinstance(default, float):
            conv[f.name] = float
        else:
            conv[f.name] = str
    for f in fields(EncoderConfig):
        if f.name == "vocab_size":
            continue
        conv[f.name] = _optional(int) if f.name == "ffn_dim" else (float if f.name == "ln_eps" else int)
    conv.update(PATH_KEYS)
    return conv


CONVERTERS = _converters()


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` strings; duplicate and unknown keys are errors."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONVERTERS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        out[key] = value
    return out


def resolve(raw: dict[str, str]) -> dict:
    values = {}
    for key, text in raw.items():
        if key not in CONVERTERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = CONVERTERS[key](text)
        except ValueError as err:
            raise ConfigError(f"bad value for {key!r}: {err}") from None
    return values


def render_config(values: dict) -> str:
    lines = []
    for key in sorted(values):
        v = values[key]
        if isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def split_configs(values: dict) -> tuple[TrainConfig, EncoderConfig, dict]:
    train_keys = {f.name for f in fields(TrainConfig)}
    enc_keys = {f.name for f in fields(EncoderConfig)} - {"vocab_size"}
    try:
        tcfg = TrainConfig(**{k: v for k, v in values.items() if k in train_keys})
        ecfg = EncoderConfig(vocab_size=0, **{k: v for k, v in values.items() if k in enc_keys})
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None
    rest = {k: v for k, v in values.items() if k in PATH_KEYS}
    return tcfg, ecfg, rest


def find_split(directory: Path, split: str) -> Path | None:
    for suffix in SPLIT_SUFFIXES:
        candidate = directory / f"{split}{suffix}"
        if candidate.is_file():
            return candidate
    return None


# ---------------------------------------------------------------- commands


def _load(path, max_len=None) -> list[Example]:
    try:
        return load_examples(path, max_len)
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None


def _report_block(report: EvalReport, **extra) -> str:
    head = [f"{k}={v}" for k, v in extra.items()]
    return "\n".join([report.line(), *head, report.key_values()]) + "\n"


def cmd_train(args) -> int:
    raw = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from None
        raw.update(parse_config_text(text, args.config))
    raw.update(args.overrides)
    values = resolve(raw)
    tcfg, ecfg, paths = split_configs(values)

    data_dir = Path(paths["data"]) if "data" in paths else None
    files = {}
    for split in ("train", "dev", "test"):
        explicit = paths.get(f"{split}_file")
        if explicit and explicit.lower() == "none":
            explicit = None
        found = Path(explicit) if explicit else (find_split(data_dir, split) if data_dir else None)
        files[split] = found
    if files["train"] is None or files["dev"] is None:
        raise ConfigError("need train and dev data: pass --data DIR or --train-file/--dev-file")
    train_set = _load(files["train"], ecfg.max_len)
    dev_set = _load(files["dev"], ecfg.max_len)
    test_set = _load(files["test"], ecfg.max_len) if files["test"] else dev_set
    if not train_set or not dev_set:
        raise ConfigError("train and dev sets must be non-empty")

    out = Path(paths.get("output_dir", "run"))
    out.mkdir(parents=True, exist_ok=True)
    resolved = {**asdict(tcfg), **{k: v for k, v in ecfg.to_dict().items() if k != "vocab_size"}}
    resolved.update({k: v for k, v in paths.items()})
    resolved.setdefault("output_dir", str(out))
    for split, path in files.items():
        resolved[f"{split}_file"] = str(path) if path else "none"
    resolved["ffn_dim"] = ecfg.ffn_dim
    (out / "config.resolved").write_text(render_config(resolved), encoding="utf-8")

    result = multi_seed_run(tcfg, train_set, dev_set, test_set, encoder_config=ecfg,
                            workers=int(paths.get("parallel_seeds", 1)))
    test_label = "test" if files["test"] else "dev"
    best = None
    for run in result.runs:
        seed_dir = out / f"seed{run.seed}"
        seed_dir.mkdir(exist_ok=True)
        run.checkpoint.save(seed_dir / "checkpoint.npz")
        write_trajectory(run.trajectory, seed_dir / "trajectory.csv")
        block = _report_block(run.test, seed=run.seed, best_step=run.best_step,
                              dev_f1=repr(run.dev_f1), evaluated_on=test_label)
        (seed_dir / "report.txt").write_text(block, encoding="utf-8")
        print(f"seed {run.seed}: best_step={run.best_step} dev_f1={run.dev_f1:.4f} {test_label} {run.test.line()}")
        if best is None or run.dev_f1 > best.dev_f1:
            best = run
    best.checkpoint.save(out / "checkpoint.npz")
    summary = "\n".join([
        result.line(),
        f"seeds={','.join(str(r.seed) for r in result.runs)}",
        f"evaluated_on={test_label}",
        f"precision={result.precision!r}",
        f"recall={result.recall!r}",
        f"f1={result.f1!r}",
        f"dev_f1={result.dev_f1!r}",
        f"checkpoint_seed={best.seed}",
    ]) + "\n"
    (out / "report.txt").write_text(summary, encoding="utf-8")
    print(f"mean over {len(result.runs)} seed(s): {result.line()}")
    return EXIT_OK


def _load_checkpoint(path) -> tuple[ModelCheckpoint, object, Vocab]:
    try:
        ck = ModelCheckpoint.load(path)
    except FileNotFoundError:
        raise ConfigError(f"no such checkpoint: {path}") from None
    return ck, ck.build_model(), ck.get_vocab()


def cmd_eval(args) -> int:
    ck, model, vocab = _load_checkpoint(args.checkpoint)
    examples = index_examples(_load(args.data, ck.encoder_config["max_len"]), vocab)
    report = evaluate(model, examples, ck.config().eval_batch_size)
    sys.stdout.write(_report_block(report, sentences=len(examples)))
    return EXIT_OK


def _read_predict_input(text: str, fmt: str) -> list[list[str]]:
    lines = text.splitlines()
    if fmt == "auto":
        body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
        fmt = "conll" if body and all("\t" in ln for ln in body) else "raw"
    if fmt == "raw":
        return [ln.split() for ln in lines if ln.strip()]
    sentences, cur = [], []
    for ln in lines:
        if not ln.strip():
            if cur:
                sentences.append(cur)
                cur = []
        elif not (ln.startswith("#") and "\t" not in ln):
            cur.append(ln.split("\t")[0])
    if cur:
        sentences.append(cur)
    return sentences


def span_summary(tokens: Sequence[str], tags: Sequence[str]) -> str:
    spans = tags_to_spans(tags)
    if not spans:
        return "# spans: none"
    parts = [f"{s.start}-{s.end} {' '.join(tokens[s.start:s.end + 1])} {s.sentiment}" for s in spans]
    return "# spans: " + " | ".join(parts)


def cmd_predict(args) -> int:
    ck, model, vocab = _load_checkpoint(args.checkpoint)
    if args.input == "-":
        text = sys.stdin.read()
    else:
        try:
            text = Path(args.input).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read input: {err}") from None
    sentences = _read_predict_input(text, args.format)
    max_len = ck.encoder_config["max_len"]
    for i, toks in enumerate(sentences):
        if len(toks) > max_len:
            raise ConfigError(f"sentence {i + 1} has {len(toks)} tokens, model max_len is {max_len}")
    oov = sorted({t for toks in sentences for t in toks if t not in vocab})
    if oov:
        shown = ", ".join(oov[:10]) + (" ..." if len(oov) > 10 else "")
        print(f"warning: {len(oov)} token type(s) not in vocabulary, mapped to <unk>: {shown}", file=sys.stderr)
    out = []
    for toks in sentences:
        ex = Example(list(toks), [], token_ids=vocab.encode(toks))
        (tags,) = model.predict(make_batch([ex]))
        out.append("".join(f"{tok}\t{tag}\n" for tok, tag in zip(toks, tags)) + span_summary(toks, tags) + "\n")
    sys.stdout.write("\n".join(out))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import suite

    results = suite(dim_h=args.dim_h, length=args.length, seed=args.seed, tolerance=args.tolerance,
                    corrupt=args.corrupt)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  {'max_rel_err':>11}  {'tol':>7}  {'secs':>6}  status")
    for r in results:
        print(f"{r.name:<{width}}  {r.error:11.3e}  {r.tolerance:7.0e}  {r.seconds:6.2f}  {'PASS' if r.passed else 'FAIL'}")
    failed = [r.name for r in results if not r.passed]
    total = sum(r.seconds for r in results)
    if failed:
        print(f"FAILED: {', '.join(failed)} ({total:.1f}s)")
        return EXIT_RUNTIME
    print(f"all {len(results)} checks passed ({total:.1f}s)")
    return EXIT_OK


def cmd_stats(args) -> int:
    for path in args.files:
        sents, aspects = stats(_load(path))
        print(f"{path}\tsentences={sents}\taspects={aspects}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Override(argparse.Action):
    """Collect ``--some-key value`` flags into ``namespace.overrides``."""

    def __call__(self, parser, namespace, values, option_string=None):
        over = dict(getattr(namespace, "overrides", None) or {})
        over[self.dest] = values
        namespace.overrides = over


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="e2e-absa", description="End-to-end aspect sentiment tagging on a toy encoder.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model per seed and write reports")
    t.add_argument("--config", help="key = value config file; flags override it")
    t.set_defaults(overrides={})
    for key in CONVERTERS:
        flags = [f"--{key.replace('_', '-')}"]
        if "_" in key:
            flags.append(f"--{key}")
        t.add_argument(*flags, dest=key, action=_Override, metavar="VALUE", default=argparse.SUPPRESS)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a labelled file")
    e.add_argument("checkpoint")
    e.add_argument("data")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="tag raw text (one sentence per line) or CoNLL tokens")
    pr.add_argument("checkpoint")
    pr.add_argument("input", nargs="?", default="-")
    pr.add_argument("--format", choices=("auto", "raw", "conll"), default="auto")
    pr.set_defaults(func=cmd_predict)

    g = sub.add_parser("gradcheck", help="finite-difference check of every head and the CRF")
    g.add_argument("--dim-h", type=int, default=8)
    g.add_argument("--length", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("stats", help="sentence and aspect counts per file")
    s.add_argument("files", nargs="+")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; map to the usage code
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CorpusError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, VocabularyError, FloatingPointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as err:
        # checkpoint / model mismatches and other contract failures at run time
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
