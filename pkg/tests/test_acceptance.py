"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

The lines are also collected and repeated in pytest's terminal summary.
"""

import itertools
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from conftest import ACCEPTANCE_LINES
from e2e_absa import synthetic
from e2e_absa.corpus import index_examples, load_examples, stats
from e2e_absa.crf import FORBIDDEN, brute_force, log_partition, sequence_score, start_index, stop_index, viterbi
from e2e_absa.encoder import EncoderConfig
from e2e_absa.evaluation import micro_prf
from e2e_absa.gradcheck import suite
from e2e_absa.tagging import NUM_TAGS, SENTIMENTS, TAGS, AspectSpan, is_valid, repair, spans_to_tags, tags_to_spans
from e2e_absa.training import TrainConfig, compare_frozen, evaluate, multi_seed_run, train

TOY = EncoderConfig(vocab_size=0, max_len=32, num_layers=2, dim_h=32, num_attn_heads=4)
HEADS = ("linear", "gru", "san", "tfm", "crf")


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def crf_instance(rng, t, k):
    e = rng.normal(size=(t, k))
    a = rng.normal(size=(k + 2, k + 2))
    a[:, start_index(k)] = FORBIDDEN
    a[stop_index(k), :] = FORBIDDEN
    return e, a


def test_gradient_suite():
    t0 = time.perf_counter()
    results = suite(dim_h=8, length=5)
    secs = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.error)
    names = {r.name for r in results}
    covered = {f"{h}.head" for h in HEADS[:4]} | {"crf.emissions", "crf.transitions"} <= names
    ok = covered and worst.error < 1e-4 and secs < 60
    report("gradient suite", ok,
           f"{len(results)} groups, max rel err {worst.error:.2e} ({worst.name}) < 1e-4, {secs:.1f}s < 60s")


def test_crf_oracle():
    rng = np.random.default_rng(2024)
    z_err = p_err = 0.0
    viterbi_exact = True
    for _ in range(200):
        t, k = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        e, a = crf_instance(rng, t, k)
        log_z, best, scores = brute_force(e, a)
        z_err = max(z_err, abs(log_partition(e, a) - log_z))
        viterbi_exact &= sequence_score(e, a, viterbi(e, a)) == best
        p_err = max(p_err, abs(np.exp(np.array(list(scores.values())) - log_partition(e, a)).sum() - 1.0))
    # full enumeration at |Y| = 13, T = 4 with an independent scorer
    e, a = crf_instance(rng, 4, NUM_TAGS)
    seqs = np.array(list(itertools.product(range(NUM_TAGS), repeat=4)))
    big = (a[start_index(NUM_TAGS), seqs[:, 0]] + a[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
           + a[seqs[:, -1], stop_index(NUM_TAGS)] + e[np.arange(4), seqs].sum(axis=1))
    big_err = abs(log_partition(e, a) - logsumexp(big))
    ok = z_err < 1e-10 and viterbi_exact and p_err < 1e-10 and len(seqs) == 28561 and big_err < 1e-9
    report("CRF oracle", ok,
           f"200 instances: |logZ err| {z_err:.1e}, viterbi exact={viterbi_exact}, |sum p - 1| {p_err:.1e}; "
           f"|Y|=13 T=4 ({len(seqs)} seqs) err {big_err:.1e}")


def random_spans(rng):
    n = int(rng.integers(1, 15))
    spans, t = [], 0
    while t < n:
        if rng.random() < 0.35:
            end = min(n - 1, t + int(rng.integers(0, 4)))
            spans.append(AspectSpan(t, end, SENTIMENTS[rng.integers(3)]))
            t = end + 1
        else:
            t += 1
    return n, spans


def test_tag_round_trip_and_repair():
    rng = np.random.default_rng(7)
    round_trip = sum(tags_to_spans(spans_to_tags(n, s)) == s for n, s in (random_spans(rng) for _ in range(1000)))
    invalid = []
    while len(invalid) < 1000:
        seq = [TAGS[i] for i in rng.integers(0, NUM_TAGS, size=int(rng.integers(1, 12)))]
        if not is_valid(seq):
            invalid.append(seq)
    repaired = [repair(seq) for seq in invalid]
    valid = sum(is_valid(r) for r in repaired)
    idem = sum(repair(r) == r for r in repaired)
    ok = round_trip == 1000 and valid == 1000 and idem == 1000
    report("tag round trip", ok, f"round trip {round_trip}/1000, repaired valid {valid}/1000, idempotent {idem}/1000")


def test_metric_oracle():
    rng = np.random.default_rng(11)

    def corpus(n):
        return [[AspectSpan(int(s), int(s + rng.integers(0, 2)), SENTIMENTS[rng.integers(3)])
                 for s in rng.integers(0, 5, size=rng.integers(0, 4))] for _ in range(n)]

    agree = 0
    for _ in range(500):
        n = int(rng.integers(1, 8))
        gold, pred = corpus(n), corpus(n)
        g = {(i, *s) for i, sp in enumerate(gold) for s in sp}
        p = {(i, *s) for i, sp in enumerate(pred) for s in sp}
        r = micro_prf(gold, pred)
        agree += (r.tp, r.fp, r.fn) == (len(g & p), len(p - g), len(g - p))
    hand = micro_prf([[AspectSpan(1, 1, "POS")], [AspectSpan(4, 4, "NEG")]],
                     [[AspectSpan(1, 1, "POS")], [AspectSpan(4, 5, "NEG")]])
    ok = agree == 500 and (hand.precision, hand.recall, hand.f1) == (0.5, 0.5, 0.5)
    report("metric oracle", ok, f"{agree}/500 corpora exact, hand example {hand.line()}")


def test_overfit_sanity():
    corpus = synthetic.generate(30, seed=0)
    cfg = TrainConfig(batch_size=8, max_steps=2000, selection_start=100, selection_every=100,
                      early_stop_f1=0.99)
    t0 = time.perf_counter()
    reached = {}
    for head in HEADS:
        res = train(replace(cfg, head=head), corpus, corpus, seed=1, encoder_config=TOY)
        f1 = evaluate(res.model, index_examples(corpus, res.checkpoint.get_vocab())).f1
        reached[head] = (f1, res.checkpoint.best_step)
    secs = time.perf_counter() - t0
    ok = all(f1 >= 0.99 and step <= 2000 for f1, step in reached.values()) and secs < 600
    detail = ", ".join(f"{h} {f1:.3f}@{s}" for h, (f1, s) in reached.items())
    report("overfit sanity", ok, f"train F1 per head (step): {detail}; {secs:.0f}s < 600s")


def test_protocol_fidelity():
    tr, dv, te = synthetic.splits(60, 60, 60, seed=5)
    cfg = TrainConfig(head="linear", batch_size=8, max_steps=500, selection_start=100, selection_every=100)
    res = multi_seed_run(cfg, tr, dv, te, encoder_config=TOY, seeds=[1, 2, 3, 4, 5, 1])
    again = multi_seed_run(cfg, tr, dv, te, encoder_config=TOY, seeds=[1, 2, 3, 4, 5])
    argmax_ok = True
    for run in res.runs:
        f1s = [row.dev_f1 for row in run.trajectory]
        argmax_ok &= run.dev_f1 == max(f1s) and run.best_step == run.trajectory[int(np.argmax(f1s))].step
    dup_ok = res.runs[0].test == res.runs[5].test and res.runs[0].trajectory == res.runs[5].trajectory
    rerun_ok = [r.test for r in res.runs[:5]] == [r.test for r in again.runs]
    ok = argmax_ok and dup_ok and rerun_ok
    report("protocol fidelity", ok,
           f"selection = trajectory argmax for all seeds: {argmax_ok}; seed 1 twice identical: {dup_ok}; "
           f"5-seed rerun identical: {rerun_ok} (mean {again.line()})")


def test_fine_tune_beats_frozen():
    tr, dv, te = synthetic.splits(200, 200, 200, seed=0)
    cfg = TrainConfig(head="linear", batch_size=8, max_steps=600, selection_start=300, selection_every=100)
    res = compare_frozen(cfg, tr, dv, te, encoder_config=TOY)
    ft, fr = res["fine_tuned"], res["frozen"]
    same = [r.seed for r in ft.runs] == [r.seed for r in fr.runs]
    ok = same and ft.dev_f1 >= fr.dev_f1
    report("fine-tune vs frozen", ok,
           f"mean dev F1 fine-tuned {ft.dev_f1:.3f} >= frozen {fr.dev_f1:.3f} over seeds {list(cfg.seeds)}")


PUBLISHED_COUNTS = {("laptop", ("train",)): (2741, 2041), ("rest", ("train", "dev", "test")): (6035, 6593)}


def _split_file(directory: Path, split: str):
    for suffix in (".conll", ".tsv", ".txt", ".jsonl", ".json"):
        if (directory / f"{split}{suffix}").is_file():
            return directory / f"{split}{suffix}"
    return None


def test_scope_statement_and_dataset_statistics(stats_dir):
    statement = ("published absolute scores are not reproducible here: they need the pretrained "
                 "bert-base-uncased weights and the SemEval data; the property suites stand in for them")
    checked, mismatches = [], []
    if stats_dir:
        for (name, parts), want in PUBLISHED_COUNTS.items():
            files = [_split_file(Path(stats_dir) / name, p) for p in parts]
            if None in files:
                continue
            counts = np.sum([stats(load_examples(f)) for f in files], axis=0)
            checked.append(f"{name} {tuple(int(c) for c in counts)}")
            if tuple(counts) != want:
                mismatches.append(f"{name} expected {want}")
    if checked:
        detail = f"{statement}; dataset statistics {', '.join(checked)}" + (
            f" MISMATCH {mismatches}" if mismatches else " match")
    else:
        detail = f"{statement}; dataset statistics not checked (no files supplied via --dataset-stats-dir)"
    report("desk-scale scope", not mismatches, detail)


def test_stability():
    tr, dv = synthetic.generate(200, seed=0), synthetic.generate(200, seed=1000)
    cfg = TrainConfig(batch_size=8, max_steps=3000, selection_start=100, selection_every=100)
    parts, ok = [], True
    for head in ("gru", "tfm", "crf"):
        res = train(replace(cfg, head=head), tr, dv, seed=1, encoder_config=TOY)
        f1s = [row.dev_f1 for row in res.trajectory]
        peak = int(np.argmax(f1s))
        drop = f1s[peak] - min(f1s[peak:])
        ok &= drop <= 0.05 and res.trajectory[-1].step == 3000
        parts.append(f"{head} peak {f1s[peak]:.3f}@{res.trajectory[peak].step} max drop {drop:.3f}")
    report("stability", ok, "; ".join(parts) + " (limit 0.05)")
