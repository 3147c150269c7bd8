"""
Linear-chain CRF: forward algorithm, Viterbi and brute force
============================================================
"""

import numpy as np

from e2e_absa.crf import brute_force, init_transitions, log_partition, marginal_gradients, sequence_score, viterbi

rng = np.random.default_rng(3)
k, t = 4, 5
emissions = rng.normal(size=(t, k))
transitions = init_transitions(rng, k)  # START column / STOP row pinned at -1e4
transitions[:k, :k] = rng.normal(size=(k, k))
transitions[k, :k] = rng.normal(size=k)  # START -> tag
transitions[:k, k + 1] = rng.normal(size=k)  # tag -> STOP

log_z, best, scores = brute_force(emissions, transitions)
print("sequences enumerated:", len(scores))
print("log Z  forward %.12f  brute force %.12f" % (log_partition(emissions, transitions), log_z))

path = viterbi(emissions, transitions)
print("viterbi", path, "score %.6f  best by enumeration %.6f" % (sequence_score(emissions, transitions, path), best))

# gradients of the NLL are marginals minus gold counts
gold = [0, 1, 1, 2, 3]
nll, g_emit, g_trans = marginal_gradients(emissions, transitions, gold)
print("nll %.4f" % nll)
print("emission gradient rows sum to zero:", np.allclose(g_emit.sum(axis=1), 0.0))
