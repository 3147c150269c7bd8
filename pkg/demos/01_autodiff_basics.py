"""
Reverse-mode autodiff on numpy arrays
=====================================

Build a tiny expression, call backward, and compare against a finite difference.
"""

import numpy as np

from e2e_absa import autodiff as ad
from e2e_absa.autodiff import Tensor

rng = np.random.default_rng(0)

# a leaf that wants gradients, and a constant
w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
x = Tensor(rng.normal(size=(2, 3)))

# softmax over a linear map, then the mean log of the first column
probs = ad.softmax_rows(x @ w)
loss = ad.scale(ad.mean(ad.log(ad.slice_cols(probs, 0, 1))), -1.0)
print("loss", float(loss.data))

ad.backward(loss)
print("dloss/dw\n", w.grad)

# the tape lists every op between the loss and the leaves, in execution order
tape = ad.ComputationTape.from_output(loss)
print("ops on tape:", [t.op for t in tape.nodes])

# finite-difference check of a single entry
h = 1e-6
w.data[1, 2] += h
up = float(ad.scale(ad.mean(ad.log(ad.slice_cols(ad.softmax_rows(x @ w), 0, 1))), -1.0).data)
w.data[1, 2] -= 2 * h
down = float(ad.scale(ad.mean(ad.log(ad.slice_cols(ad.softmax_rows(x @ w), 0, 1))), -1.0).data)
w.data[1, 2] += h
print("analytic %.8f  numeric %.8f" % (w.grad[1, 2], (up - down) / (2 * h)))

# nothing is recorded inside no_grad
with ad.no_grad():
    y = x @ w
print("recorded under no_grad:", bool(y._parents))
