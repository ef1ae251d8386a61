"""Numeric self-checks: analytic fusion-weight gradients against 64-bit
central differences, and attention-row normalization across seeded trials.

The same checks back the `litedet gradcheck` command.
"""

import numpy as np

from litedet.blocks import FusionWeights, fuse_weighted_sum, fuse_weighted_sum_grad
from litedet.checks import check_attention_rows, check_fusion_gradients

# --- fast normalized fusion, by hand first ---------------------------------------
ws = FusionWeights(np.array([1.0, 1.0]), eps=1e-4)
a, b = np.array([2.0]), np.array([4.0])
print("fuse( w=(1,1), inputs=(2,4) ) =", fuse_weighted_sum(ws, [a, b]).item(),
      " (= 6 / (2 + 1e-4))")

# analytic gradient vs the quotient-rule closed form for one input
w, eps = 0.7, 1e-4
x = np.array([[1.0, -2.0], [0.5, 3.0]])
up = np.ones_like(x)
g = fuse_weighted_sum_grad(FusionWeights(np.array([w]), eps), [x], up)
closed = float(np.sum(up * x) * eps / (eps + w) ** 2)
print("single-input gradient:", g[0], " closed form:", closed)

# --- the full seeded check suites --------------------------------------------------
for result in (check_fusion_gradients(trials=100, seed=0),
               check_attention_rows(trials=100, seed=0)):
    print(result.summary())
