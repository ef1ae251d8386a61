"""A tour of the detector building blocks.

Each block allocates seeded weights at construction, runs a pure forward on
NCHW float32 arrays, and can report its exact deploy-form parameter count and
per-input MAC cost.
"""

import numpy as np

from litedet.blocks import (
    C3,
    C3TR,
    SPPF,
    ConvBlock,
    CoordAtt,
    Detect,
    GhostBottleneck,
    GhostConv,
)

rng = np.random.default_rng(0)
x = rng.uniform(-1, 1, (1, 64, 16, 16)).astype(np.float32)

# --- plain conv stage vs its ghost counterpart --------------------------------
conv = ConvBlock(64, 128, k=3, s=1, rng=np.random.default_rng(1))
ghost = GhostConv(64, 128, k=3, s=1, rng=np.random.default_rng(1))

print("conv block   :", conv(x).shape, f"params={conv.param_count():,}",
      f"MACs={conv.macs((64, 16, 16)):,}")
print("ghost conv   :", ghost(x).shape, f"params={ghost.param_count():,}",
      f"MACs={ghost.macs((64, 16, 16)):,}")
print("ghost/plain MAC ratio:",
      round(ghost.macs((64, 16, 16)) / conv.macs((64, 16, 16)), 3))

# the first half of the ghost output is exactly the primary conv path
y = ghost(x)
print("primary channels match:", np.array_equal(y[:, :64], ghost.primary(x)))

# --- bottlenecks and CSP stages ------------------------------------------------
gb = GhostBottleneck(64, 64, rng=np.random.default_rng(2))
c3 = C3(64, 64, n=1, rng=np.random.default_rng(3))
c3g = C3(64, 64, n=1, ghost=True, rng=np.random.default_rng(3))
print("\nghost bottleneck params:", f"{gb.param_count():,}")
print("csp stage params  plain:", f"{c3.param_count():,}", " ghost:", f"{c3g.param_count():,}")

# --- pooling tail, attention stage, coordinate attention -----------------------
sppf = SPPF(64, 64, k=5, rng=np.random.default_rng(4))
tr = C3TR(64, 64, n=1, heads=4, rng=np.random.default_rng(5))
ca = CoordAtt(64, reduction=32, rng=np.random.default_rng(6))
print("\nsppf      :", sppf(x).shape, f"params={sppf.param_count():,}")
print("c3 + attn :", tr(x).shape, f"params={tr.param_count():,}")
print("coord attn:", ca(x).shape, f"params={ca.param_count():,}")

# attention weights inside the transformer stage are softmax rows
attn = tr.m[0].attention_weights(tr.cv1(x))[0]
print("attention rows sum to 1:", np.allclose(attn.sum(-1), 1.0, atol=1e-6))

# --- detection head -------------------------------------------------------------
head = Detect(nc=1, ch=(64, 64, 64), rng=np.random.default_rng(7))
feats = [np.zeros((1, 64, s, s), dtype=np.float32) for s in (8, 4, 2)]
raws = head.forward(feats)
print("\nhead raw shapes:", [r.shape for r in raws], f"params={head.param_count():,}")
dets = head.decode(raws, img_size=64, conf_thr=0.2)
print("decoded boxes at zero logits:", len(dets),
      "(each centered in its cell, sized exactly like its anchor)")
