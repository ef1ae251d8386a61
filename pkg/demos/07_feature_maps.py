"""Run a seeded forward pass through the full lightweight variant and export
one layer's channel activations as PGM images (demo_output/features/).

Each channel is min-max normalized to [0, 255]; constant channels map to
black.  The same export backs `litedet dump-features`.
"""

from pathlib import Path

import numpy as np

from litedet import analysis
from litedet.graph import build_from_file
from litedet.imageio import read_pgm

config = analysis.CONFIG_DIR / "ghost_transformer_bifpn.json"
graph = build_from_file(config, nc=1, input_size=128, seed=0)

x = np.random.default_rng(1).uniform(-1, 1, (1, 3, 128, 128)).astype(np.float32)
outs, _ = graph.forward(x)
print("per-scale raw outputs:")
for i, o in enumerate(outs):
    print(f"  scale {i}: {o.shape}  stride {128 // o.shape[2]}  "
          f"range [{o.min():+.5f}, {o.max():+.5f}]")

layer = 2  # first CSP stage of the ghost backbone
out_dir = Path("demo_output/features")
paths = graph.export_feature_maps(x, layer, out_dir)
print(f"\nexported {len(paths)} channel maps of layer {layer} "
      f"(shape {graph.shapes[layer]}) to {out_dir}/")

sample = read_pgm(paths[0])
print("first map:", sample.shape, "value range", (int(sample.min()), int(sample.max())))
