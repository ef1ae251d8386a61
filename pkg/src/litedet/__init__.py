"""litedet: a deterministic NumPy workbench for lightweight single-stage
detector architectures.

The library builds detector variants from declarative JSON layer tables, runs
seeded forward inference on the constituent blocks (ghost convolutions, a
multi-head self-attention stage, coordinate attention, weighted feature
fusion), counts parameters and MACs analytically, evaluates detections with
11-point interpolated mAP, and applies label-consistent offline augmentation.
"""

from . import analysis, augment, blocks, checks, graph, metrics, ops

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "augment",
    "blocks",
    "checks",
    "graph",
    "metrics",
    "ops",
    "__version__",
]
