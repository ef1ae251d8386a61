"""Declarative layer configs resolved into runnable model graphs.

A config is a JSON document:

    {
      "nc": 1,                      # optional class-count override
      "layers": [
        {"from": [-1], "n": 1, "kind": "conv", "args": [32, 6, 2, 2]},
        ...
      ]
    }

The array index is the layer index.  "from" holds input layer indices
(negative values are relative, -1 meaning the previous layer) and must only
reference earlier layers.  "n" is the repeat count (bottlenecks inside CSP
stages, encoder depth for the transformer stage).  Channel arguments are the
resolved values, output channels first, mirroring the (from, n, kind, args)
layer tables that single-stage detector families are specified with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import blocks, ops
from .imageio import write_pgm

F32 = np.float32

KNOWN_KINDS = (
    "conv",
    "ghost_conv",
    "ghost_bottleneck",
    "c3",
    "c3_ghost",
    "c3tr",
    "sppf",
    "coord_att",
    "upsample",
    "concat",
    "bifpn_fuse",
    "bifpn_concat",
    "detect",
)

# kinds whose repeat count may exceed 1 (repetition happens inside the block)
_REPEATABLE = {"c3", "c3_ghost", "c3tr"}
_MULTI_INPUT = {"concat", "bifpn_fuse", "bifpn_concat", "detect"}


class ConfigError(ValueError):
    """Malformed config document or unsatisfiable layer wiring."""


@dataclass(frozen=True)
class LayerSpec:
    index: int
    frm: tuple
    repeats: int
    kind: str
    args: tuple


def parse_config(text):
    """Parse a JSON config document into (nc_override, [LayerSpec]).

    Rejects unknown block kinds, forward references and malformed entries;
    syntax errors carry the JSON line number.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"syntax error at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ConfigError("config must be an object with a 'layers' array")
    nc = doc.get("nc")
    if nc is not None and (not isinstance(nc, int) or nc < 1):
        raise ConfigError(f"nc must be a positive integer, got {nc!r}")
    layers = doc["layers"]
    if not isinstance(layers, list):
        raise ConfigError("'layers' must be an array")

    specs = []
    for i, entry in enumerate(layers):
        if not isinstance(entry, dict):
            raise ConfigError(f"layer {i}: entry must be an object")
        frm = entry.get("from", [-1])
        if isinstance(frm, int):
            frm = [frm]
        if not isinstance(frm, list) or not frm or not all(isinstance(f, int) for f in frm):
            raise ConfigError(f"layer {i}: 'from' must be a non-empty list of integers")
        resolved = []
        for f in frm:
            j = i + f if f < 0 else f
            if not 0 <= j < i and not (i == 0 and f == -1):
                raise ConfigError(f"layer {i}: 'from' reference {f} is not an earlier layer")
            resolved.append(j)
        if i == 0:
            resolved = [-1]  # network input
        repeats = entry.get("n", 1)
        if not isinstance(repeats, int) or repeats < 1:
            raise ConfigError(f"layer {i}: repeat count must be >= 1, got {repeats!r}")
        kind = entry.get("kind")
        if kind not in KNOWN_KINDS:
            raise ConfigError(f"layer {i}: unknown block kind {kind!r}")
        if repeats > 1 and kind not in _REPEATABLE:
            raise ConfigError(f"layer {i}: kind {kind!r} does not support n > 1")
        args = entry.get("args", [])
        if not isinstance(args, list):
            raise ConfigError(f"layer {i}: 'args' must be a list")
        if len(resolved) > 1 and kind not in _MULTI_INPUT:
            raise ConfigError(f"layer {i}: kind {kind!r} takes a single input")
        specs.append(LayerSpec(i, tuple(resolved), repeats, kind, tuple(args)))
    return nc, specs


def load_config(path):
    """Read and parse a config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def _int_args(spec, defaults):
    vals = list(spec.args) + list(defaults[len(spec.args):])
    return vals


def _build_layer(spec, in_shapes, nc, rng):
    """Instantiate one layer; returns (block, output shape(s))."""
    kind, args = spec.kind, list(spec.args)

    def arg(i, default=None):
        if i < len(args):
            return args[i]
        if default is None:
            raise ConfigError(f"layer {spec.index}: missing argument {i} for {kind}")
        return default

    try:
        if kind in ("conv", "ghost_conv"):
            c1 = in_shapes[0][0]
            c2, k, s = arg(0), arg(1, 1), arg(2, 1)
            if kind == "conv":
                p = arg(3, k // 2)
                block = blocks.ConvBlock(c1, c2, k, s, p=p, rng=rng)
            else:
                block = blocks.GhostConv(c1, c2, k, s, rng=rng)
        elif kind == "ghost_bottleneck":
            c1 = in_shapes[0][0]
            block = blocks.GhostBottleneck(c1, arg(0), arg(1, 3), arg(2, 1), rng=rng)
        elif kind in ("c3", "c3_ghost"):
            c1 = in_shapes[0][0]
            c2, shortcut = arg(0), bool(arg(1, True))
            block = blocks.C3(c1, c2, n=spec.repeats, shortcut=shortcut,
                              ghost=(kind == "c3_ghost"), rng=rng)
        elif kind == "c3tr":
            c1 = in_shapes[0][0]
            block = blocks.C3TR(c1, arg(0), n=spec.repeats, heads=arg(1, 4), rng=rng)
        elif kind == "sppf":
            c1 = in_shapes[0][0]
            block = blocks.SPPF(c1, arg(0), arg(1, 5), rng=rng)
        elif kind == "coord_att":
            block = blocks.CoordAtt(in_shapes[0][0], reduction=arg(0, 32), rng=rng)
        elif kind == "upsample":
            block = blocks.Upsample(arg(0, 2))
        elif kind == "concat":
            block = blocks.Concat()
        elif kind == "bifpn_fuse":
            block = blocks.WeightedSumFuse(len(in_shapes))
        elif kind == "bifpn_concat":
            block = blocks.WeightedConcat(len(in_shapes))
        elif kind == "detect":
            block = blocks.Detect(nc, ch=[s[0] for s in in_shapes], rng=rng)
        else:  # pragma: no cover - guarded by parse_config
            raise ConfigError(f"layer {spec.index}: unknown kind {kind!r}")

        if kind in _MULTI_INPUT:
            out = block.output_shape(in_shapes)
        else:
            out = block.output_shape(in_shapes[0])
    except (ops.ShapeError, ValueError) as e:
        raise ConfigError(f"layer {spec.index} ({kind}): {e}") from e
    return block, out


@dataclass
class ModelGraph:
    """A built model: layer specs, instantiated blocks and inferred shapes."""

    specs: list
    blocks: list
    shapes: list          # per layer: (C, H, W), or a list of them for detect
    nc: int
    input_size: int
    seed: int
    detect_index: int = -1
    _needed: set = field(default_factory=set)

    @property
    def strides(self):
        if self.detect_index < 0:
            return ()
        return tuple(self.input_size // s[1] for s in self.shapes[self.detect_index])

    def layer_blocks(self):
        return list(zip(self.specs, self.blocks, self.shapes))

    def total_params(self):
        return sum(b.param_count() for b in self.blocks)

    def forward(self, x, keep=None):
        """Run the graph on x (N, 3, S, S).

        Returns (outputs, kept) where outputs is the final layer's result
        (per-scale raw maps for detect configs) and kept maps any layer index
        listed in `keep` to its activation.
        """
        x = np.asarray(x, dtype=F32)
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != self.input_size or x.shape[3] != self.input_size:
            raise ops.ShapeError(
                f"input must be (N, 3, {self.input_size}, {self.input_size}), got {x.shape}"
            )
        keep = set(keep or ())
        cache = {}
        prev = x
        out = None
        for spec, block in zip(self.specs, self.blocks):
            ins = [x if j == -1 else (prev if j == spec.index - 1 else cache[j]) for j in spec.frm]
            out = block.forward(ins if spec.kind in _MULTI_INPUT else ins[0])
            leaves = out if isinstance(out, list) else [out]
            for leaf in leaves:
                if not np.isfinite(leaf).all():
                    raise ArithmeticError(f"non-finite activation at layer {spec.index} ({spec.kind})")
            if spec.index in self._needed or spec.index in keep:
                cache[spec.index] = out
            prev = out
        kept = {i: cache[i] for i in keep if i in cache}
        return out, kept

    def export_feature_maps(self, x, layer_index, directory):
        """Write one min-max normalized grayscale PGM per channel of a layer.

        Constant channels map to all-black.  Files are named
        layer<idx>_ch<k>.pgm; returns the written paths in channel order.
        """
        if not 0 <= layer_index < len(self.specs):
            raise IndexError(f"layer index {layer_index} out of range 0..{len(self.specs) - 1}")
        if self.specs[layer_index].kind == "detect":
            raise IndexError("feature export targets a single-map layer, not the detection head")
        _, kept = self.forward(x, keep=[layer_index])
        fmap = kept[layer_index][0]  # first sample: (C, H, W)
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, ch in enumerate(fmap):
            lo, hi = float(ch.min()), float(ch.max())
            if hi > lo:
                img = np.rint((ch.astype(np.float64) - lo) / (hi - lo) * 255.0).astype(np.uint8)
            else:
                img = np.zeros(ch.shape, dtype=np.uint8)
            path = directory / f"layer{layer_index}_ch{k}.pgm"
            write_pgm(path, img)
            paths.append(path)
        return paths


def build(specs, nc=1, input_size=640, seed=0):
    """Instantiate a parsed layer list into a ModelGraph.

    Shapes are inferred top-down before any forward is permitted; weights are
    seeded deterministically, so equal seeds give byte-identical graphs.
    """
    if input_size % 32:
        raise ConfigError(f"input size must be divisible by 32, got {input_size}")
    if nc < 1:
        raise ConfigError(f"class count must be >= 1, got {nc}")
    if not specs:
        raise ConfigError("config has no layers to build")
    rng = np.random.default_rng(seed)
    shapes, built = [], []
    detect_index = -1
    input_shape = (3, input_size, input_size)
    for spec in specs:
        in_shapes = [input_shape if j == -1 else shapes[j] for j in spec.frm]
        for j, s in zip(spec.frm, in_shapes):
            if isinstance(s, list):
                raise ConfigError(f"layer {spec.index}: cannot consume detection output (layer {j})")
        block, out = _build_layer(spec, in_shapes, nc, rng)
        if spec.kind == "detect":
            if detect_index >= 0:
                raise ConfigError(f"layer {spec.index}: multiple detection heads")
            detect_index = spec.index
        built.append(block)
        shapes.append(out)

    graph = ModelGraph(
        specs=list(specs),
        blocks=built,
        shapes=shapes,
        nc=nc,
        input_size=input_size,
        seed=seed,
        detect_index=detect_index,
    )
    # only outputs referenced by a non-adjacent later layer need caching;
    # the previous layer's output is threaded directly
    graph._needed = {
        j for spec in specs for j in spec.frm if j >= 0 and j != spec.index - 1
    }

    if detect_index >= 0:
        strides = graph.strides
        if sorted(strides) != [8, 16, 32]:
            raise ConfigError(
                f"detection head needs strides 8/16/32, inferred {strides} "
                f"at input size {input_size}"
            )
    return graph


def build_from_file(path, nc=None, input_size=640, seed=0):
    """Load, parse and build a config file; the file's nc wins over the default."""
    file_nc, specs = load_config(path)
    return build(specs, nc=file_nc if file_nc is not None else (nc or 1), input_size=input_size, seed=seed)
