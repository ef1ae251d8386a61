"""Composite detector blocks: conv stages, ghost convolutions, CSP stages,
a multi-head self-attention stage, coordinate attention, weighted feature
fusion, and the per-scale detection head.

Weights live in deploy form: every conv+batchnorm pair is stored folded as
(kernel, per-channel bias), and bare normalizations fold to a per-channel
(scale, shift) pair.  Parameter counts therefore equal exactly the number of
scalars a fused inference graph carries, which is the convention the published
model-size tables use.

Seeding: kernels and projection matrices draw uniform [-0.1, 0.1] from the
supplied generator in construction order; biases start at zero (the fold of an
identity batchnorm); fusion weights start at 1.0.  Construction order is fixed,
so a given seed always yields byte-identical weights.

MAC accounting counts multiply-accumulates of conv kernels, linear maps and
attention matmuls over actual output sizes; elementwise work (bias, activation,
pooling, resampling) is not counted.  GFLOPs = 2 * MACs / 1e9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .ops import ShapeError

F32 = np.float32

# default anchor boxes (w, h in input pixels) for strides 8 / 16 / 32
DEFAULT_ANCHORS = (
    ((10, 13), (16, 30), (33, 23)),
    ((30, 61), (62, 45), (59, 119)),
    ((116, 90), (156, 198), (373, 326)),
)


def _uniform(rng, shape):
    return rng.uniform(-0.1, 0.1, size=shape).astype(F32)


def conv_block_params(c1, c2, k=1, groups=1):
    """Deploy-form parameter count of a conv+norm block: kernel + folded bias."""
    return c1 * c2 * k * k // groups + c2


def ghost_conv_params(c1, c2, k=1):
    """Closed-form deploy parameter count of a ghost convolution."""
    hidden = c2 // 2
    return conv_block_params(c1, hidden, k) + conv_block_params(hidden, hidden, 5, groups=hidden)


class Block:
    """Base for weight-carrying blocks.

    Subclasses list ndarray attributes in `_fields` and sub-block attributes
    (single blocks or lists of blocks) in `_children`; parameter enumeration
    and counting walk those declarations recursively.
    """

    _fields: tuple = ()
    _children: tuple = ()

    def parameters(self):
        """Yield (dotted_name, ndarray) for every stored weight scalar group."""
        for name in self._fields:
            yield name, getattr(self, name)
        for name in self._children:
            child = getattr(self, name)
            if child is None:
                continue
            if isinstance(child, (list, tuple)):
                for i, sub in enumerate(child):
                    for sub_name, arr in sub.parameters():
                        yield f"{name}.{i}.{sub_name}", arr
            else:
                for sub_name, arr in child.parameters():
                    yield f"{name}.{sub_name}", arr

    def param_count(self):
        """Number of stored weight scalars (enumeration, not a formula)."""
        return sum(arr.size for _, arr in self.parameters())

    def __call__(self, x):
        return self.forward(x)


class ConvBlock(Block):
    """k x k conv (folded norm as bias) followed by SiLU unless act=False."""

    _fields = ("weight", "bias")

    def __init__(self, c1, c2, k=1, s=1, p=None, g=1, act=True, rng=None):
        if c1 < 1 or c2 < 1:
            raise ValueError(f"channel counts must be positive, got {c1}->{c2}")
        if c1 % g or c2 % g:
            raise ShapeError(f"channels {c1}->{c2} not divisible by groups {g}")
        self.c1, self.c2, self.k, self.s, self.g = c1, c2, k, s, g
        self.p = k // 2 if p is None else p
        self.act = act
        rng = rng or np.random.default_rng(0)
        self.weight = _uniform(rng, (c2, c1 // g, k, k))
        self.bias = np.zeros(c2, dtype=F32)

    def forward(self, x):
        y = ops.conv2d(x, self.weight, self.bias, stride=self.s, pad=self.p, groups=self.g)
        return ops.silu(y) if self.act else y

    def output_shape(self, chw):
        c, h, w = chw
        if c != self.c1:
            raise ShapeError(f"conv expects {self.c1} input channels, got {c}")
        ho, wo = ops.conv_output_hw(h, w, self.k, self.k, self.s, self.p)
        return (self.c2, ho, wo)

    def macs(self, chw):
        _, ho, wo = self.output_shape(chw)
        return self.k * self.k * (self.c1 // self.g) * self.c2 * ho * wo


class GhostConv(Block):
    """Half the output channels from a full conv, the rest from a cheap 5x5
    depthwise conv on the primary output, concatenated primary-first."""

    _children = ("primary", "cheap")

    def __init__(self, c1, c2, k=1, s=1, act=True, rng=None):
        if c2 % 2:
            raise ValueError(f"ghost conv needs an even output channel count, got {c2}")
        hidden = c2 // 2
        self.c1, self.c2, self.k, self.s = c1, c2, k, s
        self.primary = ConvBlock(c1, hidden, k, s, act=act, rng=rng)
        self.cheap = ConvBlock(hidden, hidden, 5, 1, g=hidden, act=act, rng=rng)

    def forward(self, x):
        y = self.primary(x)
        return ops.concat_channels([y, self.cheap(y)])

    def output_shape(self, chw):
        c, h, w = self.primary.output_shape(chw)
        return (self.c2, h, w)

    def macs(self, chw):
        return self.primary.macs(chw) + self.cheap.macs(self.primary.output_shape(chw))


class GhostBottleneck(Block):
    """Ghost expand -> (depthwise conv when striding) -> linear ghost project,
    with an additive shortcut."""

    _children = ("gc1", "dw", "gc2", "shortcut_dw", "shortcut_pw")

    def __init__(self, c1, c2, k=3, s=1, rng=None):
        if s not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {s}")
        mid = c2 // 2
        self.c1, self.c2, self.k, self.s = c1, c2, k, s
        self.gc1 = GhostConv(c1, mid, 1, 1, rng=rng)
        self.dw = ConvBlock(mid, mid, k, s, g=mid, act=False, rng=rng) if s == 2 else None
        self.gc2 = GhostConv(mid, c2, 1, 1, act=False, rng=rng)
        if s == 2:
            self.shortcut_dw = ConvBlock(c1, c1, k, s, g=c1, act=False, rng=rng)
            self.shortcut_pw = ConvBlock(c1, c2, 1, 1, act=False, rng=rng)
        else:
            self.shortcut_dw = self.shortcut_pw = None
        self.add_identity = s == 1 and c1 == c2

    def forward(self, x):
        y = self.gc1(x)
        if self.dw is not None:
            y = self.dw(y)
        y = self.gc2(y)
        if self.s == 2:
            return y + self.shortcut_pw(self.shortcut_dw(x))
        return y + x if self.add_identity else y

    def output_shape(self, chw):
        shape = self.gc1.output_shape(chw)
        if self.dw is not None:
            shape = self.dw.output_shape(shape)
        return self.gc2.output_shape(shape)

    def macs(self, chw):
        total = self.gc1.macs(chw)
        shape = self.gc1.output_shape(chw)
        if self.dw is not None:
            total += self.dw.macs(shape)
            shape = self.dw.output_shape(shape)
        total += self.gc2.macs(shape)
        if self.s == 2:
            total += self.shortcut_dw.macs(chw)
            total += self.shortcut_pw.macs(self.shortcut_dw.output_shape(chw))
        return total


class Bottleneck(Block):
    """1x1 reduce, 3x3 conv, optional identity shortcut (full hidden width)."""

    _children = ("cv1", "cv2")

    def __init__(self, c1, c2, shortcut=True, rng=None):
        self.c1, self.c2 = c1, c2
        self.cv1 = ConvBlock(c1, c2, 1, 1, rng=rng)
        self.cv2 = ConvBlock(c2, c2, 3, 1, rng=rng)
        self.add = shortcut and c1 == c2

    def forward(self, x):
        y = self.cv2(self.cv1(x))
        return x + y if self.add else y

    def output_shape(self, chw):
        return self.cv2.output_shape(self.cv1.output_shape(chw))

    def macs(self, chw):
        return self.cv1.macs(chw) + self.cv2.macs(self.cv1.output_shape(chw))


class C3(Block):
    """Cross-stage-partial stage: two 1x1 branches to half width, n bottlenecks
    (ghost variant when ghost=True) on one branch, concat, 1x1 merge."""

    _children = ("cv1", "cv2", "cv3", "m")

    def __init__(self, c1, c2, n=1, shortcut=True, ghost=False, rng=None):
        if n < 1:
            raise ValueError(f"repeat count must be >= 1, got {n}")
        mid = c2 // 2
        self.c1, self.c2, self.n, self.ghost = c1, c2, n, ghost
        self.cv1 = ConvBlock(c1, mid, 1, 1, rng=rng)
        self.cv2 = ConvBlock(c1, mid, 1, 1, rng=rng)
        self.cv3 = ConvBlock(2 * mid, c2, 1, 1, rng=rng)
        if ghost:
            self.m = [GhostBottleneck(mid, mid, rng=rng) for _ in range(n)]
        else:
            self.m = [Bottleneck(mid, mid, shortcut, rng=rng) for _ in range(n)]

    def forward(self, x):
        y = self.cv1(x)
        for b in self.m:
            y = b(y)
        return self.cv3(ops.concat_channels([y, self.cv2(x)]))

    def output_shape(self, chw):
        c, h, w = chw
        if c != self.c1:
            raise ShapeError(f"stage expects {self.c1} input channels, got {c}")
        return (self.c2, h, w)

    def macs(self, chw):
        _, h, w = chw
        mid_shape = (self.cv1.c2, h, w)
        total = self.cv1.macs(chw) + self.cv2.macs(chw)
        for b in self.m:
            total += b.macs(mid_shape)
        return total + self.cv3.macs((2 * self.cv1.c2, h, w))


class SPPF(Block):
    """Fast spatial pyramid pooling: 1x1 reduce, three chained same-stride
    max-pools, concat of the four maps, 1x1 expand."""

    _children = ("cv1", "cv2")

    def __init__(self, c1, c2, k=5, rng=None):
        if k % 2 == 0:
            raise ValueError(f"pooling kernel must be odd, got {k}")
        mid = c1 // 2
        self.c1, self.c2, self.k = c1, c2, k
        self.cv1 = ConvBlock(c1, mid, 1, 1, rng=rng)
        self.cv2 = ConvBlock(4 * mid, c2, 1, 1, rng=rng)

    def forward(self, x):
        y = self.cv1(x)
        p1 = ops.maxpool2d(y, self.k, 1, self.k // 2)
        p2 = ops.maxpool2d(p1, self.k, 1, self.k // 2)
        p3 = ops.maxpool2d(p2, self.k, 1, self.k // 2)
        return self.cv2(ops.concat_channels([y, p1, p2, p3]))

    def output_shape(self, chw):
        c, h, w = chw
        if c != self.c1:
            raise ShapeError(f"sppf expects {self.c1} input channels, got {c}")
        return (self.c2, h, w)

    def macs(self, chw):
        _, h, w = chw
        return self.cv1.macs(chw) + self.cv2.macs((4 * self.cv1.c2, h, w))


def multi_head_attention(q, k, v, heads):
    """Scaled dot-product attention over pre-projected q, k, v of shape
    (N, T, c), split into `heads` heads.

    Returns (output (N, T, c), attention weights (N, heads, T, T)); every
    weight row is a softmax and sums to 1.
    """
    n, t, c = q.shape
    if c % heads:
        raise ShapeError(f"embedding width {c} not divisible by {heads} heads")
    dk = c // heads

    def split(x):
        return x.reshape(n, t, heads, dk).transpose(0, 2, 1, 3)  # (N, h, T, dk)

    qh, kh, vh = split(q), split(k), split(v)
    scores = (qh * (1.0 / math.sqrt(dk))) @ kh.transpose(0, 1, 3, 2)
    attn = ops.softmax_lastdim(scores)
    out = attn @ vh
    out = out.transpose(0, 2, 1, 3).reshape(n, t, c)
    return out, attn


class TransformerLayer(Block):
    """Single encoder layer: separate q/k/v maps feeding a jointly-projected
    multi-head attention with residual, then a two-layer linear stack with
    residual (no normalization layers), following the detector-framework
    convention."""

    _fields = ("wq", "wk", "wv", "w_in", "b_in", "w_out", "b_out", "w_fc1", "w_fc2")

    def __init__(self, c, heads, rng=None):
        if c % heads:
            raise ShapeError(f"embedding width {c} not divisible by {heads} heads")
        self.c, self.heads = c, heads
        rng = rng or np.random.default_rng(0)
        self.wq = _uniform(rng, (c, c))
        self.wk = _uniform(rng, (c, c))
        self.wv = _uniform(rng, (c, c))
        self.w_in = _uniform(rng, (3 * c, c))
        self.b_in = np.zeros(3 * c, dtype=F32)
        self.w_out = _uniform(rng, (c, c))
        self.b_out = np.zeros(c, dtype=F32)
        self.w_fc1 = _uniform(rng, (c, c))
        self.w_fc2 = _uniform(rng, (c, c))

    def forward(self, p, return_attn=False):
        c = self.c
        q = ops.linear(ops.linear(p, self.wq), self.w_in[:c], self.b_in[:c])
        k = ops.linear(ops.linear(p, self.wk), self.w_in[c:2 * c], self.b_in[c:2 * c])
        v = ops.linear(ops.linear(p, self.wv), self.w_in[2 * c:], self.b_in[2 * c:])
        attn_out, attn = multi_head_attention(q, k, v, self.heads)
        p = p + ops.linear(attn_out, self.w_out, self.b_out)
        p = p + ops.linear(ops.linear(p, self.w_fc1), self.w_fc2)
        return (p, attn) if return_attn else p

    def macs_per_token_setup(self, t):
        # 7 c*c linear maps per token plus the two T*T attention matmuls
        return 7 * t * self.c * self.c + 2 * t * t * self.c


class TransformerStage(Block):
    """Self-attention over the flattened H*W token sequence of an NCHW map.

    Adds a learned positional embedding (a linear map of the tokens), runs
    `layers` encoder layers, and reshapes back to N, c, H, W.
    """

    _fields = ("pos_w", "pos_b")
    _children = ("layers",)

    def __init__(self, c, heads=4, layers=1, rng=None):
        if c % heads:
            raise ShapeError(f"channel count {c} not divisible by {heads} heads")
        self.c, self.heads, self.n_layers = c, heads, layers
        rng = rng or np.random.default_rng(0)
        self.pos_w = _uniform(rng, (c, c))
        self.pos_b = np.zeros(c, dtype=F32)
        self.layers = [TransformerLayer(c, heads, rng=rng) for _ in range(layers)]

    def _run(self, x, collect_attn):
        n, c, h, w = x.shape
        if c != self.c:
            raise ShapeError(f"stage expects {self.c} channels, got {c}")
        p = x.reshape(n, c, h * w).transpose(0, 2, 1)  # (N, T, c)
        p = p + ops.linear(p, self.pos_w, self.pos_b)
        maps = []
        for layer in self.layers:
            p, attn = layer.forward(p, return_attn=True)
            if collect_attn:
                maps.append(attn)
        out = p.transpose(0, 2, 1).reshape(n, c, h, w)
        return out, maps

    def forward(self, x):
        return self._run(x, collect_attn=False)[0]

    def attention_weights(self, x):
        """Per-layer attention maps (N, heads, T, T) for a given input."""
        return self._run(x, collect_attn=True)[1]

    def output_shape(self, chw):
        c, h, w = chw
        if c != self.c:
            raise ShapeError(f"stage expects {self.c} channels, got {c}")
        return chw

    def macs(self, chw):
        _, h, w = chw
        t = h * w
        total = t * self.c * self.c  # positional embedding
        for layer in self.layers:
            total += layer.macs_per_token_setup(t)
        return total


class C3TR(C3):
    """CSP stage whose bottleneck branch is a transformer encoder."""

    def __init__(self, c1, c2, n=1, heads=4, rng=None):
        super().__init__(c1, c2, n=1, shortcut=True, rng=rng)
        mid = c2 // 2
        self.m = [TransformerStage(mid, heads=heads, layers=n, rng=rng)]
        self.n = n

    def macs(self, chw):
        _, h, w = chw
        mid_shape = (self.cv1.c2, h, w)
        return (
            self.cv1.macs(chw)
            + self.cv2.macs(chw)
            + self.m[0].macs(mid_shape)
            + self.cv3.macs((2 * self.cv1.c2, h, w))
        )


class CoordAtt(Block):
    """Coordinate attention: directional average pooling along each spatial
    axis, a shared 1x1 reduction (folded norm + SiLU), and two sigmoid-gated
    1x1 expansions multiplied back onto the input."""

    _fields = ("w1", "scale", "shift", "w_h", "w_w")

    def __init__(self, c, reduction=32, rng=None):
        if c < reduction:
            raise ValueError(f"channel count {c} must be >= reduction {reduction}")
        self.c, self.reduction = c, reduction
        self.mid = max(8, c // reduction)
        rng = rng or np.random.default_rng(0)
        self.w1 = _uniform(rng, (self.mid, c, 1, 1))
        self.scale = np.ones(self.mid, dtype=F32)
        self.shift = np.zeros(self.mid, dtype=F32)
        self.w_h = _uniform(rng, (c, self.mid, 1, 1))
        self.w_w = _uniform(rng, (c, self.mid, 1, 1))

    def forward(self, x):
        n, c, h, w = x.shape
        pool_h = x.mean(axis=3, keepdims=True)                        # (N, c, H, 1)
        pool_w = x.mean(axis=2, keepdims=True).transpose(0, 1, 3, 2)  # (N, c, W, 1)
        y = ops.conv2d(np.concatenate([pool_h, pool_w], axis=2), self.w1)
        y = y * self.scale.reshape(1, -1, 1, 1) + self.shift.reshape(1, -1, 1, 1)
        y = ops.silu(y)
        y_h, y_w = y[:, :, :h], y[:, :, h:]
        a_h = ops.sigmoid(ops.conv2d(y_h, self.w_h))                   # (N, c, H, 1)
        a_w = ops.sigmoid(ops.conv2d(y_w.transpose(0, 1, 3, 2), self.w_w))  # (N, c, 1, W)
        return x * a_h * a_w

    def output_shape(self, chw):
        c, h, w = chw
        if c != self.c:
            raise ShapeError(f"coordinate attention expects {self.c} channels, got {c}")
        return chw

    def macs(self, chw):
        _, h, w = chw
        return 2 * self.c * self.mid * (h + w)


@dataclass
class FusionWeights:
    """Learnable scalars of a fast-normalized fusion node.

    Effective weights are relu(w_i) / (eps + sum_j relu(w_j)); they lie in
    [0, 1) and sum to sum / (sum + eps).
    """

    w: np.ndarray
    eps: float = 1e-4

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1 or self.w.size == 0:
            raise ValueError("fusion needs a non-empty 1-D weight vector")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    def normalized(self):
        pos = np.maximum(self.w, 0.0)
        return pos / (self.eps + pos.sum())


def fuse_weighted_sum(ws: FusionWeights, inputs):
    """Fast-normalized weighted sum: sum_i relu(w_i) * I_i / (eps + sum relu(w))."""
    if len(inputs) == 0:
        raise ShapeError("fusion requires at least one input")
    if len(inputs) != ws.w.size:
        raise ShapeError(f"{len(inputs)} inputs but {ws.w.size} fusion weights")
    ref = np.asarray(inputs[0]).shape
    for i, x in enumerate(inputs[1:], start=1):
        if np.asarray(x).shape != ref:
            raise ShapeError(f"fusion input {i} has shape {np.asarray(x).shape}, expected {ref}")
    weights = ws.normalized()
    out = weights[0] * np.asarray(inputs[0], dtype=np.result_type(inputs[0], weights))
    for wi, x in zip(weights[1:], inputs[1:]):
        out = out + wi * x
    return out


def fuse_weighted_sum_grad(ws: FusionWeights, inputs, upstream):
    """Analytic gradient of sum(upstream * fuse_weighted_sum(...)) w.r.t. each w_i.

    Uses the quotient rule on the fast-normalized form.  The relu kink is
    excluded: evaluation at w_i == 0 exactly is rejected.
    """
    if np.any(ws.w == 0.0):
        raise ValueError("gradient undefined at w_i == 0 (relu subgradient point)")
    if len(inputs) != ws.w.size:
        raise ShapeError(f"{len(inputs)} inputs but {ws.w.size} fusion weights")
    upstream = np.asarray(upstream, dtype=np.float64)
    xs = [np.asarray(x, dtype=np.float64) for x in inputs]
    pos = np.maximum(ws.w, 0.0)
    denom = ws.eps + pos.sum()
    out = sum(pi * xi for pi, xi in zip(pos, xs)) / denom
    grads = np.zeros(ws.w.size, dtype=np.float64)
    for i, (wi, xi) in enumerate(zip(ws.w, xs)):
        if wi < 0:
            continue  # relu-clamped: locally constant
        grads[i] = float(np.sum(upstream * (xi - out)) / denom)
    return grads


class WeightedSumFuse(Block):
    """Graph node applying fast-normalized weighted summation to same-shape inputs."""

    _fields = ("w",)

    def __init__(self, n_inputs, eps=1e-4):
        if n_inputs < 2:
            raise ValueError(f"fusion node needs >= 2 inputs, got {n_inputs}")
        self.n_inputs = n_inputs
        self.eps = eps
        self.w = np.ones(n_inputs, dtype=F32)

    def forward(self, xs):
        out = fuse_weighted_sum(FusionWeights(self.w, self.eps), xs)
        return out.astype(xs[0].dtype, copy=False)

    def output_shape(self, chws):
        ref = chws[0]
        for i, s in enumerate(chws[1:], start=1):
            if s != ref:
                raise ShapeError(f"fusion input {i} has shape {s}, expected {ref}")
        return ref

    def macs(self, chws):
        c, h, w = chws[0]
        return self.n_inputs * c * h * w


class WeightedConcat(Block):
    """Channel concatenation with fast-normalized per-input weights.

    The cross-scale fusion idiom for inputs whose channel counts differ:
    each input is scaled by relu(w_i) / (eps + sum relu(w)) before the concat.
    """

    _fields = ("w",)

    def __init__(self, n_inputs, eps=1e-4):
        if n_inputs < 2:
            raise ValueError(f"fusion node needs >= 2 inputs, got {n_inputs}")
        self.n_inputs = n_inputs
        self.eps = eps
        self.w = np.ones(n_inputs, dtype=F32)

    def forward(self, xs):
        weights = FusionWeights(self.w, self.eps).normalized()
        scaled = [(wi * x).astype(x.dtype, copy=False) for wi, x in zip(weights, xs)]
        return ops.concat_channels(scaled)

    def output_shape(self, chws):
        _, h, w = chws[0]
        for i, (ci, hi, wi) in enumerate(chws[1:], start=1):
            if (hi, wi) != (h, w):
                raise ShapeError(f"fusion input {i} is {hi}x{wi}, expected {h}x{w}")
        return (sum(c for c, _, _ in chws), h, w)

    def macs(self, chws):
        return sum(c * h * w for c, h, w in chws)


class Upsample(Block):
    """Nearest-neighbour spatial upsampling."""

    def __init__(self, scale=2):
        self.scale = int(scale)

    def forward(self, x):
        return ops.nearest_upsample(x, self.scale)

    def output_shape(self, chw):
        c, h, w = chw
        return (c, h * self.scale, w * self.scale)

    def macs(self, chw):
        return 0


class Concat(Block):
    """Plain channel concatenation in input order."""

    def forward(self, xs):
        return ops.concat_channels(xs)

    def output_shape(self, chws):
        _, h, w = chws[0]
        for i, (ci, hi, wi) in enumerate(chws[1:], start=1):
            if (hi, wi) != (h, w):
                raise ShapeError(f"concat input {i} is {hi}x{wi}, expected {h}x{w}")
        return (sum(c for c, _, _ in chws), h, w)

    def macs(self, chws):
        return 0


class Detect(Block):
    """Per-scale 1x1 conv to 3 * (nc + 5) channels plus sigmoid decoding.

    Expects exactly three feature scales with strides 8, 16 and 32.
    """

    _children = ("convs",)

    def __init__(self, nc, ch, anchors=DEFAULT_ANCHORS, rng=None):
        if len(ch) != 3:
            raise ShapeError(f"detection head expects 3 scales, got {len(ch)}")
        self.nc = nc
        self.no = nc + 5
        self.na = 3
        self.ch = tuple(ch)
        self.anchors = np.asarray(anchors, dtype=F32)
        if self.anchors.shape != (3, 3, 2):
            raise ShapeError(f"anchors must be 3 scales x 3 pairs, got {self.anchors.shape}")
        self.convs = [ConvBlock(c, self.no * self.na, 1, act=False, rng=rng) for c in ch]

    def forward(self, features):
        if len(features) != len(self.convs):
            raise ShapeError(f"expected {len(self.convs)} feature scales, got {len(features)}")
        return [conv(f) for conv, f in zip(self.convs, features)]

    def output_shape(self, chws):
        if len(chws) != 3:
            raise ShapeError(f"detection head expects 3 scales, got {len(chws)}")
        return [conv.output_shape(chw) for conv, chw in zip(self.convs, chws)]

    def macs(self, chws):
        return sum(conv.macs(chw) for conv, chw in zip(self.convs, chws))

    def decode(self, raws, img_size, conf_thr=0.25, image_id="0"):
        """Decode raw per-scale maps into normalized detections.

        xy = (2*sigmoid(t_xy) - 0.5 + grid) * stride
        wh = (2*sigmoid(t_wh))**2 * anchor
        conf = sigmoid(t_obj) * sigmoid(t_cls)
        """
        from .metrics import Detection

        out = []
        for s, raw in enumerate(raws):
            n, c, h, w = raw.shape
            if c != self.no * self.na:
                raise ShapeError(f"scale {s} has {c} channels, expected {self.no * self.na}")
            stride = img_size / h
            t = raw.reshape(n, self.na, self.no, h, w)
            sig = ops.sigmoid(t.astype(np.float64))
            gy, gx = np.mgrid[0:h, 0:w]
            cx = (2 * sig[:, :, 0] - 0.5 + gx) * stride
            cy = (2 * sig[:, :, 1] - 0.5 + gy) * stride
            pw = (2 * sig[:, :, 2]) ** 2 * self.anchors[s, :, 0].reshape(1, self.na, 1, 1)
            ph = (2 * sig[:, :, 3]) ** 2 * self.anchors[s, :, 1].reshape(1, self.na, 1, 1)
            obj = sig[:, :, 4]
            for cls in range(self.nc):
                conf = obj * sig[:, :, 5 + cls]
                keep = np.argwhere(conf >= conf_thr)
                for bi, ai, yi, xi in keep:
                    out.append(
                        Detection(
                            image_id=image_id,
                            class_id=cls,
                            confidence=float(conf[bi, ai, yi, xi]),
                            box=(
                                float(cx[bi, ai, yi, xi] / img_size),
                                float(cy[bi, ai, yi, xi] / img_size),
                                float(pw[bi, ai, yi, xi] / img_size),
                                float(ph[bi, ai, yi, xi] / img_size),
                            ),
                        )
                    )
        return out
