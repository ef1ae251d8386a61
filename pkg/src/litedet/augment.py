"""Label-consistent offline augmentation: flips, brightness/contrast, and
random erasing, plus a deterministic batch driver.

Images are (H, W, C) uint8 with C in {1, 3}; boxes are float arrays of shape
(n, 5) with columns (class, cx, cy, w, h), normalized.  Every operator returns
fresh arrays and never mutates its input.  The batch driver derives one RNG
stream per image from (seed, file name), so output bytes do not depend on
processing order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import read_image, write_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm")


def _check_image(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.dtype != np.uint8 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, C) uint8 with C in {{1, 3}}, got {img.shape} {img.dtype}")
    if img.size == 0:
        raise ValueError("empty image")
    return img


def _check_boxes(boxes):
    boxes = np.asarray(boxes, dtype=np.float64)
    if boxes.size == 0:
        return boxes.reshape(0, 5)
    if boxes.ndim != 2 or boxes.shape[1] != 5:
        raise ValueError(f"boxes must be (n, 5) (class, cx, cy, w, h), got {boxes.shape}")
    return boxes


def hflip(img, boxes):
    """Mirror left-right; box centers map cx -> 1 - cx."""
    img = _check_image(img)
    boxes = _check_boxes(boxes).copy()
    if boxes.size:
        boxes[:, 1] = 1.0 - boxes[:, 1]
    return np.ascontiguousarray(img[:, ::-1]), boxes


def vflip(img, boxes):
    """Mirror top-bottom; box centers map cy -> 1 - cy."""
    img = _check_image(img)
    boxes = _check_boxes(boxes).copy()
    if boxes.size:
        boxes[:, 2] = 1.0 - boxes[:, 2]
    return np.ascontiguousarray(img[::-1]), boxes


def adjust_brightness_contrast(img, alpha=1.0, beta=0.0):
    """pixel' = clamp(round(alpha * pixel + beta), 0, 255); boxes unaffected.

    Rounding is half-up to keep the mapping monotone.
    """
    if alpha <= 0:
        raise ValueError(f"gain must be positive, got {alpha}")
    img = _check_image(img)
    out = np.floor(alpha * img.astype(np.float64) + beta + 0.5)
    return np.clip(out, 0, 255).astype(np.uint8)


@dataclass
class EraseParams:
    """Random-erasing configuration.

    p: probability of erasing anything at all.
    sl, sh: bounds on the erased area as a fraction of the image.
    r1: lower aspect-ratio bound (upper bound is 1/r1).
    max_attempts: rectangle resampling budget before giving up.
    fill: "noise" for per-element uniform noise, or an integer constant.
    """

    p: float = 0.5
    sl: float = 0.02
    sh: float = 0.4
    r1: float = 0.3
    max_attempts: int = 100
    fill: object = "noise"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.p}")
        if not 0.0 < self.sl <= self.sh < 1.0:
            raise ValueError(f"need 0 < sl <= sh < 1, got sl={self.sl} sh={self.sh}")
        if not 0.0 < self.r1 <= 1.0:
            raise ValueError(f"aspect bound must satisfy 0 < r1 <= 1, got {self.r1}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.fill != "noise" and not isinstance(self.fill, int):
            raise ValueError(f"fill must be 'noise' or an integer, got {self.fill!r}")


def random_erase(img, params: EraseParams, rng):
    """With probability p, overwrite one random rectangle.

    The target area fraction is drawn uniformly from [sl, sh] and the aspect
    ratio from [r1, 1/r1]; the rounded rectangle is accepted only if it fits
    strictly inside the image and its realized area fraction still lies in
    [sl, sh], otherwise it is resampled (up to max_attempts, after which the
    image is returned unchanged).  Accepted rectangles are filled per element.
    """
    img = _check_image(img)
    h, w, c = img.shape
    out = img.copy()
    if rng.uniform() >= params.p:
        return out
    area = h * w
    for _ in range(params.max_attempts):
        target = rng.uniform(params.sl, params.sh) * area
        aspect = rng.uniform(params.r1, 1.0 / params.r1)
        eh = int(round(math.sqrt(target * aspect)))
        ew = int(round(math.sqrt(target / aspect)))
        if eh < 1 or ew < 1 or eh >= h or ew >= w:
            continue
        if not params.sl <= (eh * ew) / area <= params.sh:
            continue  # integer rounding pushed the realized area out of bounds
        y0 = int(rng.integers(0, h - eh + 1))
        x0 = int(rng.integers(0, w - ew + 1))
        if params.fill == "noise":
            patch = rng.integers(0, 256, size=(eh, ew, c), dtype=np.int64).astype(np.uint8)
        else:
            patch = np.full((eh, ew, c), params.fill % 256, dtype=np.uint8)
        out[y0:y0 + eh, x0:x0 + ew] = patch
        return out
    return out


# ---------------------------------------------------------------------------
# pipelines

_OP_RE = re.compile(r"^([a-z_]+)(?:\((.*)\))?$")


@dataclass(frozen=True)
class OpCall:
    name: str
    kwargs: tuple  # sorted (key, value) pairs

    def __str__(self):
        if not self.kwargs:
            return self.name
        args = ",".join(f"{k}={v}" for k, v in self.kwargs)
        return f"{self.name}({args})"


def _split_top_level(spec):
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(spec):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(spec[start:i])
            start = i + 1
    parts.append(spec[start:])
    return parts


_OP_PARAMS = {
    "hflip": (),
    "vflip": (),
    "brightness": ("alpha", "beta"),
    "erase": ("p", "sl", "sh", "r1", "attempts", "fill"),
}


def parse_pipeline(spec):
    """Parse a comma-separated op list such as
    `hflip,erase(p=0.5,sl=0.02,sh=0.4,r1=0.3)` into OpCalls."""
    ops = []
    for part in _split_top_level(spec):
        part = part.strip()
        if not part:
            raise ValueError(f"empty op in pipeline {spec!r}")
        m = _OP_RE.match(part)
        if not m:
            raise ValueError(f"cannot parse pipeline op {part!r}")
        name, argstr = m.group(1), m.group(2)
        if name not in _OP_PARAMS:
            raise ValueError(f"unknown pipeline op {name!r}")
        kwargs = {}
        if argstr:
            for item in argstr.split(","):
                if "=" not in item:
                    raise ValueError(f"op {name}: argument {item!r} must be key=value")
                key, val = (s.strip() for s in item.split("=", 1))
                if key not in _OP_PARAMS[name]:
                    raise ValueError(f"op {name}: unknown argument {key!r}")
                if key == "fill":
                    kwargs[key] = val if val == "noise" else int(val)
                elif key == "attempts":
                    kwargs[key] = int(val)
                else:
                    kwargs[key] = float(val)
        ops.append(OpCall(name, tuple(sorted(kwargs.items()))))
    return ops


def apply_pipeline(img, boxes, ops, rng):
    """Apply parsed ops in order; returns (image, boxes)."""
    for op in ops:
        kw = dict(op.kwargs)
        if op.name == "hflip":
            img, boxes = hflip(img, boxes)
        elif op.name == "vflip":
            img, boxes = vflip(img, boxes)
        elif op.name == "brightness":
            img = adjust_brightness_contrast(img, kw.get("alpha", 1.0), kw.get("beta", 0.0))
        elif op.name == "erase":
            params = EraseParams(
                p=kw.get("p", 0.5), sl=kw.get("sl", 0.02), sh=kw.get("sh", 0.4),
                r1=kw.get("r1", 0.3), max_attempts=kw.get("attempts", 100),
                fill=kw.get("fill", "noise"),
            )
            img = random_erase(img, params, rng)
    return img, boxes


def image_rng(seed, name):
    """Per-image generator derived from (seed, file name): stable under
    parallel or reordered processing."""
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return np.random.default_rng(np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int.from_bytes(digest[:8], "big"),)
    ))


def read_labels(path):
    """YOLO label file -> (n, 5) float array; missing file -> zero boxes."""
    path = Path(path)
    if not path.exists():
        return np.zeros((0, 5), dtype=np.float64)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        rows.append([float(v) for v in parts])
    return np.array(rows, dtype=np.float64) if rows else np.zeros((0, 5), dtype=np.float64)


def write_labels(path, boxes):
    lines = [
        f"{int(b[0])} {b[1]:.6f} {b[2]:.6f} {b[3]:.6f} {b[4]:.6f}"
        for b in np.asarray(boxes).reshape(-1, 5)
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def augment_dataset(in_dir, out_dir, pipeline, seed=0):
    """Apply a pipeline to every image in in_dir, writing images, transformed
    labels and a manifest to out_dir.  Returns the manifest entries.

    Unreadable images are skipped with a logged warning; a missing label file
    means zero boxes.  Re-running with the same seed reproduces identical bytes.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise NotADirectoryError(f"input directory {in_dir} does not exist")
    ops = parse_pipeline(pipeline) if isinstance(pipeline, str) else list(pipeline)
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline_str = ",".join(str(op) for op in ops)

    manifest = []
    images = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    for src in images:
        try:
            img = read_image(src)
        except (OSError, ValueError) as e:
            log.warning("skipping unreadable image %s: %s", src, e)
            continue
        boxes = read_labels(src.with_suffix(".txt"))
        rng = image_rng(seed, src.name)
        img, boxes = apply_pipeline(img, boxes, ops, rng)
        dst = out_dir / src.name
        write_image(dst, img)
        write_labels(dst.with_suffix(".txt"), boxes)
        manifest.append({
            "source": src.name,
            "output": dst.name,
            "ops": pipeline_str,
            "seed": int(seed),
        })
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
