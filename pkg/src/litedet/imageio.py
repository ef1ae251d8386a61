"""Minimal image file helpers: binary PGM (P5, maxval 255) and PNG via Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pgm(path, arr):
    """Write a 2-D uint8 array as a binary P5 PGM with maxval 255."""
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError(f"PGM writer needs a 2-D uint8 array, got {arr.shape} {arr.dtype}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def read_pgm(path):
    """Read a binary P5 PGM (maxval 255) into a 2-D uint8 array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary P5 PGM")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # optionally interleaved with '#' comment lines
    tokens, i = [], 2
    while len(tokens) < 3:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        tokens.append(data[start:i])
    i += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(data[i:i + w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w).copy()


def read_image(path):
    """Load a PNG or PGM image as (H, W, C) uint8 with C in {1, 3}."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)[:, :, None]
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=np.uint8)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr


def write_image(path, arr):
    """Write (H, W, C) uint8 to PNG or PGM depending on the file suffix."""
    path = Path(path)
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.dtype != np.uint8:
        raise ValueError(f"expected (H, W, C) uint8, got {arr.shape} {arr.dtype}")
    if path.suffix.lower() == ".pgm":
        if arr.shape[2] != 1:
            raise ValueError("PGM output requires a single-channel image")
        write_pgm(path, arr[:, :, 0])
        return
    from PIL import Image

    im = Image.fromarray(arr[:, :, 0] if arr.shape[2] == 1 else arr)
    im.save(path)
