"""Label-consistent augmentation on a synthetic image: flips with box
remapping, brightness/contrast, random erasing, and the deterministic batch
driver.  Outputs land in demo_output/augment/.
"""

from pathlib import Path

import numpy as np

from litedet.augment import (
    EraseParams,
    adjust_brightness_contrast,
    augment_dataset,
    hflip,
    random_erase,
    write_labels,
)
from litedet.imageio import write_image

out_dir = Path("demo_output/augment")
out_dir.mkdir(parents=True, exist_ok=True)

# a synthetic "scene": gradient background with a bright blob and one box label
yy, xx = np.mgrid[0:96, 0:96]
img = (yy * 2 + xx).astype(np.uint8)[:, :, None]
img[30:50, 20:44] = 230
boxes = np.array([[0.0, (20 + 44) / 2 / 96, (30 + 50) / 2 / 96, 24 / 96, 20 / 96]])

flipped, flipped_boxes = hflip(img, boxes)
print("hflip moves the box center:", boxes[0, 1], "->", flipped_boxes[0, 1])

bright = adjust_brightness_contrast(img, alpha=1.4, beta=20)
print("brightness/contrast: mean", img.mean().round(1), "->", bright.mean().round(1))

erased = random_erase(img, EraseParams(p=1.0), np.random.default_rng(4))
n_changed = int((erased != img).any(axis=2).sum())
print(f"random erase overwrote {n_changed} pixels "
      f"({n_changed / img[:, :, 0].size:.1%} of the image)")

for name, arr in [("original", img), ("hflip", flipped),
                  ("bright", bright), ("erased", erased)]:
    write_image(out_dir / f"{name}.pgm", arr)

# --- batch driver: one RNG stream per image, derived from (seed, name) ----------
src = out_dir / "dataset_in"
src.mkdir(exist_ok=True)
for i in range(3):
    write_image(src / f"scene{i}.png", np.roll(img, i * 7, axis=1).repeat(3, axis=2))
    write_labels(src / f"scene{i}.txt", boxes)

manifest = augment_dataset(src, out_dir / "dataset_out",
                           "hflip,erase(p=0.5,sl=0.02,sh=0.4,r1=0.3)", seed=7)
print(f"\nbatch driver wrote {len(manifest)} images + labels + manifest.json")
for entry in manifest:
    print(" ", entry["source"], "->", entry["output"], "| ops:", entry["ops"])
