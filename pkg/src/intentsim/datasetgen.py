"""Synthetic labeled image corpus for simulation runs and tests.

Each image is a textured scene containing one to three labeled objects
(object IDs 1..5 map to shape renderers).  Files are written as multi-IDAT
PNGs plus the labels.csv manifest the loader expects.  Generation is fully
seed-deterministic.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .pngcodec import write_png

OBJECT_IDS = (1, 2, 3, 4, 5)


def _background(size: int, rng) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = 90.0 + 60.0 * (xx / size) + 30.0 * np.sin(yy / size * 3.1 * np.pi)
    noise = rng.normal(0.0, 9.0, (size, size))
    return base + noise


def _draw_object(img: np.ndarray, object_id: int, cx: int, cy: int, r: int,
                 rng) -> None:
    size = img.shape[0]
    yy, xx = np.mgrid[0:size, 0:size]
    shade = float(rng.uniform(180.0, 250.0))
    if object_id == 1:    # disc
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        img[mask] = shade
    elif object_id == 2:  # filled square
        mask = (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
        img[mask] = shade
    elif object_id == 3:  # cross
        arm = max(2, r // 3)
        mask = ((np.abs(xx - cx) <= arm) & (np.abs(yy - cy) <= r)) | \
               ((np.abs(yy - cy) <= arm) & (np.abs(xx - cx) <= r))
        img[mask] = shade
    elif object_id == 4:  # ring
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        mask = (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
        img[mask] = shade
    else:                 # diagonal stripes patch
        mask = (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r) & \
               (((xx + yy) // 6) % 2 == 0)
        img[mask] = shade


def make_image(labels, size: int, rng) -> np.ndarray:
    img = _background(size, rng)
    for object_id in labels:
        r = int(rng.integers(size // 8, size // 4))
        cx = int(rng.integers(r, size - r))
        cy = int(rng.integers(r, size - r))
        _draw_object(img, object_id, cx, cy, r, rng)
    return np.clip(img, 0, 255)


def make_dataset(out_dir: str, n_images: int = 12, size: int = 192,
                 seed: int = 7, labels_per_image=None,
                 idat_chunk_bytes: int = 1024) -> list:
    """Write n_images PNGs plus labels.csv; returns (filename, labels) rows.

    ``labels_per_image`` optionally pins the label set of every image
    (list of iterables), which controlled scenarios use to fix relevance
    counts; otherwise each image gets 1-3 random object IDs.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for i in range(n_images):
        if labels_per_image is not None:
            labels = sorted(set(labels_per_image[i]))
        else:
            k = int(rng.integers(1, 4))
            labels = sorted(rng.choice(OBJECT_IDS, size=k, replace=False).tolist())
        img = make_image(labels, size, rng)
        name = f"img_{i:03d}.png"
        if n_images >= 8 and i == n_images - 1:
            # one palette-coded file keeps PLTE handling exercised
            palette = np.stack([np.arange(256)] * 3, axis=1).astype(np.uint8)
            data = write_png(np.round(img).astype(np.uint8), palette=palette,
                             idat_chunk_bytes=idat_chunk_bytes)
        elif n_images >= 8 and i == n_images - 2:
            rgb = np.stack([img, np.clip(img * 0.9, 0, 255),
                            np.clip(img * 1.1, 0, 255)], axis=2)
            data = write_png(rgb, idat_chunk_bytes=idat_chunk_bytes)
        else:
            data = write_png(img, idat_chunk_bytes=idat_chunk_bytes)
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(data)
        rows.append((name, labels))
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "labels"])
        for name, labels in rows:
            writer.writerow([name, ",".join(str(x) for x in labels)])
    return rows
