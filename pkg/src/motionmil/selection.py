"""Motion-driven training-image selection.

An image is kept when the mean normalized flow magnitude inside its
predicted box clears a minimum motion threshold and also exceeds the mean
outside the box by a minimum ratio. Magnitudes must be normalized to [0, 1]
per image before the statistics are taken.

Rasterization rule: a pixel belongs to the box when its center
``(col + 0.5, row + 0.5)`` lies inside the box, boundaries inclusive. A box
whose rasterization is empty raises ``EmptyInside``; a box covering every
pixel leaves the outside mean undefined and raises ``EmptyOutside``. A zero
outside mean with inside motion counts as an infinite ratio (kept).
"""

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flowio import MagnitudeMap


class EmptyInside(ValueError):
    """Box rasterization covers no pixel."""


class EmptyOutside(ValueError):
    """Box rasterization covers every pixel, outside mean undefined."""


@dataclass(frozen=True)
class SelectionConfig:
    """Minimum motion threshold ``m`` and minimum motion ratio ``d``."""

    m: float = 0.2
    d: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.m < 1.0:
            raise ValueError(f"m must lie in [0, 1), got {self.m}")
        if not self.d > 0.0:
            raise ValueError(f"d must be positive, got {self.d}")


@dataclass(frozen=True)
class SelectionRecord:
    """Per-image statistics and decision; ``error`` set when stats failed."""

    image_id: str
    ib: Optional[float]
    ob: Optional[float]
    selected: int
    error: Optional[str] = None


def box_pixel_mask(shape, box) -> np.ndarray:
    """Boolean (H, W) mask of pixels whose centers fall within ``box``."""
    h, w = shape
    x0, y0, x1, y1 = (float(t) for t in box)
    c0 = max(int(math.ceil(x0 - 0.5)), 0)
    c1 = min(int(math.floor(x1 - 0.5)), w - 1)
    r0 = max(int(math.ceil(y0 - 0.5)), 0)
    r1 = min(int(math.floor(y1 - 0.5)), h - 1)
    mask = np.zeros((h, w), dtype=bool)
    if c0 <= c1 and r0 <= r1:
        mask[r0:r1 + 1, c0:c1 + 1] = True
    return mask


def box_motion_stats(mag: MagnitudeMap, box):
    """Mean normalized magnitude inside and outside the box: ``(ib, ob)``."""
    if not mag.normalized:
        raise ValueError("box_motion_stats requires a normalized magnitude map")
    inside = box_pixel_mask(mag.mag.shape, box)
    n_in = int(inside.sum())
    if n_in == 0:
        raise EmptyInside(f"box {tuple(box)} rasterizes to zero pixels")
    if n_in == mag.mag.size:
        raise EmptyOutside(f"box {tuple(box)} covers the whole image")
    ib = float(mag.mag[inside].mean())
    ob = float(mag.mag[~inside].mean())
    return ib, ob


def select(ib: float, ob: float, cfg: SelectionConfig = SelectionConfig()) -> int:
    """1 iff ``ib > m`` and ``ib / ob > d`` (ob = 0 counts as infinite ratio)."""
    ratio_ok = True if ob == 0.0 else (ib / ob) > cfg.d
    return int(ib > cfg.m and ratio_ok)


def select_dataset(records, cfg: SelectionConfig = SelectionConfig()):
    """Apply the selection rule per (image_id, MagnitudeMap, box) record.

    Order-preserving; per-image failures are recorded in the returned
    manifest (treated as not selected) instead of aborting the batch.
    """
    manifest = []
    for image_id, mag, box in records:
        try:
            ib, ob = box_motion_stats(mag, box)
        except ValueError as exc:
            manifest.append(SelectionRecord(
                image_id=str(image_id), ib=None, ob=None, selected=0,
                error=f"{type(exc).__name__}: {exc}",
            ))
            continue
        manifest.append(SelectionRecord(
            image_id=str(image_id), ib=ib, ob=ob, selected=select(ib, ob, cfg),
        ))
    return manifest


def write_manifest(records, path) -> None:
    """Line-oriented JSON: one record per line."""
    with open(path, "w") as f:
        for rec in records:
            row = {"image_id": rec.image_id, "ib": rec.ib, "ob": rec.ob,
                   "selected": rec.selected}
            if rec.error is not None:
                row["error"] = rec.error
            f.write(json.dumps(row) + "\n")


def read_manifest(path):
    records = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(SelectionRecord(
                image_id=row["image_id"], ib=row["ib"], ob=row["ob"],
                selected=row["selected"], error=row.get("error"),
            ))
    return records
