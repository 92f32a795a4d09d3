"""Camera-motion estimation from image corners and its subtraction.

The background (camera) motion of a frame is approximated from the four
corner windows of the flow field: per-corner means are clustered into two
groups by their scalar mean magnitude, singleton clusters are dropped (a
corner that disagrees with the rest is likely covered by an object), and the
mean flow vector of the surviving corners is subtracted everywhere.

Clustering is the exhaustive optimal 1-D two-cluster split: with four scalar
values only the three magnitude-ordered bipartitions are candidates, and the
one with the smallest within-cluster sum of squares wins. Ties prefer the
balanced {2, 2} split, which keeps all four corners (there is no singleton
to drop). Clustering operates on scalar magnitudes; the estimate and the
subtraction use the full 2-vector means, since subtracting a scalar from a
vector field is ill-defined.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .flowio import FlowField

CORNER_IDS = ("top_left", "top_right", "bottom_left", "bottom_right")

# magnitudes closer than this are treated as one cluster
EQUAL_MAGNITUDE_TOL = 1e-9


@dataclass(frozen=True)
class CornerStats:
    """Mean flow vector and mean per-pixel magnitude over one corner window."""

    corner_id: str
    mean_flow: np.ndarray
    mean_magnitude: float

    def __post_init__(self):
        if self.corner_id not in CORNER_IDS:
            raise ValueError(f"unknown corner id {self.corner_id!r}")
        mf = np.asarray(self.mean_flow, dtype=np.float64)
        if mf.shape != (2,):
            raise ValueError("mean_flow must be a 2-vector")
        if self.mean_magnitude < 0:
            raise ValueError("mean_magnitude must be nonnegative")
        object.__setattr__(self, "mean_flow", mf)


@dataclass(frozen=True)
class BackgroundEstimate:
    """Estimated camera motion and the corners that contributed to it."""

    flow: np.ndarray
    contributing_corners: tuple

    def __post_init__(self):
        flow = np.asarray(self.flow, dtype=np.float64)
        if flow.shape != (2,):
            raise ValueError("background flow must be a 2-vector")
        if not 2 <= len(self.contributing_corners) <= 4:
            raise ValueError("contributing corner count must be 2, 3 or 4")
        object.__setattr__(self, "flow", flow)
        object.__setattr__(self, "contributing_corners", tuple(self.contributing_corners))


def corner_window(flow: FlowField, corner_fraction: float):
    """Window height and width used for each corner, at least 1x1."""
    if not 0.0 < corner_fraction <= 0.5:
        raise ValueError(f"corner_fraction must lie in (0, 0.5], got {corner_fraction}")
    wh = int(np.ceil(corner_fraction * flow.height))
    ww = int(np.ceil(corner_fraction * flow.width))
    return max(wh, 1), max(ww, 1)


def corner_stats(flow: FlowField, corner_fraction: float = 0.1):
    """Per-corner mean flow and mean magnitude over the four corner windows."""
    wh, ww = corner_window(flow, corner_fraction)
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    mag = np.hypot(u, v)
    slices = {
        "top_left": (slice(0, wh), slice(0, ww)),
        "top_right": (slice(0, wh), slice(flow.width - ww, flow.width)),
        "bottom_left": (slice(flow.height - wh, flow.height), slice(0, ww)),
        "bottom_right": (slice(flow.height - wh, flow.height), slice(flow.width - ww, flow.width)),
    }
    stats = []
    for cid in CORNER_IDS:
        sl = slices[cid]
        stats.append(
            CornerStats(
                corner_id=cid,
                mean_flow=np.array([u[sl].mean(), v[sl].mean()]),
                mean_magnitude=float(mag[sl].mean()),
            )
        )
    return tuple(stats)


def cluster_corners(stats: Sequence[CornerStats]) -> BackgroundEstimate:
    """Optimal two-cluster split of the corner magnitudes, singletons dropped."""
    if len(stats) != 4:
        raise ValueError(f"expected 4 corner stats, got {len(stats)}")
    mags = np.array([s.mean_magnitude for s in stats])
    order = np.argsort(mags, kind="stable")
    sorted_mags = mags[order]

    if sorted_mags[-1] - sorted_mags[0] <= EQUAL_MAGNITUDE_TOL:
        keep = list(range(4))
    else:
        # wcss of the three ordered splits; evaluate the balanced one first
        # so ties keep all four corners
        best_k, best_wcss = None, np.inf
        for k in (2, 1, 3):
            lo, hi = sorted_mags[:k], sorted_mags[k:]
            wcss = ((lo - lo.mean()) ** 2).sum() + ((hi - hi.mean()) ** 2).sum()
            if wcss < best_wcss:
                best_k, best_wcss = k, wcss
        if best_k == 1:
            keep = list(order[1:])
        elif best_k == 3:
            keep = list(order[:3])
        else:
            keep = list(range(4))

    kept = [stats[i] for i in sorted(keep)]
    bg = np.mean([s.mean_flow for s in kept], axis=0)
    return BackgroundEstimate(flow=bg, contributing_corners=tuple(s.corner_id for s in kept))


def subtract_background(flow: FlowField, bg: BackgroundEstimate) -> FlowField:
    """Subtract the background vector from every pixel (float64 arithmetic)."""
    return FlowField(
        u=flow.u.astype(np.float64) - bg.flow[0],
        v=flow.v.astype(np.float64) - bg.flow[1],
    )


def normalize_camera_motion(flow: FlowField, corner_fraction: float = 0.1):
    """corner_stats -> cluster_corners -> subtract_background.

    Returns the normalized field together with the estimate for reporting.
    """
    bg = cluster_corners(corner_stats(flow, corner_fraction))
    return subtract_background(flow, bg), bg
