"""Synthetic desk-scale scenes: rendered boxes, flow fields, features, labels.

A scene is a textured background, optional static colored distractor
patches, and one or more moving rectangular objects with per-class colors.
The flow field is the camera vector everywhere plus each object's vector
inside its box, optionally boundary-blurred ("degraded" flow) and perturbed
with i.i.d. Gaussian noise. Proposal features are hand-crafted and cheap:
per-box mean and standard deviation of the three color channels plus
normalized box geometry, so the same extractor applies to rendered RGB
images and to colorized flow renders.

Generation is bit-deterministic given (spec, seed). Ground-truth boxes ride
along for evaluation only.
"""

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .flowio import FlowField, read_flow_file, write_flow_file
from .milhead import ImageLabels, ProposalFeatures, features_from_dict, features_to_dict
from .selection import box_pixel_mask

FEATURE_DIM = 11
# features[:7] are color statistics, features[7:] box geometry
COLOR_STAT_DIMS = 7

_PALETTE = np.array([
    [0.82, 0.26, 0.28],
    [0.26, 0.42, 0.84],
    [0.30, 0.72, 0.34],
    [0.85, 0.72, 0.25],
    [0.62, 0.30, 0.78],
    [0.25, 0.72, 0.72],
    [0.88, 0.52, 0.20],
    [0.55, 0.55, 0.30],
])


def color_for_class(class_id: int) -> np.ndarray:
    return _PALETTE[class_id % len(_PALETTE)].copy()


def iou(box_a, box_b) -> float:
    """Intersection over union of two (x0, y0, x1, y1) boxes."""
    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


@dataclass(frozen=True)
class SceneObject:
    """A moving object: class, box (x0, y0, x1, y1), and flow vector."""

    class_id: int
    box: tuple
    flow: tuple


@dataclass(frozen=True)
class Distractor:
    """A static colored patch; rendered but never labeled."""

    box: tuple
    color: tuple


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    background_seed: int
    objects: tuple
    camera_flow: tuple = (0.0, 0.0)
    noise_sigma: float = 0.0
    boundary_blur: float = 0.0
    distractors: tuple = ()
    num_classes: int = 2
    num_proposals: int = 8

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError("scene must be at least 4x4")
        if self.noise_sigma < 0 or self.boundary_blur < 0:
            raise ValueError("noise_sigma and boundary_blur must be nonnegative")
        for obj in self.objects:
            x0, y0, x1, y1 = obj.box
            if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
                raise ValueError(f"object box {obj.box} out of bounds or degenerate")
            if not 0 <= obj.class_id < self.num_classes:
                raise ValueError(f"class id {obj.class_id} >= num_classes {self.num_classes}")
        if self.num_proposals < len(self.objects) + len(self.distractors):
            raise ValueError("num_proposals too small for objects + distractors")


@dataclass(frozen=True)
class TruthBox:
    class_id: int
    box: tuple


@dataclass(frozen=True)
class SynthSample:
    """Everything one training image contributes, plus evaluation-only truth."""

    image_id: str
    flow: Optional[FlowField]
    proposals: ProposalFeatures
    labels: ImageLabels
    truth: tuple


def strip_flow(sample: SynthSample) -> SynthSample:
    """Drop the motion field (inference consumes RGB features only)."""
    return replace(sample, flow=None)


def box_color_features(image01: np.ndarray, boxes) -> np.ndarray:
    """Per-box color statistics + normalized geometry, shape (R, FEATURE_DIM).

    ``image01`` is a float (H, W, 3) image in [0, 1]; works identically on
    rendered RGB scenes and colorized flow fields. The chroma entry (std
    across the three channel means) measures how far the box color sits from
    the gray axis, independent of hue.
    """
    h, w = image01.shape[:2]
    boxes = np.asarray(boxes, dtype=np.float64)
    feats = np.empty((boxes.shape[0], FEATURE_DIM))
    for i, (x0, y0, x1, y1) in enumerate(boxes):
        mask = box_pixel_mask((h, w), (x0, y0, x1, y1))
        if not mask.any():
            raise ValueError(f"box {(x0, y0, x1, y1)} rasterizes to zero pixels")
        pix = image01[mask]
        means = pix.mean(axis=0)
        feats[i, 0:3] = means
        feats[i, 3:6] = pix.std(axis=0)
        feats[i, 6] = means.std()
        feats[i, 7] = (x0 + x1) / 2.0 / w
        feats[i, 8] = (y0 + y1) / 2.0 / h
        feats[i, 9] = (x1 - x0) / w
        feats[i, 10] = (y1 - y0) / h
    return feats


def render_scene(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Float RGB render in [0, 1]: textured background, distractors, objects."""
    bg_rng = np.random.default_rng(np.random.SeedSequence(spec.background_seed))
    img = 0.55 + 0.05 * bg_rng.standard_normal((spec.height, spec.width, 3))
    for dis in spec.distractors:
        mask = box_pixel_mask((spec.height, spec.width), dis.box)
        img[mask] = np.asarray(dis.color) + 0.03 * rng.standard_normal((int(mask.sum()), 3))
    for obj in spec.objects:
        mask = box_pixel_mask((spec.height, spec.width), obj.box)
        color = color_for_class(obj.class_id) + rng.normal(0.0, 0.05, size=3)
        img[mask] = color + 0.03 * rng.standard_normal((int(mask.sum()), 3))
    return np.clip(img, 0.0, 1.0)


def flow_for_scene(spec: SceneSpec, rng: np.random.Generator) -> FlowField:
    """Camera flow everywhere + object flow inside boxes, blur, then noise."""
    u = np.full((spec.height, spec.width), float(spec.camera_flow[0]))
    v = np.full((spec.height, spec.width), float(spec.camera_flow[1]))
    for obj in spec.objects:
        mask = box_pixel_mask((spec.height, spec.width), obj.box)
        u[mask] += obj.flow[0]
        v[mask] += obj.flow[1]
    if spec.boundary_blur > 0.0:
        u = ndimage.gaussian_filter(u, spec.boundary_blur, mode="nearest")
        v = ndimage.gaussian_filter(v, spec.boundary_blur, mode="nearest")
    if spec.noise_sigma > 0.0:
        u = u + rng.normal(0.0, spec.noise_sigma, size=u.shape)
        v = v + rng.normal(0.0, spec.noise_sigma, size=v.shape)
    return FlowField(u=u, v=v)


def _jittered_copy(box, spec, rng, min_iou=0.7):
    x0, y0, x1, y1 = box
    for _ in range(50):
        dx, dy = rng.uniform(-2.0, 2.0, size=2)
        gx, gy = rng.uniform(-1.0, 1.5, size=2)
        cand = (
            max(0.0, x0 + dx - gx), max(0.0, y0 + dy - gy),
            min(float(spec.width), x1 + dx + gx), min(float(spec.height), y1 + dy + gy),
        )
        if cand[2] - cand[0] >= 2 and cand[3] - cand[1] >= 2 and iou(cand, box) >= min_iou:
            return cand
    return tuple(float(t) for t in box)


def _random_box(spec, rng, truths, max_iou=0.6):
    for _ in range(200):
        bw = rng.uniform(6.0, 0.45 * spec.width)
        bh = rng.uniform(6.0, 0.45 * spec.height)
        x0 = rng.uniform(0.0, spec.width - bw)
        y0 = rng.uniform(0.0, spec.height - bh)
        cand = (x0, y0, x0 + bw, y0 + bh)
        if all(iou(cand, t) < max_iou for t in truths):
            return cand
    raise RuntimeError("could not place a background proposal")


def generate(spec: SceneSpec, seed: int, image_id: Optional[str] = None) -> SynthSample:
    """Deterministic sample for (spec, seed): flow, proposals, labels, truth.

    Exactly one proposal per true object overlaps it at IoU >= 0.7; all other
    proposals stay below that threshold.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    render = render_scene(spec, rng)
    flow = flow_for_scene(spec, rng)

    truth_boxes = [tuple(float(t) for t in obj.box) for obj in spec.objects]
    boxes = [_jittered_copy(b, spec, rng) for b in truth_boxes]
    boxes.extend(tuple(float(t) for t in d.box) for d in spec.distractors)
    while len(boxes) < spec.num_proposals:
        boxes.append(_random_box(spec, rng, truth_boxes))
    order = rng.permutation(len(boxes))
    boxes = [boxes[i] for i in order]

    for tb in truth_boxes:
        overlaps = sum(iou(b, tb) >= 0.7 for b in boxes)
        if overlaps != 1:
            raise RuntimeError(f"{overlaps} proposals overlap truth {tb} at IoU >= 0.7")

    feats = box_color_features(render, boxes)
    proposals = ProposalFeatures(
        phi=feats, boxes=np.array(boxes), image_size=(spec.width, spec.height)
    )
    y = np.zeros(spec.num_classes)
    for obj in spec.objects:
        y[obj.class_id] = 1.0
    truth = tuple(TruthBox(class_id=o.class_id, box=tuple(float(t) for t in o.box))
                  for o in spec.objects)
    if image_id is None:
        image_id = f"scene-{int(seed):010d}"
    return SynthSample(image_id=image_id, flow=flow, proposals=proposals,
                       labels=ImageLabels(y=y), truth=truth)


def generate_dataset(specs, seed: int):
    """Map :func:`generate` over specs with per-item derived seeds."""
    child_seeds = np.random.SeedSequence(int(seed)).generate_state(len(specs))
    return [
        generate(spec, int(child_seeds[i]), image_id=f"img{i:05d}")
        for i, spec in enumerate(specs)
    ]


# --- scene spec + dataset files ----------------------------------------------
# spec file:  {"scenes": [{"width": ..., "height": ..., "background_seed": ...,
#              "camera_flow": [u, v], "noise_sigma": s, "boundary_blur": r,
#              "num_classes": C, "num_proposals": R,
#              "objects": [{"class_id": c, "box": [x0, y0, x1, y1],
#                           "flow": [u, v]}, ...],
#              "distractors": [{"box": [...], "color": [r, g, b]}, ...]}]}
# dataset dir: flows/<image_id>.flo, features.json, labels.json


def scene_spec_to_dict(spec: SceneSpec) -> dict:
    return {
        "width": spec.width,
        "height": spec.height,
        "background_seed": spec.background_seed,
        "camera_flow": list(spec.camera_flow),
        "noise_sigma": spec.noise_sigma,
        "boundary_blur": spec.boundary_blur,
        "num_classes": spec.num_classes,
        "num_proposals": spec.num_proposals,
        "objects": [
            {"class_id": o.class_id, "box": list(o.box), "flow": list(o.flow)}
            for o in spec.objects
        ],
        "distractors": [
            {"box": list(d.box), "color": list(d.color)} for d in spec.distractors
        ],
    }


def scene_spec_from_dict(d: dict) -> SceneSpec:
    return SceneSpec(
        width=int(d["width"]),
        height=int(d["height"]),
        background_seed=int(d["background_seed"]),
        camera_flow=tuple(d.get("camera_flow", (0.0, 0.0))),
        noise_sigma=float(d.get("noise_sigma", 0.0)),
        boundary_blur=float(d.get("boundary_blur", 0.0)),
        num_classes=int(d.get("num_classes", 2)),
        num_proposals=int(d.get("num_proposals", 8)),
        objects=tuple(
            SceneObject(class_id=int(o["class_id"]), box=tuple(o["box"]),
                        flow=tuple(o["flow"]))
            for o in d.get("objects", ())
        ),
        distractors=tuple(
            Distractor(box=tuple(x["box"]), color=tuple(x["color"]))
            for x in d.get("distractors", ())
        ),
    )


def write_dataset(samples, out_dir) -> None:
    out = Path(out_dir)
    (out / "flows").mkdir(parents=True, exist_ok=True)
    features = {}
    labels = {}
    for s in samples:
        if s.flow is not None:
            write_flow_file(s.flow, out / "flows" / f"{s.image_id}.flo")
        features[s.image_id] = features_to_dict(s.proposals)
        labels[s.image_id] = {
            "labels": s.labels.y.tolist(),
            "truth": [{"class_id": t.class_id, "box": list(t.box)} for t in s.truth],
        }
    with open(out / "features.json", "w") as f:
        json.dump(features, f)
    with open(out / "labels.json", "w") as f:
        json.dump(labels, f)


def load_dataset(in_dir):
    src = Path(in_dir)
    with open(src / "features.json") as f:
        features = json.load(f)
    with open(src / "labels.json") as f:
        labels = json.load(f)
    samples = []
    for image_id in sorted(features):
        flo = src / "flows" / f"{image_id}.flo"
        flow = read_flow_file(flo) if flo.exists() else None
        meta = labels[image_id]
        samples.append(SynthSample(
            image_id=image_id,
            flow=flow,
            proposals=features_from_dict(features[image_id]),
            labels=ImageLabels(y=np.array(meta["labels"], dtype=np.float64)),
            truth=tuple(TruthBox(class_id=int(t["class_id"]), box=tuple(t["box"]))
                        for t in meta["truth"]),
        ))
    return samples
