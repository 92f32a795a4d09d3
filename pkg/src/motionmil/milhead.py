"""Weakly-supervised MIL detection head with analytic gradients.

Per-proposal detection and classification scores are affine in the proposal
features; the detection scores are softmaxed over proposals within each
class, the classification scores over classes within each proposal; the
image-level prediction per class is the sum over proposals of the product of
the two probabilities, squashed for log-safety; training minimizes binary
cross-entropy against image-level labels.

The squash is an epsilon-clamp by default: the product-sum already lies in
[0, 1], and a logistic sigmoid would compress it into [0.5, 0.731] and
distort the cross-entropy. The literal logistic variant is available via
``squash="logistic"`` for comparison and is implemented on the plain-numpy
reference path only.
"""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels

EPS = 1e-7


class DimensionMismatch(ValueError):
    """Feature, weight, or label dimensions disagree."""


@dataclass(frozen=True)
class ProposalFeatures:
    """R proposal feature vectors (R, D) with their (R, 4) boxes.

    Boxes are (x_min, y_min, x_max, y_max) in pixels with positive area;
    when ``image_size`` (width, height) is given, boxes must lie within it.
    """

    phi: np.ndarray
    boxes: np.ndarray
    image_size: Optional[tuple] = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        boxes = np.asarray(self.boxes, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[0] < 1:
            raise ValueError("phi must be (R, D) with R >= 1")
        if not np.isfinite(phi).all():
            raise ValueError("phi must be finite")
        if boxes.shape != (phi.shape[0], 4):
            raise DimensionMismatch(f"boxes must be ({phi.shape[0]}, 4), got {boxes.shape}")
        if ((boxes[:, 2] <= boxes[:, 0]) | (boxes[:, 3] <= boxes[:, 1])).any():
            raise ValueError("every box needs positive area")
        if self.image_size is not None:
            w, h = self.image_size
            if (boxes[:, 0] < 0).any() or (boxes[:, 1] < 0).any() \
                    or (boxes[:, 2] > w).any() or (boxes[:, 3] > h).any():
                raise ValueError("boxes must lie within image bounds")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "boxes", boxes)

    @property
    def count(self) -> int:
        return self.phi.shape[0]

    @property
    def dim(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class MilHead:
    """Per-class detection/classification weights (C, D) and biases (C,)."""

    w_det: np.ndarray
    b_det: np.ndarray
    w_cls: np.ndarray
    b_cls: np.ndarray

    def __post_init__(self):
        w_det = np.asarray(self.w_det, dtype=np.float64)
        b_det = np.asarray(self.b_det, dtype=np.float64)
        w_cls = np.asarray(self.w_cls, dtype=np.float64)
        b_cls = np.asarray(self.b_cls, dtype=np.float64)
        if w_det.ndim != 2 or w_cls.shape != w_det.shape:
            raise DimensionMismatch("w_det and w_cls must be equal-shape (C, D)")
        c = w_det.shape[0]
        if b_det.shape != (c,) or b_cls.shape != (c,):
            raise DimensionMismatch(f"biases must be ({c},)")
        for arr in (w_det, b_det, w_cls, b_cls):
            if not np.isfinite(arr).all():
                raise ValueError("head parameters must be finite")
        object.__setattr__(self, "w_det", w_det)
        object.__setattr__(self, "b_det", b_det)
        object.__setattr__(self, "w_cls", w_cls)
        object.__setattr__(self, "b_cls", b_cls)

    @property
    def num_classes(self) -> int:
        return self.w_det.shape[0]

    @property
    def dim(self) -> int:
        return self.w_det.shape[1]


@dataclass(frozen=True)
class ImageLabels:
    """Binary image-level class labels (C,)."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1:
            raise ValueError("labels must be 1-D")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("labels must be binary")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class MilOutput:
    """Scores, both softmaxes, and the clamped image-level prediction."""

    scores_det: np.ndarray
    scores_cls: np.ndarray
    p_det: np.ndarray
    p_cls: np.ndarray
    p_hat: np.ndarray


@dataclass(frozen=True)
class MilGrads:
    w_det: np.ndarray
    b_det: np.ndarray
    w_cls: np.ndarray
    b_cls: np.ndarray


def _check_dims(head: MilHead, feats: ProposalFeatures):
    if head.dim != feats.dim:
        raise DimensionMismatch(
            f"head expects D={head.dim}, features have D={feats.dim}"
        )


def forward(head: MilHead, feats: ProposalFeatures, dtype=np.float64,
            squash: str = "clamp") -> MilOutput:
    """Scores, dual softmaxes (max-subtracted), and image-level predictions.

    ``dtype=np.float32`` selects the 32-bit fast path; ``squash`` is
    ``"clamp"`` (default) or ``"logistic"``.
    """
    _check_dims(head, feats)
    phi = np.ascontiguousarray(feats.phi, dtype=dtype)
    w_det = np.ascontiguousarray(head.w_det, dtype=dtype)
    b_det = np.ascontiguousarray(head.b_det, dtype=dtype)
    w_cls = np.ascontiguousarray(head.w_cls, dtype=dtype)
    b_cls = np.ascontiguousarray(head.b_cls, dtype=dtype)
    z_det, z_cls, p_det, p_cls, s = kernels.mil_forward(phi, w_det, b_det, w_cls, b_cls)
    if squash == "clamp":
        p_hat = np.clip(s, dtype(EPS), dtype(1.0) - dtype(EPS))
    elif squash == "logistic":
        p_hat = 1.0 / (1.0 + np.exp(-s))
    else:
        raise ValueError(f"squash must be 'clamp' or 'logistic', got {squash!r}")
    return MilOutput(scores_det=z_det, scores_cls=z_cls, p_det=p_det, p_cls=p_cls, p_hat=p_hat)


def mil_loss(out: MilOutput, labels: ImageLabels) -> float:
    """Binary cross-entropy over classes of the image-level predictions."""
    y = labels.y
    p = np.asarray(out.p_hat, dtype=np.float64)
    if y.shape != p.shape:
        raise DimensionMismatch(f"labels {y.shape} vs predictions {p.shape}")
    return -float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def mil_backward(head: MilHead, feats: ProposalFeatures, labels: ImageLabels,
                 squash: str = "clamp") -> MilGrads:
    """Analytic loss gradients for all four parameter blocks."""
    _check_dims(head, feats)
    if labels.y.shape != (head.num_classes,):
        raise DimensionMismatch(
            f"labels must be ({head.num_classes},), got {labels.y.shape}"
        )
    if squash == "clamp":
        _, g_w_det, g_b_det, g_w_cls, g_b_cls, _ = kernels.mil_fused(
            np.ascontiguousarray(feats.phi),
            head.w_det, head.b_det, head.w_cls, head.b_cls,
            labels.y, EPS,
        )
    elif squash == "logistic":
        g_w_det, g_b_det, g_w_cls, g_b_cls = _logistic_backward(head, feats, labels)
    else:
        raise ValueError(f"squash must be 'clamp' or 'logistic', got {squash!r}")
    return MilGrads(w_det=g_w_det, b_det=g_b_det, w_cls=g_w_cls, b_cls=g_b_cls)


def _logistic_backward(head, feats, labels):
    # reference-only comparison path, plain numpy
    phi = feats.phi
    _, _, p_det, p_cls, s = kernels.mil_forward_numpy(
        phi, head.w_det, head.b_det, head.w_cls, head.b_cls
    )
    p_hat = 1.0 / (1.0 + np.exp(-s))
    g_phat = -(labels.y / p_hat - (1.0 - labels.y) / (1.0 - p_hat))
    g_s = g_phat * p_hat * (1.0 - p_hat)
    g_p_det = g_s[None, :] * p_cls
    g_p_cls = g_s[None, :] * p_det
    g_z_det = p_det * (g_p_det - (p_det * g_p_det).sum(axis=0)[None, :])
    g_z_cls = p_cls * (g_p_cls - (p_cls * g_p_cls).sum(axis=1)[:, None])
    return g_z_det.T @ phi, g_z_det.sum(axis=0), g_z_cls.T @ phi, g_z_cls.sum(axis=0)


# --- JSON fixture schema -----------------------------------------------------
# head:     {"w_det": [[...]], "b_det": [...], "w_cls": [[...]], "b_cls": [...]}
# features: {"phi": [[...]], "boxes": [[x0, y0, x1, y1], ...],
#            "image_size": [w, h] | null}


def head_to_dict(head: MilHead) -> dict:
    return {
        "w_det": head.w_det.tolist(),
        "b_det": head.b_det.tolist(),
        "w_cls": head.w_cls.tolist(),
        "b_cls": head.b_cls.tolist(),
    }


def head_from_dict(d: dict) -> MilHead:
    return MilHead(
        w_det=np.array(d["w_det"], dtype=np.float64),
        b_det=np.array(d["b_det"], dtype=np.float64),
        w_cls=np.array(d["w_cls"], dtype=np.float64),
        b_cls=np.array(d["b_cls"], dtype=np.float64),
    )


def features_to_dict(feats: ProposalFeatures) -> dict:
    return {
        "phi": feats.phi.tolist(),
        "boxes": feats.boxes.tolist(),
        "image_size": list(feats.image_size) if feats.image_size else None,
    }


def features_from_dict(d: dict) -> ProposalFeatures:
    size = d.get("image_size")
    return ProposalFeatures(
        phi=np.array(d["phi"], dtype=np.float64),
        boxes=np.array(d["boxes"], dtype=np.float64),
        image_size=tuple(size) if size else None,
    )


def save_head(head: MilHead, path) -> None:
    with open(path, "w") as f:
        json.dump(head_to_dict(head), f)


def load_head(path) -> MilHead:
    with open(path) as f:
        return head_from_dict(json.load(f))
