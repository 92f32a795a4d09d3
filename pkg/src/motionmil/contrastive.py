"""Symmetric contrastive objective over paired projection vectors.

Rows of ``img_proj`` and ``mot_proj`` are L2-normalized and compared by
cosine similarity divided by a learnable positive temperature. Each row of
the similarity matrix contributes a term contrasting its diagonal (positive)
entry against the other entries in that row; columns contribute the mirror
term; the loss is the average of the two directions. The positive pair is
excluded from the negative sum, so each denominator is exactly the full
row (or column) sum, evaluated via max-subtracted log-sum-exp.

Gradients flow through the normalization, the temperature division, and the
log-sum-exp; the gradient of any embedding row is orthogonal to that row
(cosine similarity is scale-invariant).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

NORM_FLOOR = 1e-12


class ZeroVector(ValueError):
    """An embedding row has (numerically) zero norm."""


@dataclass(frozen=True)
class EmbeddingBatch:
    """Paired projection vectors (B, dim) and the temperature ``rho`` > 0."""

    img_proj: np.ndarray
    mot_proj: np.ndarray
    rho: float

    def __post_init__(self):
        img = np.asarray(self.img_proj, dtype=np.float64)
        mot = np.asarray(self.mot_proj, dtype=np.float64)
        if img.ndim != 2 or img.shape[0] < 1:
            raise ValueError("img_proj must be (B, dim) with B >= 1")
        if mot.shape != img.shape:
            raise ValueError(f"mot_proj shape {mot.shape} != img_proj shape {img.shape}")
        if not (np.isfinite(img).all() and np.isfinite(mot).all()):
            raise ValueError("embeddings must be finite")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        object.__setattr__(self, "img_proj", img)
        object.__setattr__(self, "mot_proj", mot)

    @property
    def size(self) -> int:
        return self.img_proj.shape[0]

    @property
    def dim(self) -> int:
        return self.img_proj.shape[1]


@dataclass(frozen=True)
class NceGrads:
    img_proj: np.ndarray
    mot_proj: np.ndarray
    rho: float


def _checked(batch: EmbeddingBatch):
    img = np.ascontiguousarray(batch.img_proj)
    mot = np.ascontiguousarray(batch.mot_proj)
    if (np.linalg.norm(img, axis=1) < NORM_FLOOR).any() \
            or (np.linalg.norm(mot, axis=1) < NORM_FLOOR).any():
        raise ZeroVector(f"embedding rows need norm >= {NORM_FLOOR}")
    return img, mot


def similarity_matrix(batch: EmbeddingBatch) -> np.ndarray:
    """Temperature-scaled cosine similarities S[a, b] of row a vs row b."""
    img, mot = _checked(batch)
    xn = img / np.linalg.norm(img, axis=1)[:, None]
    yn = mot / np.linalg.norm(mot, axis=1)[:, None]
    return (xn @ yn.T) / batch.rho


def nce_loss(batch: EmbeddingBatch) -> float:
    """The symmetric contrastive loss; 0 for B=1, log B for identical rows."""
    img, mot = _checked(batch)
    loss, _, _, _ = kernels.nce_fused(img, mot, batch.rho)
    return float(loss)


def nce_backward(batch: EmbeddingBatch) -> NceGrads:
    """Analytic gradients for both embedding matrices and the temperature."""
    img, mot = _checked(batch)
    _, g_img, g_mot, g_rho = kernels.nce_fused(img, mot, batch.rho)
    return NceGrads(img_proj=g_img, mot_proj=g_mot, rho=float(g_rho))


# --- JSON fixture schema -----------------------------------------------------
# {"img_proj": [[...]], "mot_proj": [[...]], "rho": r}


def batch_to_dict(batch: EmbeddingBatch) -> dict:
    return {
        "img_proj": batch.img_proj.tolist(),
        "mot_proj": batch.mot_proj.tolist(),
        "rho": batch.rho,
    }


def batch_from_dict(d: dict) -> EmbeddingBatch:
    return EmbeddingBatch(
        img_proj=np.array(d["img_proj"], dtype=np.float64),
        mot_proj=np.array(d["mot_proj"], dtype=np.float64),
        rho=float(d["rho"]),
    )
