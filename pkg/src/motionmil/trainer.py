"""Desk-scale training loop combining the MIL and contrastive objectives.

Architecture: raw proposal features pass through a shared trainable linear
transform (the stand-in for a finetuned backbone); the MIL head scores the
transformed proposals; the contrastive branch mean-pools the transformed
features per image, projects them through a shared linear map to a small
embedding, and pairs each image's RGB embedding with the embedding of its
(optionally camera-normalized) colorized flow. The contrastive gradient
therefore reaches the same features the detection head consumes, while
evaluation reads RGB features only and never touches flow.

Optimization is plain SGD, deterministic given the seed. With selection
enabled, a short RGB-only pretrain predicts one box per training image and
the motion-selection rule filters the training set before epoch 1; the
evaluation set is never filtered.
"""

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import kernels
from .camnorm import normalize_camera_motion
from .flowio import colorize_float, magnitude, normalize_magnitudes
from .milhead import EPS, MilHead
from .selection import SelectionConfig, select_dataset
from .synth import COLOR_STAT_DIMS, box_color_features, iou

RHO_FLOOR = 1e-4


class NonFiniteLoss(RuntimeError):
    """Training produced a NaN/Inf loss; message carries the step index."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 10
    nce_weight: float = 1.0
    seed: int = 0
    use_motion: bool = False
    use_normalization: bool = False
    use_selection: bool = False
    embed_dim: int = 32
    rho_init: float = 0.5
    rho_min: float = RHO_FLOOR
    corner_fraction: float = 0.1
    selection: SelectionConfig = SelectionConfig()
    selection_pretrain_epochs: int = 8
    init_scale: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.nce_weight < 0:
            raise ValueError("nce_weight must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.rho_min < RHO_FLOOR or self.rho_init < self.rho_min:
            raise ValueError(f"need rho_init >= rho_min >= {RHO_FLOOR}")


@dataclass(frozen=True)
class Model:
    """Shared backbone transform, projection map, temperature, MIL head."""

    backbone: np.ndarray
    proj: np.ndarray
    rho: float
    head: MilHead


@dataclass(frozen=True)
class TrainReport:
    mil_loss_per_epoch: tuple
    nce_loss_per_epoch: tuple
    corloc: float
    per_class_corloc: dict
    n_train_images: int
    selected_count: Optional[int]


@dataclass(frozen=True)
class EvalResult:
    corloc: float
    per_class_corloc: dict
    n_pairs: int


def _motion_pooled(sample, cfg: TrainConfig) -> np.ndarray:
    """Mean-pooled color features of the (optionally normalized) flow render."""
    if sample.flow is None:
        raise ValueError(f"{sample.image_id}: use_motion requires flow data")
    flow = sample.flow
    if cfg.use_normalization:
        flow, _ = normalize_camera_motion(flow, cfg.corner_fraction)
    rendered = colorize_float(flow)
    return box_color_features(rendered, sample.proposals.boxes).mean(axis=0)


def _train_core(samples, cfg: TrainConfig):
    n = len(samples)
    dim = samples[0].proposals.dim
    n_classes = samples[0].labels.y.shape[0]
    for s in samples:
        if s.proposals.dim != dim or s.labels.y.shape[0] != n_classes:
            raise ValueError(f"{s.image_id}: inconsistent feature or label dimensions")

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    backbone = np.eye(dim)
    w_det = cfg.init_scale * rng.standard_normal((n_classes, dim))
    b_det = np.zeros(n_classes)
    w_cls = cfg.init_scale * rng.standard_normal((n_classes, dim))
    b_cls = np.zeros(n_classes)
    proj = rng.standard_normal((cfg.embed_dim, dim)) / np.sqrt(dim)
    rho = float(cfg.rho_init)

    phi_list = [np.ascontiguousarray(s.proposals.phi) for s in samples]
    y_list = [np.ascontiguousarray(s.labels.y) for s in samples]
    motion_on = cfg.use_motion and cfg.nce_weight > 0
    pooled_rgb = pooled_mot = None
    if motion_on:
        # the paired branch pools the color statistics only: box geometry is
        # identical for the two renders of an image, which would let the
        # contrastive loss align on geometry and ignore appearance entirely
        pooled_rgb = np.stack([phi.mean(axis=0) for phi in phi_list])
        pooled_mot = np.stack([_motion_pooled(s, cfg) for s in samples])
        pooled_rgb[:, COLOR_STAT_DIMS:] = 0.0
        pooled_mot[:, COLOR_STAT_DIMS:] = 0.0
        # and works on deviations from the training-set mean; without
        # centering every pooled feature shares one dominant direction and
        # the cosine similarities start out degenerate
        pooled_rgb -= pooled_rgb.mean(axis=0)
        pooled_mot -= pooled_mot.mean(axis=0)

    lam = cfg.nce_weight
    lr = cfg.learning_rate
    mil_hist, nce_hist = [], []
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        mil_sum, nce_sum, nce_batches = 0.0, 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            nb = idx.shape[0]
            g_backbone = np.zeros((dim, dim))
            g_w_det = np.zeros_like(w_det)
            g_b_det = np.zeros_like(b_det)
            g_w_cls = np.zeros_like(w_cls)
            g_b_cls = np.zeros_like(b_cls)
            batch_mil = 0.0
            for j in idx:
                feats = phi_list[j] @ backbone.T
                loss_j, d_wd, d_bd, d_wc, d_bc, g_feats = kernels.mil_fused(
                    feats, w_det, b_det, w_cls, b_cls, y_list[j], EPS
                )
                batch_mil += loss_j
                g_w_det += d_wd
                g_b_det += d_bd
                g_w_cls += d_wc
                g_b_cls += d_bc
                g_backbone += g_feats.T @ phi_list[j]
            if not np.isfinite(batch_mil):
                raise NonFiniteLoss(f"non-finite MIL loss at step {step}")
            mil_sum += batch_mil
            scale = 1.0 / nb
            g_backbone *= scale

            if motion_on and nb >= 2:
                pool_i = pooled_rgb[idx] @ backbone.T
                pool_m = pooled_mot[idx] @ backbone.T
                emb_i = np.ascontiguousarray(pool_i @ proj.T)
                emb_m = np.ascontiguousarray(pool_m @ proj.T)
                nce_l, g_ei, g_em, g_rho = kernels.nce_fused(emb_i, emb_m, rho)
                if not np.isfinite(nce_l):
                    raise NonFiniteLoss(f"non-finite contrastive loss at step {step}")
                nce_sum += nce_l
                nce_batches += 1
                g_backbone += lam * (
                    (g_ei @ proj).T @ pooled_rgb[idx] + (g_em @ proj).T @ pooled_mot[idx]
                )
                proj -= lr * lam * (g_ei.T @ pool_i + g_em.T @ pool_m)
                # trust region: the temperature gradient grows with batch
                # size squared and 1/rho, so a raw step can crash rho to the
                # floor in one update; cap each step at halving/doubling
                rho_new = min(max(rho - lr * lam * g_rho, 0.5 * rho), 2.0 * rho)
                rho = max(rho_new, cfg.rho_min)

            backbone -= lr * g_backbone
            w_det -= lr * scale * g_w_det
            b_det -= lr * scale * g_b_det
            w_cls -= lr * scale * g_w_cls
            b_cls -= lr * scale * g_b_cls
            step += 1
        mil_hist.append(mil_sum / n)
        nce_hist.append(nce_sum / nce_batches if nce_batches else 0.0)

    head = MilHead(w_det=w_det, b_det=b_det, w_cls=w_cls, b_cls=b_cls)
    model = Model(backbone=backbone, proj=proj, rho=rho, head=head)
    return model, mil_hist, nce_hist


def _scores(model: Model, sample) -> np.ndarray:
    feats = np.ascontiguousarray(sample.proposals.phi @ model.backbone.T)
    _, _, p_det, p_cls, _ = kernels.mil_forward(
        feats, model.head.w_det, model.head.b_det, model.head.w_cls, model.head.b_cls
    )
    return p_det * p_cls


def predict_top_boxes(model: Model, samples) -> dict:
    """Highest-scoring proposal box per image, over its labeled classes."""
    out = {}
    for s in samples:
        score = _scores(model, s)
        labeled = np.flatnonzero(s.labels.y == 1.0)
        view = score[:, labeled] if labeled.size else score
        flat = int(np.argmax(view))
        out[s.image_id] = tuple(s.proposals.boxes[flat // view.shape[1]])
    return out


def evaluate(model: Model, samples) -> EvalResult:
    """CorLoc at IoU 0.5 over (image, labeled class) pairs; RGB features only."""
    hits, total = 0, 0
    per_class_hits, per_class_total = {}, {}
    for s in samples:
        score = _scores(model, s)
        for c in np.flatnonzero(s.labels.y == 1.0):
            c = int(c)
            best = int(np.argmax(score[:, c]))
            box = s.proposals.boxes[best]
            hit = any(t.class_id == c and iou(box, t.box) >= 0.5 for t in s.truth)
            hits += hit
            total += 1
            per_class_hits[c] = per_class_hits.get(c, 0) + hit
            per_class_total[c] = per_class_total.get(c, 0) + 1
    if total == 0:
        raise ValueError("no labeled (image, class) pairs to evaluate")
    per_class = {c: per_class_hits[c] / per_class_total[c] for c in sorted(per_class_total)}
    return EvalResult(corloc=hits / total, per_class_corloc=per_class, n_pairs=total)


def fit(train_set, cfg: TrainConfig, eval_set=None):
    """Train and evaluate; returns ``(Model, TrainReport)``.

    With no ``eval_set`` the CorLoc is measured on the training images
    (their truth boxes are used for measurement only).
    """
    if not train_set:
        raise ValueError("training set is empty")

    selected_count = None
    train_used = list(train_set)
    if cfg.use_selection:
        pre_cfg = replace(
            cfg,
            use_motion=False,
            use_selection=False,
            epochs=cfg.selection_pretrain_epochs,
        )
        pre_model, _, _ = _train_core(train_used, pre_cfg)
        boxes = predict_top_boxes(pre_model, train_used)
        records = []
        for s in train_used:
            if s.flow is None:
                raise ValueError(f"{s.image_id}: use_selection requires flow data")
            flow = s.flow
            if cfg.use_normalization:
                flow, _ = normalize_camera_motion(flow, cfg.corner_fraction)
            mag = normalize_magnitudes(magnitude(flow))
            records.append((s.image_id, mag, boxes[s.image_id]))
        manifest = select_dataset(records, cfg.selection)
        train_used = [s for s, rec in zip(train_used, manifest) if rec.selected == 1]
        selected_count = len(train_used)
        if not train_used:
            raise ValueError("selection removed every training image")

    model, mil_hist, nce_hist = _train_core(train_used, cfg)
    result = evaluate(model, eval_set if eval_set is not None else train_used)
    report = TrainReport(
        mil_loss_per_epoch=tuple(mil_hist),
        nce_loss_per_epoch=tuple(nce_hist),
        corloc=result.corloc,
        per_class_corloc=result.per_class_corloc,
        n_train_images=len(train_used),
        selected_count=selected_count,
    )
    return model, report


def train(train_set, cfg: TrainConfig, eval_set=None) -> TrainReport:
    """Like :func:`fit`, returning only the report."""
    _, report = fit(train_set, cfg, eval_set)
    return report


# --- serialization -----------------------------------------------------------


def config_from_dict(d: dict) -> TrainConfig:
    known = {
        "learning_rate", "epochs", "batch_size", "nce_weight", "seed",
        "use_motion", "use_normalization", "use_selection", "embed_dim",
        "rho_init", "rho_min", "corner_fraction", "selection_pretrain_epochs",
        "init_scale",
    }
    unknown = set(d) - known - {"selection_m", "selection_d"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {k: d[k] for k in known if k in d}
    if "selection_m" in d or "selection_d" in d:
        kwargs["selection"] = SelectionConfig(
            m=float(d.get("selection_m", 0.2)), d=float(d.get("selection_d", 1.5))
        )
    return TrainConfig(**kwargs)


def report_to_dict(report: TrainReport) -> dict:
    return {
        "mil_loss_per_epoch": list(report.mil_loss_per_epoch),
        "nce_loss_per_epoch": list(report.nce_loss_per_epoch),
        "corloc": report.corloc,
        "per_class_corloc": {str(c): v for c, v in report.per_class_corloc.items()},
        "n_train_images": report.n_train_images,
        "selected_count": report.selected_count,
    }


def model_to_dict(model: Model) -> dict:
    return {
        "backbone": model.backbone.tolist(),
        "proj": model.proj.tolist(),
        "rho": model.rho,
        "head": {
            "w_det": model.head.w_det.tolist(),
            "b_det": model.head.b_det.tolist(),
            "w_cls": model.head.w_cls.tolist(),
            "b_cls": model.head.b_cls.tolist(),
        },
    }


def model_from_dict(d: dict) -> Model:
    return Model(
        backbone=np.array(d["backbone"], dtype=np.float64),
        proj=np.array(d["proj"], dtype=np.float64),
        rho=float(d["rho"]),
        head=MilHead(
            w_det=np.array(d["head"]["w_det"], dtype=np.float64),
            b_det=np.array(d["head"]["b_det"], dtype=np.float64),
            w_cls=np.array(d["head"]["w_cls"], dtype=np.float64),
            b_cls=np.array(d["head"]["b_cls"], dtype=np.float64),
        ),
    )


def save_model(model: Model, path) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f)


def load_model(path) -> Model:
    with open(path) as f:
        return model_from_dict(json.load(f))
