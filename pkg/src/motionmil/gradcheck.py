"""Central finite-difference verification of the hand-written gradients.

Per-block errors are measured relative to the norm of the instance's full
gradient (all blocks concatenated). Blocks whose true gradient is
identically zero, like the detection biases (the proposal-axis softmax is
invariant to per-class score shifts), then compare at the noise floor
instead of producing a 0/0 ratio.
"""

from dataclasses import dataclass

import numpy as np

from .contrastive import EmbeddingBatch, nce_backward, nce_loss
from .milhead import ImageLabels, MilHead, ProposalFeatures, forward, mil_backward, mil_loss

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    instances: int
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def finite_difference(f, x, step=DEFAULT_STEP):
    """Central-difference gradient of scalar ``f`` at array ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        grad.ravel()[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def _block_errors(analytic: dict, numeric: dict) -> dict:
    """Per-block error relative to the full-gradient norm of the instance."""
    full_a = np.concatenate([np.ravel(analytic[k]) for k in analytic])
    full_n = np.concatenate([np.ravel(numeric[k]) for k in analytic])
    denom = max(np.linalg.norm(full_a), np.linalg.norm(full_n), 1e-12)
    return {
        k: float(np.linalg.norm(np.ravel(analytic[k]) - np.ravel(numeric[k])) / denom)
        for k in analytic
    }


def _dummy_boxes(r):
    # valid positive-area boxes; the gradients never look at them
    return np.array([[0.0, 0.0, 1.0 + i, 1.0] for i in range(r)])


def milhead_suite(instances=100, seed=0, step=DEFAULT_STEP, tol=DEFAULT_TOL):
    """Gradcheck the MIL head over random small instances."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    worst = {"w_det": 0.0, "b_det": 0.0, "w_cls": 0.0, "b_cls": 0.0}
    for _ in range(instances):
        r = int(rng.integers(1, 6))
        c = int(rng.integers(1, 5))
        d = int(rng.integers(1, 9))
        feats = ProposalFeatures(phi=rng.normal(0, 1, (r, d)), boxes=_dummy_boxes(r))
        head = MilHead(
            w_det=rng.normal(0, 0.5, (c, d)),
            b_det=rng.normal(0, 0.5, c),
            w_cls=rng.normal(0, 0.5, (c, d)),
            b_cls=rng.normal(0, 0.5, c),
        )
        labels = ImageLabels(y=rng.integers(0, 2, c).astype(np.float64))
        grads = mil_backward(head, feats, labels)

        def loss_with(**block):
            parts = {
                "w_det": head.w_det, "b_det": head.b_det,
                "w_cls": head.w_cls, "b_cls": head.b_cls,
            }
            parts.update(block)
            return mil_loss(forward(MilHead(**parts), feats), labels)

        numeric = {
            name: finite_difference(
                lambda x, _n=name: loss_with(**{_n: x}), getattr(head, name), step
            )
            for name in worst
        }
        analytic = {name: getattr(grads, name) for name in worst}
        for name, err in _block_errors(analytic, numeric).items():
            worst[name] = max(worst[name], err)
    return [
        CheckResult(name=f"milhead.{k}", instances=instances, max_rel_error=v, tol=tol)
        for k, v in worst.items()
    ]


def contrastive_suite(instances=100, seed=0, step=DEFAULT_STEP, tol=DEFAULT_TOL):
    """Gradcheck the contrastive loss over random batches."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    sizes = [(b, e) for b in (2, 3, 5) for e in (4, 16)]
    worst = {"img_proj": 0.0, "mot_proj": 0.0, "rho": 0.0}
    for k in range(instances):
        b, e = sizes[k % len(sizes)]
        img = rng.normal(0, 1, (b, e))
        mot = rng.normal(0, 1, (b, e))
        rho = float(rng.uniform(0.3, 2.0))
        grads = nce_backward(EmbeddingBatch(img_proj=img, mot_proj=mot, rho=rho))

        numeric = {
            "img_proj": finite_difference(
                lambda x: nce_loss(EmbeddingBatch(img_proj=x, mot_proj=mot, rho=rho)),
                img, step,
            ),
            "mot_proj": finite_difference(
                lambda x: nce_loss(EmbeddingBatch(img_proj=img, mot_proj=x, rho=rho)),
                mot, step,
            ),
            "rho": finite_difference(
                lambda x: nce_loss(EmbeddingBatch(img_proj=img, mot_proj=mot,
                                                  rho=float(x[0]))),
                np.array([rho]), step,
            ),
        }
        analytic = {"img_proj": grads.img_proj, "mot_proj": grads.mot_proj,
                    "rho": np.array([grads.rho])}
        for name, err in _block_errors(analytic, numeric).items():
            worst[name] = max(worst[name], err)
    return [
        CheckResult(name=f"contrastive.{k}", instances=instances, max_rel_error=v, tol=tol)
        for k, v in worst.items()
    ]


def run_suites(module="all", instances=100, seed=0, step=DEFAULT_STEP, tol=DEFAULT_TOL):
    rows = []
    if module in ("all", "milhead"):
        rows.extend(milhead_suite(instances, seed, step, tol))
    if module in ("all", "contrastive"):
        rows.extend(contrastive_suite(instances, seed, step, tol))
    if not rows:
        raise ValueError(f"unknown module {module!r}")
    return rows


def format_table(rows) -> str:
    lines = [f"{'check':<24} {'instances':>9} {'max rel err':>12} {'tol':>8}  result"]
    for r in rows:
        lines.append(
            f"{r.name:<24} {r.instances:>9d} {r.max_rel_error:>12.3e} "
            f"{r.tol:>8.0e}  {'PASS' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines)
