"""Motion-aware weakly-supervised detection toolkit at desk scale.

Subpackages cover flow-field I/O and color coding (:mod:`~motionmil.flowio`),
camera-motion normalization (:mod:`~motionmil.camnorm`), the MIL detection
head (:mod:`~motionmil.milhead`), the paired-embedding contrastive objective
(:mod:`~motionmil.contrastive`), motion-driven training-image selection
(:mod:`~motionmil.selection`), synthetic scene generation
(:mod:`~motionmil.synth`), the training loop (:mod:`~motionmil.trainer`),
and the standard synthetic benchmark (:mod:`~motionmil.benchmark`).
"""

__version__ = "0.1.0"

from .backend import active_backend  # noqa: F401
