"""Training losses for weak actor-action supervision, with analytic gradients.

Two ingredients:

* a multi-instance multi-label (MIML) loss on the bag of detected actors:
  per class, the bag prediction is the max over actors, and the loss is the
  binary cross entropy against the clip-level label vector, averaged over
  classes;
* a per-actor association loss: once each actor has an assigned action
  subset, binary cross entropy between the subset's indicator vector and
  the actor's class probabilities, averaged over classes and summed over
  actors.

The combined objective is ``miml + alpha * association`` with a default
``alpha`` of 0.3, compensating for the association term being per actor
while the MIML term is per frame. Class-dimension reduction is the mean in
both losses so ``alpha`` keeps its meaning across datasets with different
class counts.

Gradients are hand-derived for these fixed forms: each BCE-on-sigmoid term
contributes ``(sigmoid(s) - target) / C`` to its logit, and the MIML term
routes gradient only to the per-class argmax actor (lowest index on ties).
Probabilities are clamped to [1e-7, 1 - 1e-7] before any log; gradients are
those of the unclamped objective, which only differ inside the saturated
clamp region (|logit| > ~16).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ActionSubset, ValidationError

PROB_EPSILON = 1e-7


def sigmoid_probs(logits) -> np.ndarray:
    """Elementwise stable sigmoid, clamped to [1e-7, 1 - 1e-7]."""
    s = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValidationError("logits must be finite")
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return np.clip(out, PROB_EPSILON, 1.0 - PROB_EPSILON)


def _as_prob_matrix(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2:
        raise ValidationError(f"probs must be an actors x classes matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("probs must be finite")
    return np.clip(p, PROB_EPSILON, 1.0 - PROB_EPSILON)


def _as_label_vector(clip_labels, class_count: int) -> np.ndarray:
    y = np.asarray(clip_labels, dtype=np.float64)
    if y.shape != (class_count,):
        raise ValidationError(
            f"label vector has shape {y.shape}, expected ({class_count},)"
        )
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("label vector must be binary")
    return y


def _bce(targets: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return -(targets * np.log(probs) + (1.0 - targets) * np.log1p(-probs))


def _targets_from_subsets(
    assignments: Sequence[ActionSubset], n: int, class_count: int
) -> np.ndarray:
    if len(assignments) != n:
        raise ValidationError(
            f"{len(assignments)} assigned subsets for {n} actors"
        )
    targets = np.zeros((n, class_count), dtype=np.float64)
    for i, subset in enumerate(assignments):
        for c in subset.classes():
            if c >= class_count:
                raise ValidationError(
                    f"assigned subset references class {c}, class count is {class_count}"
                )
            targets[i, c] = 1.0
    return targets


def miml_loss(clip_labels, probs) -> float:
    """Bag-level BCE: per class, max over actors vs. the clip label vector."""
    p = _as_prob_matrix(probs)
    n, class_count = p.shape
    if n == 0:
        raise ValidationError("MIML loss needs at least one actor (max over an empty bag)")
    y = _as_label_vector(clip_labels, class_count)
    bag = p.max(axis=0)
    return float(np.mean(_bce(y, bag)))


def association_loss(assignments: Sequence[ActionSubset], probs) -> float:
    """Per-actor BCE against assigned subsets, mean over classes, summed over actors.

    Empty subsets are legal (the thresholding baseline produces them); they
    contribute an all-zero target row.
    """
    p = _as_prob_matrix(probs)
    n, class_count = p.shape
    targets = _targets_from_subsets(assignments, n, class_count)
    per_actor = np.mean(_bce(targets, p), axis=1)
    return float(np.sum(per_actor))


@dataclass(frozen=True)
class LossBreakdown:
    """Combined loss value with its parts and the per-logit gradient."""

    miml: float
    association: float
    combined: float
    alpha: float
    gradient: np.ndarray  # actors x classes, d(combined)/d(logit)


def _gradient(
    y: np.ndarray,
    p: np.ndarray,
    assignments: Optional[Sequence[ActionSubset]],
    alpha: float,
) -> np.ndarray:
    n, class_count = p.shape
    grad = np.zeros_like(p)
    # MIML routes gradient to the argmax actor per class; np.argmax picks
    # the lowest index on ties, the documented subgradient choice.
    winners = np.argmax(p, axis=0)
    cols = np.arange(class_count)
    grad[winners, cols] += (p[winners, cols] - y) / class_count
    if assignments is not None:
        targets = _targets_from_subsets(assignments, n, class_count)
        grad += alpha * (p - targets) / class_count
    return grad


def combined_loss(
    clip_labels,
    probs,
    assignments: Optional[Sequence[ActionSubset]],
    alpha: float = 0.3,
) -> LossBreakdown:
    """``miml + alpha * association`` with the gradient matrix populated.

    ``assignments=None`` skips the association term entirely (warmup /
    MIML-only training); ``alpha=0`` reduces to MIML training as well.
    """
    p = _as_prob_matrix(probs)
    n, class_count = p.shape
    if n == 0:
        raise ValidationError("combined loss needs at least one actor")
    y = _as_label_vector(clip_labels, class_count)
    miml = miml_loss(y, p)
    assoc = association_loss(assignments, p) if assignments is not None else 0.0
    grad = _gradient(y, p, assignments, alpha)
    grad.flags.writeable = False
    return LossBreakdown(
        miml=miml,
        association=assoc,
        combined=miml + alpha * assoc,
        alpha=alpha,
        gradient=grad,
    )


def loss_gradients(
    clip_labels,
    logits,
    assignments: Optional[Sequence[ActionSubset]],
    alpha: float = 0.3,
) -> np.ndarray:
    """d(combined loss)/d(logits) as an actors x classes matrix."""
    return combined_loss(clip_labels, sigmoid_probs(logits), assignments, alpha).gradient
