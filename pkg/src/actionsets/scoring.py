"""Per-clip action power sets and subset scores.

For a clip annotated with label set ``L``, each detected actor gets one
score per non-empty subset ``w`` of ``L``::

    p(w) = exp(sum_{c in w} s_c) / (sum_{w' != {}} exp(sum_{c in w'} s_c)) * d

where ``s_c`` is the actor's logit for class ``c`` and ``d`` its detection
confidence. The normalizer runs over the clip's own power set only, so it
differs per clip and stays small.

The denominator is never enumerated: it satisfies the product identity

    sum over non-empty w' of exp(sum_{c in w'} s_c)  =  prod_{c in L} (1 + exp(s_c)) - 1

which this module evaluates in log space with softplus/log1p accumulation,
making the normalizer O(|L|). An enumerated log-sum-exp version is kept as
an independent cross-check. Score tables themselves are still materialized
for all 2^|L| - 1 non-empty subsets (the assignment solver needs each one);
subset order is fixed ascending by bit value so ties break reproducibly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import (
    ActionSubset,
    ActorDetection,
    PowerSetTooLargeError,
    ValidationError,
)

DEFAULT_POWER_SET_CAP = 20

_LN2 = math.log(2.0)


def _subset_sums(values: np.ndarray) -> np.ndarray:
    """``out[m] = sum of values[j] over the set bits j of m`` for every mask.

    One vectorized pass per bit, accumulating in ascending bit order, so the
    result is deterministic and memory stays at one 2^k array.
    """
    k = len(values)
    out = np.zeros(1 << k)
    masks = np.arange(1 << k)
    for j in range(k):
        with_bit = np.flatnonzero((masks >> j) & 1)
        out[with_bit] = out[with_bit ^ (1 << j)] + values[j]
    return out


def sorted_label_tuple(label_set: Iterable[int]) -> tuple[int, ...]:
    """Normalize a label set to a sorted tuple of distinct non-negative ints."""
    labels = sorted({int(c) for c in label_set})
    if labels and labels[0] < 0:
        raise ValidationError(f"label indices must be non-negative, got {labels[0]}")
    return tuple(labels)


def _global_masks(classes: tuple[int, ...]) -> list[int]:
    """Map every local subset mask over ``classes`` to its global bit value.

    Local bit j corresponds to classes[j]; because classes are sorted, the
    ascending local order coincides with ascending global bit order.
    """
    k = len(classes)
    out = [0] * (1 << k)
    for m in range(1, 1 << k):
        low = (m & -m).bit_length() - 1
        out[m] = out[m & (m - 1)] | (1 << classes[low])
    return out


def enumerate_power_set(
    label_set: Iterable[int], cap: int = DEFAULT_POWER_SET_CAP
) -> list[ActionSubset]:
    """All subsets of ``label_set`` (the empty set included), ascending by bit value.

    Raises :class:`PowerSetTooLargeError` when ``|label_set|`` exceeds ``cap``;
    there is deliberately no silent truncation.
    """
    classes = sorted_label_tuple(label_set)
    if len(classes) > cap:
        raise PowerSetTooLargeError(
            f"power set too large: |L|={len(classes)} exceeds cap {cap}"
        )
    return [ActionSubset(bits) for bits in _global_masks(classes)]


def subset_log_numerator(subset: ActionSubset, logits: Sequence[float]) -> float:
    """Sum of the logits of the classes in ``subset`` (0.0 for the empty set)."""
    total = 0.0
    for c in subset.classes():
        if c >= len(logits):
            raise ValidationError(
                f"subset references class {c} but only {len(logits)} logits given"
            )
        v = logits[c]
        if not math.isfinite(v):
            raise ValidationError(f"logit for class {c} is not finite: {v!r}")
        total += v
    return total


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow on either tail.
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _log1mexp(x: float) -> float:
    # log(1 - e^{ -x }) for x > 0, split at ln 2 to keep both branches stable.
    if x <= _LN2:
        return math.log(-math.expm1(-x))
    return math.log1p(-math.exp(-x))


def log_normalizer(label_logits: Sequence[float]) -> float:
    """log of the sum of exp(subset logit sum) over all non-empty subsets.

    Input is the logit vector already restricted to the clip's label set.
    Evaluated through the closed form ``log(prod(1 + e^s) - 1)``; cost is
    linear in the number of labels.
    """
    if len(label_logits) == 0:
        raise ValidationError("label set must not be empty")
    total = 0.0
    for v in label_logits:
        if not math.isfinite(v):
            raise ValidationError(f"logit is not finite: {v!r}")
        total += _softplus(float(v))
    if total == 0.0:
        # Every softplus underflowed (all logits < ~-745). The pair and
        # larger subset terms are then negligible relative to the singleton
        # terms, so a singleton log-sum-exp is exact at double precision.
        m = max(label_logits)
        return m + math.log(sum(math.exp(v - m) for v in label_logits))
    return total + _log1mexp(total)


def log_normalizer_enumerated(label_logits: Sequence[float]) -> float:
    """Reference normalizer: enumerate all 2^|L| - 1 subset sums and log-sum-exp them.

    Exponential-time cross-check for :func:`log_normalizer`; kept independent
    of the closed form on purpose.
    """
    if len(label_logits) == 0:
        raise ValidationError("label set must not be empty")
    s = np.asarray(label_logits, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValidationError("logits must be finite")
    sums = _subset_sums(s)[1:]  # drop the empty subset
    m = float(np.max(sums))
    return m + math.log(float(np.sum(np.exp(sums - m))))


@dataclass(frozen=True)
class SubsetScoreTable:
    """Every non-empty subset score for one actor.

    ``scores[m]`` (and ``log_scores[m]``) are indexed by the local subset
    mask ``m`` over the sorted label set: bit j of ``m`` stands for
    ``label_set[j]``. Index 0 is the empty set, which is excluded from
    scoring; its slots hold 0.0 and -inf. Arrays are read-only.
    """

    actor_id: int
    label_set: tuple[int, ...]
    confidence: float
    scores: np.ndarray
    log_scores: np.ndarray

    @property
    def subset_count(self) -> int:
        """Number of scored (non-empty) subsets."""
        return len(self.scores) - 1

    def subset(self, local_mask: int) -> ActionSubset:
        """The subset encoded by a local mask, as global class bits."""
        if not 0 <= local_mask < len(self.scores):
            raise ValidationError(f"local mask {local_mask} out of range")
        bits = 0
        for j, c in enumerate(self.label_set):
            if (local_mask >> j) & 1:
                bits |= 1 << c
        return ActionSubset(bits)

    def entries(self) -> Iterator[tuple[ActionSubset, float]]:
        """(subset, score) pairs for every non-empty subset, ascending by bit value."""
        masks = _global_masks(self.label_set)
        for m in range(1, len(self.scores)):
            yield ActionSubset(masks[m]), float(self.scores[m])

    def score_of(self, subset: ActionSubset) -> float:
        local = 0
        for j, c in enumerate(self.label_set):
            if c in subset:
                local |= 1 << j
        if self.subset(local) != subset:
            raise ValidationError(
                f"subset {subset.classes()} is not a subset of labels {self.label_set}"
            )
        return float(self.scores[local])


def score_actor_subsets(
    actor: ActorDetection,
    label_set: Iterable[int],
    cap: int = DEFAULT_POWER_SET_CAP,
) -> SubsetScoreTable:
    """Score every non-empty subset of ``label_set`` for one actor.

    Scores sum to the actor's detection confidence across all non-empty
    subsets; the empty set is excluded because every annotated actor
    performs at least one action.
    """
    classes = sorted_label_tuple(label_set)
    k = len(classes)
    if k == 0:
        raise ValidationError("label set must not be empty")
    if k > cap:
        raise PowerSetTooLargeError(f"power set too large: |L|={k} exceeds cap {cap}")
    d = actor.confidence
    if not math.isfinite(d) or not 0.0 <= d <= 1.0:
        raise ValidationError(
            f"actor {actor.actor_id}: confidence out of range: {d!r} not in [0, 1]"
        )
    if classes[-1] >= len(actor.logits):
        raise ValidationError(
            f"actor {actor.actor_id}: label {classes[-1]} out of range for "
            f"{len(actor.logits)} logits"
        )
    s = np.asarray([actor.logits[c] for c in classes], dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValidationError(f"actor {actor.actor_id}: logits must be finite")

    log_z = log_normalizer(s)
    log_p = _subset_sums(s) - log_z
    scores = np.exp(log_p) * d
    log_scores = log_p + (math.log(d) if d > 0.0 else -math.inf)
    scores[0] = 0.0
    log_scores[0] = -math.inf
    scores.flags.writeable = False
    log_scores.flags.writeable = False
    return SubsetScoreTable(
        actor_id=actor.actor_id,
        label_set=classes,
        confidence=d,
        scores=scores,
        log_scores=log_scores,
    )
