"""Shared domain types for actor-action association.

Action classes are plain integer indices into a user-supplied name table;
class names exist only at the I/O boundary. Every type in this module is
immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence


class ActionSetsError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ActionSetsError):
    """Input data violates a documented invariant."""


class PowerSetTooLargeError(ActionSetsError):
    """A label set exceeds the configured power-set or solver cap."""


class InfeasibleError(ActionSetsError):
    """No assignment can satisfy the label-coverage constraint."""


class TrainingDivergedError(ActionSetsError):
    """A training run produced a non-finite loss."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; both corners live in the same (pixel or normalized) space."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not isinstance(v, float):
                object.__setattr__(self, name, float(v))
        if not all(math.isfinite(v) for v in (self.x1, self.y1, self.x2, self.y2)):
            raise ValidationError(f"box coordinates must be finite, got {self!r}")
        if not self.x2 > self.x1:
            raise ValidationError(f"box requires x2 > x1, got x1={self.x1} x2={self.x2}")
        if not self.y2 > self.y1:
            raise ValidationError(f"box requires y2 > y1, got y1={self.y1} y2={self.y2}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class ActionSubset:
    """A set of action class indices packed into an integer bit set.

    Bit ``c`` set means class ``c`` is in the subset. Instances compare and
    order by bit value, which is the canonical tie-breaking order everywhere
    subsets are enumerated.
    """

    bits: int = 0

    def __post_init__(self) -> None:
        if self.bits < 0:
            raise ValidationError(f"subset bits must be non-negative, got {self.bits}")

    @classmethod
    def from_classes(cls, classes: Iterable[int]) -> "ActionSubset":
        bits = 0
        for c in classes:
            if c < 0:
                raise ValidationError(f"class index must be non-negative, got {c}")
            bits |= 1 << int(c)
        return cls(bits)

    def classes(self) -> tuple[int, ...]:
        """Class indices in ascending order."""
        out = []
        bits = self.bits
        c = 0
        while bits:
            if bits & 1:
                out.append(c)
            bits >>= 1
            c += 1
        return tuple(out)

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    @property
    def is_empty(self) -> bool:
        return self.bits == 0

    def __contains__(self, class_id: int) -> bool:
        return class_id >= 0 and (self.bits >> class_id) & 1 == 1

    def __iter__(self) -> Iterator[int]:
        return iter(self.classes())

    def issubset(self, other: "ActionSubset") -> bool:
        return self.bits & ~other.bits == 0

    def __lt__(self, other: "ActionSubset") -> bool:
        return self.bits < other.bits


@dataclass(frozen=True)
class ActorDetection:
    """One detected person in one frame.

    ``box`` is optional: the scoring and assignment steps never touch
    geometry, so association-only inputs may omit it. ``confidence`` is the
    detector score in [0, 1]; ``logits`` holds one raw per-class score per
    action class. Range and length invariants are checked by
    :func:`validate_clip`, not at construction, so that invalid records can
    be carried to the validator and reported with context.
    """

    actor_id: int
    frame_id: int
    box: Optional[BoundingBox]
    confidence: float
    logits: tuple[float, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.logits, tuple):
            object.__setattr__(self, "logits", tuple(float(v) for v in self.logits))
        object.__setattr__(self, "confidence", float(self.confidence))


@dataclass(frozen=True)
class ClipAnnotation:
    """Weak supervision for one clip: which actions occur, with no boxes or counts."""

    clip_id: str
    labels: frozenset[int]
    class_count: int

    def __post_init__(self) -> None:
        if not isinstance(self.labels, frozenset):
            object.__setattr__(self, "labels", frozenset(int(c) for c in self.labels))

    def sorted_labels(self) -> tuple[int, ...]:
        return tuple(sorted(self.labels))


@dataclass(frozen=True)
class Frame:
    """The detections of one annotated frame."""

    frame_id: int
    actors: tuple[ActorDetection, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.actors, tuple):
            object.__setattr__(self, "actors", tuple(self.actors))


@dataclass(frozen=True)
class Clip:
    """A weakly annotated clip: the annotation plus its detected frames."""

    annotation: ClipAnnotation
    frames: tuple[Frame, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.frames, tuple):
            object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def clip_id(self) -> str:
        return self.annotation.clip_id


@dataclass(frozen=True)
class AssignmentResult:
    """Chosen subset per actor plus the objective reached.

    When ``feasible`` is true there is exactly one non-empty subset per
    actor and every annotated label appears in the union of the assigned
    subsets. ``objective`` is meaningful only for feasible results.
    """

    assignments: tuple[tuple[int, ActionSubset], ...]
    objective: float
    feasible: bool

    def subset_for(self, actor_id: int) -> ActionSubset:
        for aid, subset in self.assignments:
            if aid == actor_id:
                return subset
        raise KeyError(f"no assignment for actor {actor_id}")


@dataclass(frozen=True)
class PredictionRecord:
    """One scored box/class prediction feeding the evaluator."""

    frame_id: int
    box: BoundingBox
    class_id: int
    score: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValidationError(f"class_id must be non-negative, got {self.class_id}")
        if not math.isfinite(self.score):
            raise ValidationError(f"prediction score must be finite, got {self.score}")


@dataclass(frozen=True)
class GroundTruthRecord:
    """One ground-truth box/class pair feeding the evaluator."""

    frame_id: int
    box: BoundingBox
    class_id: int

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValidationError(f"class_id must be non-negative, got {self.class_id}")


def validate_clip(
    actors: Sequence[ActorDetection], annotation: ClipAnnotation
) -> tuple[tuple[ActorDetection, ...], ClipAnnotation]:
    """Check every per-actor and per-annotation invariant; return the clip unchanged.

    Raises :class:`ValidationError` naming the offending actor and field.
    Idempotent and side-effect free.
    """
    c = annotation.class_count
    if c < 1:
        raise ValidationError(
            f"clip {annotation.clip_id!r}: class count must be positive, got {c}"
        )
    for label in annotation.labels:
        if not 0 <= label < c:
            raise ValidationError(
                f"clip {annotation.clip_id!r}: label index out of range: "
                f"{label} not in [0, {c})"
            )
    for actor in actors:
        where = f"clip {annotation.clip_id!r} actor {actor.actor_id}"
        if not math.isfinite(actor.confidence) or not 0.0 <= actor.confidence <= 1.0:
            raise ValidationError(
                f"{where}: confidence out of range: {actor.confidence!r} not in [0, 1]"
            )
        if len(actor.logits) != c:
            raise ValidationError(
                f"{where}: logits length {len(actor.logits)} != class count {c}"
            )
        for class_id, logit in enumerate(actor.logits):
            if not math.isfinite(logit):
                raise ValidationError(
                    f"{where}: logit for class {class_id} is not finite: {logit!r}"
                )
    return tuple(actors), annotation
