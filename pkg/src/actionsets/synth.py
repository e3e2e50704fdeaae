"""Synthetic weakly supervised benchmark with planted ground truth.

Stands in for a real video dataset so the whole pipeline (scoring,
assignment, losses, evaluation) can be exercised end to end in seconds.
Each clip gets one annotated frame with a few planted actors; every actor
draws a hidden multi-label action set, and its feature vector is the sum of
the corresponding class prototypes plus Gaussian noise. The clip's weak
label set is the union of the planted actor labels, so training sees only
clip-level supervision while evaluation keeps the per-actor truth.

Detector imperfections are simulated: observed boxes are jittered copies of
the planted boxes, confidences are noisy, and false-positive detections
(pure-noise features, no planted labels, low confidence) are mixed in.

The trainer is a per-actor linear logit model on the fixed features: no
representation learning, so any measured differences come from the
supervision signal alone. The schedule runs a MIML-only warmup, then
refreshes subset assignments and optimizes the combined loss. Methods:

* ``miml``       MIML loss only, for the whole run.
* ``proposed``   warmup, then coverage-constrained assignments + combined loss.
* ``no-lp``      warmup, then per-actor 0.5-thresholding for targets.
* ``supervised`` per-actor BCE against the planted labels (upper bound).

The weak training paths receive only the weak view of the data
(:class:`WeakClip` carries no truth fields); planted labels are consumed
exclusively by evaluation and the supervised upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    ActionSubset,
    ActorDetection,
    BoundingBox,
    GroundTruthRecord,
    PredictionRecord,
    TrainingDivergedError,
    ValidationError,
)
from .evaluation import mean_average_precision
from .losses import association_loss, combined_loss, sigmoid_probs
from .scoring import score_actor_subsets
from .solver import assign_without_lp, solve_assignment

METHODS = ("miml", "proposed", "no-lp", "supervised")


@dataclass(frozen=True)
class SyntheticConfig:
    """Benchmark generator knobs. Seeded runs are bit-reproducible."""

    class_count: int = 6
    clips: int = 128
    val_fraction: float = 0.3
    actors_min: int = 3
    actors_max: int = 6
    labels_min: int = 1
    labels_max: int = 2
    feature_dim: int = 16
    scene_pool: int = 3
    separation: float = 3.0
    context_strength: float = 0.8
    feature_noise: float = 1.0
    label_noise: float = 0.05
    box_jitter: float = 0.03
    confidence_noise: float = 0.12
    false_positive_rate: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("val_fraction", "label_noise", "false_positive_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if self.class_count < 1 or self.clips < 1:
            raise ValidationError(
                f"degenerate config: clips={self.clips}, class_count={self.class_count}"
            )
        if self.feature_dim < 1:
            raise ValidationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if not 1 <= self.actors_min <= self.actors_max:
            raise ValidationError("actor count range must satisfy 1 <= min <= max")
        if not 1 <= self.labels_min <= self.labels_max <= self.class_count:
            raise ValidationError("label count range must satisfy 1 <= min <= max <= classes")
        if not self.labels_max <= self.scene_pool <= self.class_count:
            raise ValidationError(
                "scene_pool must satisfy labels_max <= scene_pool <= class_count"
            )
        if self.box_jitter < 0 or self.confidence_noise < 0 or self.feature_noise < 0:
            raise ValidationError("noise scales must be non-negative")
        if self.context_strength < 0:
            raise ValidationError("context_strength must be non-negative")


@dataclass(frozen=True)
class WeakActor:
    """One detection as training sees it: geometry, confidence, features."""

    actor_id: int
    frame_id: int
    box: BoundingBox
    confidence: float
    features: tuple[float, ...]


@dataclass(frozen=True)
class WeakClip:
    """The weak view of a clip: label set and detections, no per-actor truth."""

    clip_id: str
    class_count: int
    labels: frozenset[int]
    frame_id: int
    actors: tuple[WeakActor, ...]


@dataclass(frozen=True)
class PlantedActor:
    """Hidden ground truth for one planted actor (false positives are absent)."""

    actor_id: int
    frame_id: int
    labels: frozenset[int]
    box: BoundingBox


@dataclass(frozen=True)
class SyntheticDataset:
    config: SyntheticConfig
    prototypes: np.ndarray  # per-actor evidence directions, class_count x feature_dim
    context_prototypes: np.ndarray  # scene evidence directions, class_count x feature_dim
    train: tuple[WeakClip, ...]
    val: tuple[WeakClip, ...]
    truth: Mapping[str, tuple[PlantedActor, ...]]


def _planted_box(rng: np.random.Generator) -> BoundingBox:
    w = float(rng.uniform(0.12, 0.3))
    h = float(rng.uniform(0.12, 0.3))
    cx = float(rng.uniform(0.16, 0.84))
    cy = float(rng.uniform(0.16, 0.84))
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def _jittered_box(box: BoundingBox, sigma: float, rng: np.random.Generator) -> BoundingBox:
    if sigma == 0.0:
        return box
    x1, y1, x2, y2 = box.as_tuple() + rng.normal(0.0, sigma, size=4)
    x1 = min(max(x1, 0.0), 0.98)
    y1 = min(max(y1, 0.0), 0.98)
    x2 = min(max(x2, x1 + 0.01), 1.0)
    y2 = min(max(y2, y1 + 0.01), 1.0)
    return BoundingBox(x1, y1, x2, y2)


def generate_dataset(config: SyntheticConfig) -> SyntheticDataset:
    """Sample clips with planted per-actor labels and weak clip-level labels.

    Every actor's features mix three parts: the prototypes of its own
    labels (actor evidence), the context prototypes of all actions performed
    anywhere in the clip (scene evidence, shared by every detection in the
    frame, false positives included), and Gaussian noise. The context part
    is what makes bag-level supervision genuinely weak: it predicts the clip
    labels without identifying who performs what.

    The weak label set of every clip equals the union of its planted actors'
    label sets by construction; label noise corrupts a planted actor's label
    set after its features are drawn, so annotations and feature evidence
    can disagree but the union property always holds.
    """
    rng = np.random.default_rng(config.seed)
    c, f = config.class_count, config.feature_dim
    prototypes = rng.normal(0.0, 1.0, size=(c, f))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)
    prototypes *= config.separation
    prototypes.flags.writeable = False
    context_prototypes = rng.normal(0.0, 1.0, size=(c, f))
    context_prototypes /= np.linalg.norm(context_prototypes, axis=1, keepdims=True)
    context_prototypes *= config.context_strength
    context_prototypes.flags.writeable = False

    clips: list[WeakClip] = []
    truth: dict[str, tuple[PlantedActor, ...]] = {}
    frame_counter = 0
    for clip_index in range(config.clips):
        clip_id = f"clip{clip_index:04d}"
        frame_id = frame_counter
        frame_counter += 1
        n_true = int(rng.integers(config.actors_min, config.actors_max + 1))
        # Actors in one clip draw from a shared action pool, so several
        # actors often perform the same action, as in real scenes.
        pool = rng.choice(c, size=config.scene_pool, replace=False)
        performed = [
            set(
                rng.choice(
                    pool, size=int(rng.integers(config.labels_min, config.labels_max + 1)),
                    replace=False,
                ).tolist()
            )
            for _ in range(n_true)
        ]
        scene = sorted(set().union(*performed))
        context = context_prototypes[scene].sum(axis=0)
        planted: list[PlantedActor] = []
        actors: list[WeakActor] = []
        for actor_id in range(n_true):
            labels = performed[actor_id]
            features = (
                prototypes[sorted(labels)].sum(axis=0)
                + context
                + rng.normal(0.0, config.feature_noise, size=f)
            )
            if rng.uniform() < config.label_noise and len(labels) < c:
                extra = [cl for cl in range(c) if cl not in labels]
                labels.add(int(extra[int(rng.integers(0, len(extra)))]))
            box = _planted_box(rng)
            confidence = float(
                np.clip(1.0 - abs(rng.normal(0.0, config.confidence_noise)), 0.05, 1.0)
            )
            planted.append(
                PlantedActor(
                    actor_id=actor_id,
                    frame_id=frame_id,
                    labels=frozenset(labels),
                    box=box,
                )
            )
            actors.append(
                WeakActor(
                    actor_id=actor_id,
                    frame_id=frame_id,
                    box=_jittered_box(box, config.box_jitter, rng),
                    confidence=confidence,
                    features=tuple(float(v) for v in features),
                )
            )
        n_fp = int(rng.binomial(n_true, config.false_positive_rate))
        for j in range(n_fp):
            actors.append(
                WeakActor(
                    actor_id=n_true + j,
                    frame_id=frame_id,
                    box=_planted_box(rng),
                    confidence=float(rng.uniform(0.05, 0.5)),
                    features=tuple(
                        float(v)
                        for v in context + rng.normal(0.0, config.feature_noise, size=f)
                    ),
                )
            )
        weak_labels = frozenset().union(*(p.labels for p in planted))
        clips.append(
            WeakClip(
                clip_id=clip_id,
                class_count=c,
                labels=weak_labels,
                frame_id=frame_id,
                actors=tuple(actors),
            )
        )
        truth[clip_id] = tuple(planted)

    n_val = max(1, int(round(config.clips * config.val_fraction)))
    n_val = min(n_val, config.clips - 1) if config.clips > 1 else config.clips
    return SyntheticDataset(
        config=config,
        prototypes=prototypes,
        context_prototypes=context_prototypes,
        train=tuple(clips[: config.clips - n_val]),
        val=tuple(clips[config.clips - n_val :]),
        truth=truth,
    )


@dataclass
class ToyModel:
    """Per-actor linear logit model: logits = features @ weights + bias."""

    weights: np.ndarray  # feature_dim x class_count
    bias: np.ndarray  # class_count

    @classmethod
    def zeros(cls, feature_dim: int, class_count: int) -> "ToyModel":
        return cls(
            weights=np.zeros((feature_dim, class_count)),
            bias=np.zeros(class_count),
        )

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.bias

    def copy(self) -> "ToyModel":
        return ToyModel(weights=self.weights.copy(), bias=self.bias.copy())


@dataclass(frozen=True)
class TrainSchedule:
    """Training schedule; warmup always runs with the MIML loss alone."""

    method: str = "proposed"
    epochs: int = 50
    warmup_epochs: int = 10
    alpha: float = 0.3
    learning_rate: float = 0.4
    momentum: float = 0.9
    lr_decay: float = 0.5
    lr_decay_every: int = 12
    assignment_refresh: int = 1  # epochs between assignment recomputes
    solver_cap: int = 14
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.epochs < 1 or self.warmup_epochs < 0:
            raise ValidationError("epochs must be >= 1 and warmup_epochs >= 0")
        if self.assignment_refresh < 1:
            raise ValidationError("assignment_refresh must be >= 1")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    miml: float
    association: float
    val_map: float


def _clip_features(clip: WeakClip) -> np.ndarray:
    return np.asarray([a.features for a in clip.actors], dtype=np.float64)


def _label_vector(clip: WeakClip) -> np.ndarray:
    y = np.zeros(clip.class_count)
    y[sorted(clip.labels)] = 1.0
    return y


def _compute_assignments(
    model: ToyModel,
    clips: Sequence[WeakClip],
    schedule: TrainSchedule,
) -> dict[str, Optional[list[ActionSubset]]]:
    """Current-model subset targets for every clip; None skips the clip's term."""
    out: dict[str, Optional[list[ActionSubset]]] = {}
    for clip in clips:
        if not clip.labels or not clip.actors:
            out[clip.clip_id] = None
            continue
        logits = model.logits(_clip_features(clip))
        labels = sorted(clip.labels)
        if schedule.method == "no-lp":
            out[clip.clip_id] = assign_without_lp(logits.tolist(), labels)
            continue
        tables = [
            score_actor_subsets(
                ActorDetection(
                    actor_id=actor.actor_id,
                    frame_id=actor.frame_id,
                    box=None,
                    confidence=actor.confidence,
                    logits=tuple(row),
                ),
                labels,
            )
            for actor, row in zip(clip.actors, logits.tolist())
        ]
        result = solve_assignment(tables, labels, cap=schedule.solver_cap)
        out[clip.clip_id] = [subset for _, subset in result.assignments]
    return out


def _supervised_targets(
    dataset: SyntheticDataset, clip: WeakClip
) -> list[ActionSubset]:
    by_id = {p.actor_id: p.labels for p in dataset.truth[clip.clip_id]}
    return [
        ActionSubset.from_classes(sorted(by_id.get(a.actor_id, frozenset())))
        for a in clip.actors
    ]


def predict_records(
    model: ToyModel, clips: Sequence[WeakClip]
) -> list[PredictionRecord]:
    """One prediction per detection and class, scored sigmoid(logit) * confidence."""
    records: list[PredictionRecord] = []
    for clip in clips:
        if not clip.actors:
            continue
        probs = sigmoid_probs(model.logits(_clip_features(clip)))
        for actor, row in zip(clip.actors, probs):
            for class_id in range(clip.class_count):
                records.append(
                    PredictionRecord(
                        frame_id=actor.frame_id,
                        box=actor.box,
                        class_id=class_id,
                        score=float(row[class_id]) * actor.confidence,
                    )
                )
    return records


def ground_truth_records(
    truth: Mapping[str, tuple[PlantedActor, ...]], clips: Sequence[WeakClip]
) -> list[GroundTruthRecord]:
    records: list[GroundTruthRecord] = []
    for clip in clips:
        for planted in truth.get(clip.clip_id, ()):
            for class_id in sorted(planted.labels):
                records.append(
                    GroundTruthRecord(
                        frame_id=planted.frame_id, box=planted.box, class_id=class_id
                    )
                )
    return records


def evaluate_model(
    model: ToyModel,
    dataset: SyntheticDataset,
    clips: Sequence[WeakClip],
    iou_threshold: float = 0.5,
) -> float:
    """Frame mAP of the model on the given clips against the planted truth."""
    preds = predict_records(model, clips)
    gts = ground_truth_records(dataset.truth, clips)
    report = mean_average_precision(
        preds, gts, dataset.config.class_count, iou_threshold
    )
    return report.mean_ap


def train(
    model: ToyModel,
    dataset: SyntheticDataset,
    schedule: TrainSchedule,
) -> tuple[ToyModel, tuple[EpochMetrics, ...]]:
    """Run the schedule; returns the trained model and the per-epoch trace.

    Weak methods consume only the weak clip view; the planted truth is read
    for validation mAP and, for the supervised method only, as the training
    targets. Raises :class:`TrainingDivergedError` on a non-finite loss.
    """
    model = model.copy()
    rng = np.random.default_rng(schedule.seed)
    clips = dataset.train
    vel_w = np.zeros_like(model.weights)
    vel_b = np.zeros_like(model.bias)
    assignments: dict[str, Optional[list[ActionSubset]]] = {}
    trace: list[EpochMetrics] = []

    for epoch in range(schedule.epochs):
        lr = schedule.learning_rate * schedule.lr_decay ** (
            epoch // schedule.lr_decay_every
        )
        assign_phase = (
            schedule.method in ("proposed", "no-lp") and epoch >= schedule.warmup_epochs
        )
        if assign_phase and (epoch - schedule.warmup_epochs) % schedule.assignment_refresh == 0:
            assignments = _compute_assignments(model, clips, schedule)

        order = rng.permutation(len(clips))
        loss_sum = miml_sum = assoc_sum = 0.0
        frames = 0
        for clip_idx in order:
            clip = clips[int(clip_idx)]
            if not clip.actors:
                continue
            features = _clip_features(clip)
            logits = model.logits(features)
            if not np.all(np.isfinite(logits)):
                raise TrainingDivergedError(
                    f"non-finite logits at epoch {epoch}, clip {clip.clip_id!r}"
                )
            probs = sigmoid_probs(logits)
            n, c = probs.shape
            if schedule.method == "supervised":
                targets = _supervised_targets(dataset, clip)
                loss = association_loss(targets, probs)
                target_matrix = np.zeros_like(probs)
                for i, subset in enumerate(targets):
                    for cl in subset.classes():
                        target_matrix[i, cl] = 1.0
                grad = (probs - target_matrix) / c
                miml_part, assoc_part = 0.0, loss
            else:
                assigned = assignments.get(clip.clip_id) if assign_phase else None
                breakdown = combined_loss(
                    _label_vector(clip), probs, assigned, alpha=schedule.alpha
                )
                loss = breakdown.combined
                grad = breakdown.gradient
                miml_part, assoc_part = breakdown.miml, breakdown.association
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, clip {clip.clip_id!r}: {loss}"
                )
            grad_w = features.T @ grad
            grad_b = grad.sum(axis=0)
            vel_w = schedule.momentum * vel_w - lr * grad_w
            vel_b = schedule.momentum * vel_b - lr * grad_b
            model.weights = model.weights + vel_w
            model.bias = model.bias + vel_b
            loss_sum += loss
            miml_sum += miml_part
            assoc_sum += assoc_part
            frames += 1
        if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))):
            raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}")
        denom = max(frames, 1)
        trace.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / denom,
                miml=miml_sum / denom,
                association=assoc_sum / denom,
                val_map=evaluate_model(model, dataset, dataset.val),
            )
        )
    return model, tuple(trace)


def ablate_without_lp(
    model: ToyModel, dataset: SyntheticDataset, schedule: TrainSchedule
) -> tuple[EpochMetrics, ...]:
    """The same schedule with thresholded targets instead of solved assignments."""
    _, trace = train(model, dataset, replace(schedule, method="no-lp"))
    return trace


DATASET_FORMAT = "synthbench/v1"


def dataset_to_obj(dataset: SyntheticDataset) -> dict:
    """Plain-JSON form of a dataset; floats survive a round trip exactly."""

    def clip_obj(clip: WeakClip) -> dict:
        return {
            "clip_id": clip.clip_id,
            "labels": sorted(clip.labels),
            "frame_id": clip.frame_id,
            "actors": [
                {
                    "actor_id": a.actor_id,
                    "box": list(a.box.as_tuple()),
                    "confidence": a.confidence,
                    "features": list(a.features),
                }
                for a in clip.actors
            ],
        }

    return {
        "format": DATASET_FORMAT,
        "config": {f.name: getattr(dataset.config, f.name) for f in fields(SyntheticConfig)},
        "prototypes": dataset.prototypes.tolist(),
        "context_prototypes": dataset.context_prototypes.tolist(),
        "train": [clip_obj(c) for c in dataset.train],
        "val": [clip_obj(c) for c in dataset.val],
        "truth": {
            clip_id: [
                {
                    "actor_id": p.actor_id,
                    "frame_id": p.frame_id,
                    "labels": sorted(p.labels),
                    "box": list(p.box.as_tuple()),
                }
                for p in planted
            ]
            for clip_id, planted in sorted(dataset.truth.items())
        },
    }


def dataset_from_obj(obj: dict) -> SyntheticDataset:
    """Inverse of :func:`dataset_to_obj`, with format validation."""
    if not isinstance(obj, dict) or obj.get("format") != DATASET_FORMAT:
        raise ValidationError(
            f"unsupported dataset format {obj.get('format')!r}, expected {DATASET_FORMAT!r}"
        )
    try:
        config = SyntheticConfig(**obj["config"])

        def conv_clip(c: dict) -> WeakClip:
            return WeakClip(
                clip_id=c["clip_id"],
                class_count=config.class_count,
                labels=frozenset(c["labels"]),
                frame_id=c["frame_id"],
                actors=tuple(
                    WeakActor(
                        actor_id=a["actor_id"],
                        frame_id=c["frame_id"],
                        box=BoundingBox(*a["box"]),
                        confidence=a["confidence"],
                        features=tuple(a["features"]),
                    )
                    for a in c["actors"]
                ),
            )

        prototypes = np.asarray(obj["prototypes"], dtype=np.float64)
        context = np.asarray(obj["context_prototypes"], dtype=np.float64)
        prototypes.flags.writeable = False
        context.flags.writeable = False
        truth = {
            clip_id: tuple(
                PlantedActor(
                    actor_id=p["actor_id"],
                    frame_id=p["frame_id"],
                    labels=frozenset(p["labels"]),
                    box=BoundingBox(*p["box"]),
                )
                for p in planted
            )
            for clip_id, planted in obj["truth"].items()
        }
        return SyntheticDataset(
            config=config,
            prototypes=prototypes,
            context_prototypes=context,
            train=tuple(conv_clip(c) for c in obj["train"]),
            val=tuple(conv_clip(c) for c in obj["val"]),
            truth=truth,
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed dataset document: {exc!r}") from exc
