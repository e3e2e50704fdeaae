"""Versioned on-disk formats: the clip file and AVA-style detection CSVs.

Clip files are canonical JSON (fixed key order, two-space indent, trailing
newline) so fixtures diff cleanly in review and identical inputs serialize
byte-identically. CSVs exist for evaluator interop and carry normalized
coordinates in [0, 1], one row per (box, class) pair::

    video_id,frame,x1,y1,x2,y2,class_id,score      predictions
    video_id,frame,x1,y1,x2,y2,class_id            ground truth
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from .core import (
    ActorDetection,
    BoundingBox,
    Clip,
    ClipAnnotation,
    Frame,
    ValidationError,
    validate_clip,
)

CLIP_FORMAT = "clipfile/v1"
VALID_UNITS = ("normalized", "pixel")

_TOP_KEYS = {"format", "units", "class_count", "class_names", "clips"}
_CLIP_KEYS = {"clip_id", "labels", "frames"}
_FRAME_KEYS = {"frame_id", "actors"}
_ACTOR_KEYS = {"actor_id", "box", "confidence", "logits"}


@dataclass(frozen=True)
class ClipFile:
    """A parsed clip document: the class table plus validated clips."""

    class_count: int
    class_names: Optional[tuple[str, ...]]
    units: str
    clips: tuple[Clip, ...]

    def name_of(self, class_id: int) -> str:
        if self.class_names is not None:
            return self.class_names[class_id]
        return f"class_{class_id}"


def _check_keys(obj: dict, allowed: set[str], path: str, strict: bool) -> None:
    unknown = sorted(set(obj.keys()) - allowed)
    if not unknown:
        return
    message = f"{path}: unknown field(s) {unknown}"
    if strict:
        raise ValidationError(message)
    warnings.warn(message, stacklevel=3)


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise ValidationError(f"{path}: missing required field {key!r}")
    return obj[key]


def _parse_box(value: Any, path: str) -> Optional[BoundingBox]:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValidationError(f"{path}: box must be [x1, y1, x2, y2] or null")
    try:
        return BoundingBox(*(float(v) for v in value))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def _parse_actor(obj: Any, frame_id: int, path: str, strict: bool) -> ActorDetection:
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: actor must be an object")
    _check_keys(obj, _ACTOR_KEYS, path, strict)
    actor_id = _require(obj, "actor_id", path)
    if not isinstance(actor_id, int) or isinstance(actor_id, bool):
        raise ValidationError(f"{path}: actor_id must be an integer")
    logits = _require(obj, "logits", path)
    if not isinstance(logits, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in logits
    ):
        raise ValidationError(f"{path}: logits must be a list of numbers")
    confidence = _require(obj, "confidence", path)
    if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
        raise ValidationError(f"{path}: confidence must be a number")
    return ActorDetection(
        actor_id=actor_id,
        frame_id=frame_id,
        box=_parse_box(obj.get("box"), f"{path}.box"),
        confidence=float(confidence),
        logits=tuple(float(v) for v in logits),
    )


def parse_clip_file(data: bytes | str, strict: bool = True) -> ClipFile:
    """Parse and validate a clip document; errors carry field-precise paths."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"not valid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ValidationError("top level must be an object")
    _check_keys(doc, _TOP_KEYS, "document", strict)
    if doc.get("format") != CLIP_FORMAT:
        raise ValidationError(
            f"document: unsupported format {doc.get('format')!r}, expected {CLIP_FORMAT!r}"
        )
    units = doc.get("units", "normalized")
    if units not in VALID_UNITS:
        raise ValidationError(f"document: units must be one of {VALID_UNITS}, got {units!r}")
    class_count = _require(doc, "class_count", "document")
    if not isinstance(class_count, int) or isinstance(class_count, bool) or class_count < 1:
        raise ValidationError("document: class_count must be a positive integer")
    names_raw = doc.get("class_names")
    class_names: Optional[tuple[str, ...]] = None
    if names_raw is not None:
        if not isinstance(names_raw, list) or not all(isinstance(n, str) for n in names_raw):
            raise ValidationError("document: class_names must be a list of strings")
        if len(names_raw) != class_count:
            raise ValidationError(
                f"document: class_names has {len(names_raw)} entries, class_count is {class_count}"
            )
        class_names = tuple(names_raw)

    clips_raw = _require(doc, "clips", "document")
    if not isinstance(clips_raw, list):
        raise ValidationError("document: clips must be a list")
    clips: list[Clip] = []
    seen_clip_ids: set[str] = set()
    for ci, clip_obj in enumerate(clips_raw):
        cpath = f"clips[{ci}]"
        if not isinstance(clip_obj, dict):
            raise ValidationError(f"{cpath}: clip must be an object")
        _check_keys(clip_obj, _CLIP_KEYS, cpath, strict)
        clip_id = _require(clip_obj, "clip_id", cpath)
        if not isinstance(clip_id, str) or not clip_id:
            raise ValidationError(f"{cpath}: clip_id must be a non-empty string")
        if clip_id in seen_clip_ids:
            raise ValidationError(f"{cpath}: duplicate clip_id {clip_id!r}")
        seen_clip_ids.add(clip_id)
        labels_raw = _require(clip_obj, "labels", cpath)
        if not isinstance(labels_raw, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in labels_raw
        ):
            raise ValidationError(f"{cpath}.labels: must be a list of integers")
        if len(set(labels_raw)) != len(labels_raw):
            raise ValidationError(f"{cpath}.labels: duplicate label indices")
        annotation = ClipAnnotation(
            clip_id=clip_id, labels=frozenset(labels_raw), class_count=class_count
        )
        frames_raw = _require(clip_obj, "frames", cpath)
        if not isinstance(frames_raw, list):
            raise ValidationError(f"{cpath}.frames: must be a list")
        frames: list[Frame] = []
        seen_frames: set[int] = set()
        for fi, frame_obj in enumerate(frames_raw):
            fpath = f"{cpath}.frames[{fi}]"
            if not isinstance(frame_obj, dict):
                raise ValidationError(f"{fpath}: frame must be an object")
            _check_keys(frame_obj, _FRAME_KEYS, fpath, strict)
            frame_id = _require(frame_obj, "frame_id", fpath)
            if not isinstance(frame_id, int) or isinstance(frame_id, bool):
                raise ValidationError(f"{fpath}: frame_id must be an integer")
            if frame_id in seen_frames:
                raise ValidationError(f"{fpath}: duplicate frame_id {frame_id}")
            seen_frames.add(frame_id)
            actors_raw = _require(frame_obj, "actors", fpath)
            if not isinstance(actors_raw, list):
                raise ValidationError(f"{fpath}.actors: must be a list")
            actors = []
            seen_actors: set[int] = set()
            for ai, actor_obj in enumerate(actors_raw):
                apath = f"{fpath}.actors[{ai}]"
                actor = _parse_actor(actor_obj, frame_id, apath, strict)
                if actor.actor_id in seen_actors:
                    raise ValidationError(
                        f"{apath}: duplicate actor_id {actor.actor_id} within frame {frame_id}"
                    )
                seen_actors.add(actor.actor_id)
                actors.append(actor)
            try:
                validate_clip(actors, annotation)
            except ValidationError as exc:
                raise ValidationError(f"{fpath}: {exc}") from exc
            frames.append(Frame(frame_id=frame_id, actors=tuple(actors)))
        clips.append(Clip(annotation=annotation, frames=tuple(frames)))
    return ClipFile(
        class_count=class_count, class_names=class_names, units=units, clips=tuple(clips)
    )


def serialize_clip_file(doc: ClipFile) -> str:
    """Canonical text form; parse(serialize(x)) == x field by field."""
    obj: dict[str, Any] = {"format": CLIP_FORMAT, "units": doc.units, "class_count": doc.class_count}
    if doc.class_names is not None:
        obj["class_names"] = list(doc.class_names)
    obj["clips"] = [
        {
            "clip_id": clip.clip_id,
            "labels": sorted(clip.annotation.labels),
            "frames": [
                {
                    "frame_id": frame.frame_id,
                    "actors": [
                        {
                            "actor_id": a.actor_id,
                            "box": list(a.box.as_tuple()) if a.box is not None else None,
                            "confidence": a.confidence,
                            "logits": list(a.logits),
                        }
                        for a in frame.actors
                    ],
                }
                for frame in clip.frames
            ],
        }
        for clip in doc.clips
    ]
    return json.dumps(obj, indent=2) + "\n"


@dataclass(frozen=True)
class DetectionCsvRow:
    """One CSV row: a single box/class pair in normalized coordinates."""

    video_id: str
    frame: int
    box: BoundingBox
    class_id: int
    score: Optional[float] = None


def _parse_csv_rows(text: str, with_score: bool) -> list[DetectionCsvRow]:
    expected = 8 if with_score else 7
    rows: list[DetectionCsvRow] = []
    reader = csv.reader(io.StringIO(text))
    for line_no, raw in enumerate(reader, start=1):
        if not raw or (len(raw) == 1 and not raw[0].strip()):
            continue
        if len(raw) != expected:
            raise ValidationError(
                f"csv line {line_no}: expected {expected} columns, got {len(raw)}"
            )
        try:
            video_id = raw[0].strip()
            frame = int(raw[1])
            coords = [float(v) for v in raw[2:6]]
            class_id = int(raw[6])
            score = float(raw[7]) if with_score else None
        except ValueError as exc:
            raise ValidationError(f"csv line {line_no}: {exc}") from exc
        if not video_id:
            raise ValidationError(f"csv line {line_no}: empty video_id")
        for v in coords:
            if not math.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ValidationError(
                    f"csv line {line_no}: coordinate {v!r} outside normalized range [0, 1]"
                )
        if class_id < 0:
            raise ValidationError(f"csv line {line_no}: negative class_id {class_id}")
        if score is not None and (not math.isfinite(score) or not 0.0 <= score <= 1.0):
            raise ValidationError(f"csv line {line_no}: score {score!r} outside [0, 1]")
        try:
            box = BoundingBox(*coords)
        except ValidationError as exc:
            raise ValidationError(f"csv line {line_no}: {exc}") from exc
        rows.append(
            DetectionCsvRow(video_id=video_id, frame=frame, box=box, class_id=class_id, score=score)
        )
    return rows


def read_prediction_csv(text: str) -> list[DetectionCsvRow]:
    """Rows of video_id,frame,x1,y1,x2,y2,class_id,score."""
    return _parse_csv_rows(text, with_score=True)


def read_ground_truth_csv(text: str) -> list[DetectionCsvRow]:
    """Rows of video_id,frame,x1,y1,x2,y2,class_id."""
    return _parse_csv_rows(text, with_score=False)


def write_detection_csv(rows: Iterable[DetectionCsvRow]) -> str:
    """Serialize rows with full float round-trip precision."""
    out = io.StringIO()
    for row in rows:
        cells = [
            row.video_id,
            str(row.frame),
            repr(row.box.x1),
            repr(row.box.y1),
            repr(row.box.x2),
            repr(row.box.y2),
            str(row.class_id),
        ]
        if row.score is not None:
            cells.append(repr(row.score))
        out.write(",".join(cells) + "\n")
    return out.getvalue()
