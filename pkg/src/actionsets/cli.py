"""Batch command-line interface.

Commands: ``assign`` (solve per-frame subset assignments), ``score`` (dump
subset score tables), ``eval`` (mAP over detection CSVs), ``synth``
(generate a benchmark dataset), ``train`` (run a training schedule), and
``losses`` (loss values and gradients for one frame, JSON in/out).

Outputs are canonical JSON (or CSV where requested) and depend only on the
input bytes and flags, so identical invocations produce identical bytes.
Every failure prints a single machine-parsable line ``error[<kind>]: ...``
to stderr. Exit codes: 0 ok, 1 usage, 2 data error, 3 infeasible.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .clipfile import (
    ClipFile,
    parse_clip_file,
    read_ground_truth_csv,
    read_prediction_csv,
)
from .core import (
    ActionSetsError,
    ActionSubset,
    Clip,
    Frame,
    GroundTruthRecord,
    InfeasibleError,
    PowerSetTooLargeError,
    PredictionRecord,
    ValidationError,
)
from .evaluation import mean_average_precision
from .losses import combined_loss, sigmoid_probs
from .scoring import DEFAULT_POWER_SET_CAP, score_actor_subsets
from .solver import DEFAULT_SOLVER_CAP, assign_without_lp, solve_assignment
from .synth import (
    SyntheticConfig,
    ToyModel,
    TrainSchedule,
    dataset_from_obj,
    dataset_to_obj,
    generate_dataset,
    train as run_training,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 on usage problems, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error[usage]: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(f"error[{kind}]: {message}\n")
    return code


def _warn(message: str) -> None:
    sys.stderr.write(f"warning: {message}\n")


def _json_safe(value: Any) -> Any:
    """Replace non-finite floats with None so output stays strict JSON."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _emit(text: str, output: Optional[str]) -> None:
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_json(obj: Any, output: Optional[str]) -> None:
    _emit(json.dumps(_json_safe(obj), indent=2) + "\n", output)


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc


# ---------------------------------------------------------------------------
# assign / score


def _frame_assignment(
    doc: ClipFile,
    clip: Clip,
    frame: Frame,
    use_lp: bool,
    powerset_cap: int,
    solver_cap: int,
) -> dict:
    labels = clip.annotation.sorted_labels()
    actors = sorted(frame.actors, key=lambda a: a.actor_id)
    base = {"clip_id": clip.clip_id, "frame_id": frame.frame_id}

    def actor_entry(actor_id: int, classes: Sequence[int]) -> dict:
        entry: dict[str, Any] = {"actor_id": actor_id, "classes": list(classes)}
        if doc.class_names is not None:
            entry["class_names"] = [doc.class_names[c] for c in classes]
        return entry

    if not use_lp:
        subsets = assign_without_lp([a.logits for a in actors], labels)
        return {
            **base,
            "method": "threshold",
            "feasible": True,
            "objective": None,
            "assignments": [
                actor_entry(a.actor_id, s.classes()) for a, s in zip(actors, subsets)
            ],
        }
    if not labels:
        return {**base, "method": "lp", "feasible": True, "objective": 0.0, "assignments": []}
    if not actors:
        raise InfeasibleError(
            f"clip {clip.clip_id!r} frame {frame.frame_id}: no actor to cover labels"
        )
    tables = [score_actor_subsets(a, labels, cap=powerset_cap) for a in actors]
    result = solve_assignment(tables, labels, cap=solver_cap)
    if not result.feasible:  # pragma: no cover - unreachable with actors present
        raise InfeasibleError(f"clip {clip.clip_id!r} frame {frame.frame_id}: infeasible")
    return {
        **base,
        "method": "lp",
        "feasible": True,
        "objective": result.objective,
        "assignments": [
            actor_entry(actor_id, subset.classes()) for actor_id, subset in result.assignments
        ],
    }


def _cmd_assign(args: argparse.Namespace) -> int:
    doc = parse_clip_file(_read_text(args.input), strict=not args.lenient)
    jobs = [(clip, frame) for clip in doc.clips for frame in clip.frames]

    def solve_one(job: tuple[Clip, Frame]) -> dict:
        clip, frame = job
        try:
            return _frame_assignment(
                doc, clip, frame, not args.no_lp, args.powerset_cap, args.solver_cap
            )
        except InfeasibleError as exc:
            if args.skip_infeasible:
                _warn(f"skipping infeasible frame: {exc}")
                return {
                    "clip_id": clip.clip_id,
                    "frame_id": frame.frame_id,
                    "method": "lp",
                    "feasible": False,
                    "objective": None,
                    "assignments": [],
                    "skipped": True,
                }
            raise

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(solve_one, jobs))
    else:
        results = [solve_one(job) for job in jobs]

    if args.report == "json":
        _emit_json({"format": "assign-report/v1", "results": results}, args.output)
    else:
        lines = ["clip_id,frame_id,actor_id,classes,feasible,objective"]
        for res in results:
            objective = "" if res["objective"] is None else repr(res["objective"])
            if res["assignments"]:
                for entry in res["assignments"]:
                    classes = "|".join(str(c) for c in entry["classes"])
                    lines.append(
                        f"{res['clip_id']},{res['frame_id']},{entry['actor_id']},"
                        f"{classes},{res['feasible']},{objective}"
                    )
            else:
                lines.append(
                    f"{res['clip_id']},{res['frame_id']},,,{res['feasible']},{objective}"
                )
        _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    doc = parse_clip_file(_read_text(args.input), strict=not args.lenient)
    if args.clip is None:
        if len(doc.clips) != 1:
            raise ValidationError(
                f"input holds {len(doc.clips)} clips; choose one with --clip"
            )
        clip = doc.clips[0]
    else:
        matches = [c for c in doc.clips if c.clip_id == args.clip]
        if not matches:
            raise ValidationError(f"no clip with id {args.clip!r}")
        clip = matches[0]
    labels = clip.annotation.sorted_labels()
    if not labels:
        raise ValidationError(f"clip {clip.clip_id!r} has an empty label set")
    frames_out = []
    for frame in clip.frames:
        actors_out = []
        for actor in sorted(frame.actors, key=lambda a: a.actor_id):
            table = score_actor_subsets(actor, labels, cap=args.powerset_cap)
            actors_out.append(
                {
                    "actor_id": actor.actor_id,
                    "confidence": actor.confidence,
                    "subsets": [
                        {
                            "classes": list(subset.classes()),
                            "score": score,
                            "log_score": float(table.log_scores[mask]),
                        }
                        for mask, (subset, score) in enumerate(table.entries(), start=1)
                    ],
                }
            )
        frames_out.append({"frame_id": frame.frame_id, "actors": actors_out})
    _emit_json(
        {
            "format": "score-tables/v1",
            "clip_id": clip.clip_id,
            "labels": list(labels),
            "frames": frames_out,
        },
        args.output,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _cmd_eval(args: argparse.Namespace) -> int:
    pred_rows = read_prediction_csv(_read_text(args.predictions))
    gt_rows = read_ground_truth_csv(_read_text(args.ground_truth))
    if args.classes is not None:
        class_count = args.classes
    else:
        if not gt_rows:
            raise ValidationError("empty ground truth: no rows")
        class_count = max(r.class_id for r in gt_rows) + 1
    frame_keys = sorted(
        {(r.video_id, r.frame) for r in pred_rows} | {(r.video_id, r.frame) for r in gt_rows}
    )
    frame_index = {key: i for i, key in enumerate(frame_keys)}
    for row in pred_rows:
        if row.class_id >= class_count:
            raise ValidationError(
                f"prediction class {row.class_id} outside the ground-truth class table "
                f"(0..{class_count - 1}); pass --classes to widen it"
            )
    preds = [
        PredictionRecord(
            frame_id=frame_index[(r.video_id, r.frame)],
            box=r.box,
            class_id=r.class_id,
            score=r.score if r.score is not None else 0.0,
        )
        for r in pred_rows
    ]
    gts = [
        GroundTruthRecord(
            frame_id=frame_index[(r.video_id, r.frame)], box=r.box, class_id=r.class_id
        )
        for r in gt_rows
    ]
    report = mean_average_precision(preds, gts, class_count, args.iou)
    if args.json:
        _emit_json(
            {
                "format": "eval-report/v1",
                "iou_threshold": report.iou_threshold,
                "class_count": class_count,
                "per_class": [
                    {
                        "class_id": c,
                        "gt_count": report.gt_counts[c],
                        "ap": report.ap[c],
                    }
                    for c in range(class_count)
                ],
                "map": report.mean_ap,
            },
            args.output,
        )
    else:
        lines = [f"{'class':>8} {'gt':>6} {'AP':>10}"]
        for c in range(class_count):
            ap = report.ap[c]
            ap_text = f"{ap:.6f}" if not math.isnan(ap) else "-"
            lines.append(f"{c:>8} {report.gt_counts[c]:>6} {ap_text:>10}")
        lines.append(f"mAP@{report.iou_threshold:g} = {report.mean_ap:.6f}")
        _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth / train


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SyntheticConfig(
        class_count=args.classes,
        clips=args.clips,
        val_fraction=args.val_fraction,
        actors_min=args.actors_min,
        actors_max=args.actors_max,
        labels_min=args.labels_min,
        labels_max=args.labels_max,
        feature_dim=args.feature_dim,
        scene_pool=args.scene_pool,
        separation=args.separation,
        context_strength=args.context,
        feature_noise=args.feature_noise,
        label_noise=args.label_noise,
        box_jitter=args.box_jitter,
        confidence_noise=args.confidence_noise,
        false_positive_rate=args.fp_rate,
        seed=args.seed,
    )
    _emit_json(dataset_to_obj(generate_dataset(config)), args.output)
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    try:
        obj = json.loads(_read_text(args.dataset))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"dataset is not valid JSON: {exc.msg}") from exc
    dataset = dataset_from_obj(obj)
    schedule = TrainSchedule(
        method=args.method,
        epochs=args.epochs,
        warmup_epochs=args.warmup,
        alpha=args.alpha,
        learning_rate=args.lr,
        momentum=args.momentum,
        lr_decay=args.lr_decay,
        lr_decay_every=args.lr_decay_every,
        assignment_refresh=args.refresh,
        solver_cap=args.solver_cap,
        seed=args.seed,
    )
    model = ToyModel.zeros(dataset.config.feature_dim, dataset.config.class_count)
    _, trace = run_training(model, dataset, schedule)
    _emit_json(
        {
            "format": "train-trace/v1",
            "method": schedule.method,
            "schedule": {f.name: getattr(schedule, f.name) for f in fields(TrainSchedule)},
            "epochs": [
                {
                    "epoch": t.epoch,
                    "train_loss": t.train_loss,
                    "miml": t.miml,
                    "association": t.association,
                    "val_map": t.val_map,
                }
                for t in trace
            ],
            "final_val_map": trace[-1].val_map,
        },
        args.output,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# losses


def _cmd_losses(args: argparse.Namespace) -> int:
    try:
        obj = json.loads(_read_text(args.input) if args.input != "-" else sys.stdin.read())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"input is not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ValidationError("loss input must be a JSON object")
    for key in ("y", "logits"):
        if key not in obj:
            raise ValidationError(f"loss input: missing required field {key!r}")
    logits = np.asarray(obj["logits"], dtype=np.float64)
    if logits.ndim != 2:
        raise ValidationError("loss input: logits must be a 2d array")
    assignments_raw = obj.get("assignments")
    assignments = None
    if assignments_raw is not None:
        if not isinstance(assignments_raw, list) or len(assignments_raw) != logits.shape[0]:
            raise ValidationError(
                "loss input: assignments must list one class array per actor"
            )
        assignments = [ActionSubset.from_classes(classes) for classes in assignments_raw]
    alpha = float(obj.get("alpha", 0.3))
    breakdown = combined_loss(obj["y"], sigmoid_probs(logits), assignments, alpha)
    _emit_json(
        {
            "format": "loss-report/v1",
            "miml": breakdown.miml,
            "association": breakdown.association,
            "combined": breakdown.combined,
            "alpha": breakdown.alpha,
            "gradient": [list(row) for row in breakdown.gradient.tolist()],
        },
        args.output,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--output", default=None, help="output path (default: stdout)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="actionsets", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assign", help="solve per-frame subset assignments for a clip file")
    p.add_argument("input", help="clip file (clipfile/v1 JSON)")
    p.add_argument("--no-lp", action="store_true", help="threshold baseline instead of the exact solver")
    p.add_argument("--skip-infeasible", action="store_true", help="warn and continue on infeasible frames")
    p.add_argument("--report", choices=("json", "csv"), default="json")
    p.add_argument("--powerset-cap", type=int, default=DEFAULT_POWER_SET_CAP)
    p.add_argument("--solver-cap", type=int, default=DEFAULT_SOLVER_CAP)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--lenient", action="store_true", help="warn instead of failing on unknown fields")
    _add_common_output(p)
    p.set_defaults(func=_cmd_assign)

    p = sub.add_parser("score", help="dump per-actor subset score tables for one clip")
    p.add_argument("input")
    p.add_argument("--clip", default=None, help="clip id (required when the file has several)")
    p.add_argument("--powerset-cap", type=int, default=DEFAULT_POWER_SET_CAP)
    p.add_argument("--lenient", action="store_true")
    _add_common_output(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="frame mAP of a prediction CSV against a ground-truth CSV")
    p.add_argument("predictions")
    p.add_argument("ground_truth")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--classes", type=int, default=None, help="class count (default: from ground truth)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    _add_common_output(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=SyntheticConfig.class_count)
    p.add_argument("--clips", type=int, default=SyntheticConfig.clips)
    p.add_argument("--val-fraction", type=float, default=SyntheticConfig.val_fraction)
    p.add_argument("--actors-min", type=int, default=SyntheticConfig.actors_min)
    p.add_argument("--actors-max", type=int, default=SyntheticConfig.actors_max)
    p.add_argument("--labels-min", type=int, default=SyntheticConfig.labels_min)
    p.add_argument("--labels-max", type=int, default=SyntheticConfig.labels_max)
    p.add_argument("--feature-dim", type=int, default=SyntheticConfig.feature_dim)
    p.add_argument("--scene-pool", type=int, default=SyntheticConfig.scene_pool)
    p.add_argument("--separation", type=float, default=SyntheticConfig.separation)
    p.add_argument("--context", type=float, default=SyntheticConfig.context_strength)
    p.add_argument("--feature-noise", type=float, default=SyntheticConfig.feature_noise)
    p.add_argument("--label-noise", type=float, default=SyntheticConfig.label_noise)
    p.add_argument("--box-jitter", type=float, default=SyntheticConfig.box_jitter)
    p.add_argument("--confidence-noise", type=float, default=SyntheticConfig.confidence_noise)
    p.add_argument("--fp-rate", type=float, default=SyntheticConfig.false_positive_rate)
    _add_common_output(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the toy model on a synthetic dataset")
    p.add_argument("dataset", help="dataset JSON produced by `synth`")
    p.add_argument(
        "--method", choices=("miml", "proposed", "no-lp", "supervised"), default="proposed"
    )
    p.add_argument("--epochs", type=int, default=TrainSchedule.epochs)
    p.add_argument("--warmup", type=int, default=TrainSchedule.warmup_epochs)
    p.add_argument("--alpha", type=float, default=TrainSchedule.alpha)
    p.add_argument("--lr", type=float, default=TrainSchedule.learning_rate)
    p.add_argument("--momentum", type=float, default=TrainSchedule.momentum)
    p.add_argument("--lr-decay", type=float, default=TrainSchedule.lr_decay)
    p.add_argument("--lr-decay-every", type=int, default=TrainSchedule.lr_decay_every)
    p.add_argument("--refresh", type=int, default=TrainSchedule.assignment_refresh)
    p.add_argument("--solver-cap", type=int, default=TrainSchedule.solver_cap)
    p.add_argument("--seed", type=int, default=0)
    _add_common_output(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("losses", help="loss values and gradients for one frame (JSON in/out)")
    p.add_argument("input", help="JSON file with y, logits, assignments, alpha ('-' for stdin)")
    _add_common_output(p)
    p.set_defaults(func=_cmd_losses)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_OK
    try:
        return args.func(args)
    except InfeasibleError as exc:
        return _fail("infeasible", str(exc), EXIT_INFEASIBLE)
    except PowerSetTooLargeError as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except ValidationError as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except ActionSetsError as exc:
        return _fail("data", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
