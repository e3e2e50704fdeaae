/**
 * Bindings for the actionsets CLI.
 *
 * Every operation shells out to the installed command-line tool and
 * exchanges canonical JSON, so no numeric logic is duplicated on this side
 * and results are bit-identical to the CLI's: JSON carries IEEE doubles
 * through shortest-round-trip decimals in both directions.
 */

import { CliError, RunnerOptions, runCli, withTempFiles } from "./runner.js";

export { CliError, RunnerOptions } from "./runner.js";

export interface AssignmentResult {
  /** One class-index list per actor, in input order. */
  assignments: number[][];
  objective: number;
  feasible: boolean;
}

export interface ScoreTable {
  /** Non-empty subsets of the label set, ascending by bit value. */
  subsets: number[][];
  scores: number[];
  /** Natural logs of the scores; null where the score is exactly zero. */
  logScores: (number | null)[];
}

export interface LossBreakdown {
  miml: number;
  association: number;
  combined: number;
  alpha: number;
  /** d(combined)/d(logit), one row per actor. */
  gradient: number[][];
}

export interface PredictionEntry {
  frame: number;
  /** [x1, y1, x2, y2] in normalized [0, 1] coordinates. */
  box: [number, number, number, number];
  classId: number;
  score: number;
  videoId?: string;
}

export interface GroundTruthEntry {
  frame: number;
  box: [number, number, number, number];
  classId: number;
  videoId?: string;
}

export interface EvalReport {
  map: number;
  perClass: { classId: number; gtCount: number; ap: number | null }[];
}

function checkMatrix(logits: number[][], name = "logits"): number {
  if (logits.length === 0) return 0;
  const width = logits[0].length;
  for (const row of logits) {
    if (row.length !== width) {
      throw new CliError("data", `${name} rows must all have the same length`, -1);
    }
  }
  return width;
}

function clipDocument(
  logits: number[][],
  confidences: number[],
  labelSet: number[],
): string {
  if (confidences.length !== logits.length) {
    throw new CliError(
      "data",
      `expected ${logits.length} confidences, got ${confidences.length}`,
      -1,
    );
  }
  const classCount = Math.max(checkMatrix(logits), ...labelSet.map((c) => c + 1), 1);
  return JSON.stringify({
    format: "clipfile/v1",
    class_count: classCount,
    clips: [
      {
        clip_id: "bound",
        labels: [...labelSet].sort((a, b) => a - b),
        frames: [
          {
            frame_id: 0,
            actors: logits.map((row, i) => ({
              actor_id: i,
              box: null,
              confidence: confidences[i],
              logits: row,
            })),
          },
        ],
      },
    ],
  });
}

interface AssignReportEntry {
  feasible: boolean;
  objective: number | null;
  assignments: { actor_id: number; classes: number[] }[];
}

function runAssign(
  doc: string,
  extraArgs: string[],
  options?: RunnerOptions,
): AssignReportEntry {
  const stdout = withTempFiles({ "clip.json": doc }, (paths) =>
    runCli(["assign", paths["clip.json"], "--report", "json", ...extraArgs], options),
  );
  const report = JSON.parse(stdout) as { results: AssignReportEntry[] };
  return report.results[0];
}

/**
 * Optimal assignment of one non-empty action subset per actor such that
 * every label in the set is covered. Throws CliError(kind "infeasible")
 * when no actor is available to cover a non-empty label set.
 */
export function assign(
  logits: number[][],
  confidences: number[],
  labelSet: number[],
  options?: RunnerOptions,
): AssignmentResult {
  const result = runAssign(clipDocument(logits, confidences, labelSet), [], options);
  return {
    assignments: result.assignments.map((entry) => entry.classes),
    objective: result.objective ?? 0,
    feasible: result.feasible,
  };
}

/** The thresholding baseline: per actor, the labels with probability > 0.5. */
export function assignWithoutLp(
  logits: number[][],
  labelSet: number[],
  options?: RunnerOptions,
): number[][] {
  const confidences = logits.map(() => 1.0);
  const result = runAssign(
    clipDocument(logits, confidences, labelSet),
    ["--no-lp"],
    options,
  );
  return result.assignments.map((entry) => entry.classes);
}

/** Subset scores for a single actor over a label set; scores sum to the confidence. */
export function scoreActorSubsets(
  logits: number[],
  confidence: number,
  labelSet: number[],
  options?: RunnerOptions,
): ScoreTable {
  const doc = clipDocument([logits], [confidence], labelSet);
  const stdout = withTempFiles({ "clip.json": doc }, (paths) =>
    runCli(["score", paths["clip.json"]], options),
  );
  const parsed = JSON.parse(stdout) as {
    frames: {
      actors: { subsets: { classes: number[]; score: number; log_score: number | null }[] }[];
    }[];
  };
  const subsets = parsed.frames[0].actors[0].subsets;
  return {
    subsets: subsets.map((s) => s.classes),
    scores: subsets.map((s) => s.score),
    logScores: subsets.map((s) => s.log_score),
  };
}

/**
 * Loss values and gradients for one frame. `y` is the binary clip-label
 * vector, `assignments` lists one class array per actor (null skips the
 * association term entirely).
 */
export function losses(
  y: number[],
  logits: number[][],
  assignments: number[][] | null,
  alpha = 0.3,
  options?: RunnerOptions,
): LossBreakdown {
  checkMatrix(logits);
  if (assignments !== null && assignments.length !== logits.length) {
    throw new CliError(
      "data",
      `expected ${logits.length} assignment rows, got ${assignments.length}`,
      -1,
    );
  }
  const payload = JSON.stringify({ y, logits, assignments, alpha });
  const stdout = withTempFiles({ "frame.json": payload }, (paths) =>
    runCli(["losses", paths["frame.json"]], options),
  );
  const parsed = JSON.parse(stdout) as LossBreakdown & { format: string };
  return {
    miml: parsed.miml,
    association: parsed.association,
    combined: parsed.combined,
    alpha: parsed.alpha,
    gradient: parsed.gradient,
  };
}

/** Bag-level multi-instance multi-label loss alone. */
export function mimlLoss(
  y: number[],
  logits: number[][],
  options?: RunnerOptions,
): number {
  return losses(y, logits, null, 0.0, options).miml;
}

/** Combined loss `miml + alpha * association`. */
export function combinedLoss(
  y: number[],
  logits: number[][],
  assignments: number[][],
  alpha = 0.3,
  options?: RunnerOptions,
): LossBreakdown {
  return losses(y, logits, assignments, alpha, options);
}

/** Gradient of the combined loss with respect to the logits. */
export function lossGradients(
  y: number[],
  logits: number[][],
  assignments: number[][] | null,
  alpha = 0.3,
  options?: RunnerOptions,
): number[][] {
  return losses(y, logits, assignments, alpha, options).gradient;
}

function csvRows(
  entries: (PredictionEntry | GroundTruthEntry)[],
  withScore: boolean,
): string {
  return entries
    .map((entry) => {
      const cells = [
        entry.videoId ?? "v",
        String(entry.frame),
        ...entry.box.map((c) => String(c)),
        String(entry.classId),
      ];
      if (withScore) cells.push(String((entry as PredictionEntry).score));
      return cells.join(",");
    })
    .join("\n");
}

/** Frame mAP of predictions against ground truth at an IoU threshold. */
export function meanAveragePrecision(
  predictions: PredictionEntry[],
  groundTruth: GroundTruthEntry[],
  opts?: { iouThreshold?: number; classCount?: number },
  options?: RunnerOptions,
): EvalReport {
  const files = {
    "pred.csv": csvRows(predictions, true) + (predictions.length ? "\n" : ""),
    "gt.csv": csvRows(groundTruth, false) + (groundTruth.length ? "\n" : ""),
  };
  const stdout = withTempFiles(files, (paths) => {
    const args = ["eval", paths["pred.csv"], paths["gt.csv"], "--json"];
    if (opts?.iouThreshold !== undefined) args.push("--iou", String(opts.iouThreshold));
    if (opts?.classCount !== undefined) args.push("--classes", String(opts.classCount));
    return runCli(args, options);
  });
  const parsed = JSON.parse(stdout) as {
    map: number;
    per_class: { class_id: number; gt_count: number; ap: number | null }[];
  };
  return {
    map: parsed.map,
    perClass: parsed.per_class.map((row) => ({
      classId: row.class_id,
      gtCount: row.gt_count,
      ap: row.ap,
    })),
  };
}
