import { describe, expect, it } from "vitest";

import {
  CliError,
  assign,
  assignWithoutLp,
  combinedLoss,
  losses,
  lossGradients,
  meanAveragePrecision,
  mimlLoss,
  scoreActorSubsets,
} from "../src/index.js";
import { runCli, withTempFiles } from "../src/runner.js";

/** Deterministic PRNG so the random-instance suite is reproducible. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const logit = (p: number) => Math.log(p / (1 - p));

describe("assign", () => {
  it("splits the two-actor fixture and matches the CLI bit for bit", () => {
    const logits = [
      [0.0, 2.0, -2.0],
      [0.0, -2.0, 2.0],
    ];
    const result = assign(logits, [1.0, 1.0], [1, 2]);
    expect(result.feasible).toBe(true);
    expect(result.assignments).toEqual([[1], [2]]);
    const single = Math.exp(2) / (Math.exp(2) + Math.exp(-2) + 1);
    expect(result.objective).toBeCloseTo(2 * single, 12);

    // same invocation issued by hand: numbers must be identical
    const doc = JSON.stringify({
      format: "clipfile/v1",
      class_count: 3,
      clips: [
        {
          clip_id: "bound",
          labels: [1, 2],
          frames: [
            {
              frame_id: 0,
              actors: logits.map((row, i) => ({
                actor_id: i,
                box: null,
                confidence: 1.0,
                logits: row,
              })),
            },
          ],
        },
      ],
    });
    const raw = withTempFiles({ "clip.json": doc }, (paths) =>
      runCli(["assign", paths["clip.json"], "--report", "json"]),
    );
    const direct = JSON.parse(raw).results[0];
    expect(result.objective).toBe(direct.objective);
    expect(result.assignments).toEqual(
      direct.assignments.map((e: { classes: number[] }) => e.classes),
    );
  });

  it("gives a lone actor the whole label set", () => {
    const result = assign([[0.3, -1.0, 2.0]], [0.8], [1, 2]);
    expect(result.assignments).toEqual([[1, 2]]);
  });

  it("raises the infeasibility error for an empty actor list", () => {
    let thrown: unknown;
    try {
      assign([], [], [1, 2]);
    } catch (err) {
      thrown = err;
    }
    expect(thrown).toBeInstanceOf(CliError);
    expect((thrown as CliError).kind).toBe("infeasible");
    expect((thrown as CliError).exitCode).toBe(3);
  });

  it("rejects mismatched shapes host-side", () => {
    expect(() => assign([[1, 2]], [0.5, 0.5], [0])).toThrow(CliError);
    expect(() => assign([[1, 2], [1]], [0.5, 0.5], [0])).toThrow(/same length/);
  });
});

describe("assignWithoutLp", () => {
  it("thresholds per actor with no coverage enforcement", () => {
    const out = assignWithoutLp(
      [
        [1.2, -0.3],
        [-1.0, -2.0],
      ],
      [0, 1],
    );
    expect(out).toEqual([[0], []]);
  });
});

describe("scoreActorSubsets", () => {
  it("enumerates all non-empty subsets and sums to the confidence", () => {
    const table = scoreActorSubsets([0.5, -0.2, 1.0, 0.0], 0.75, [0, 1, 2, 3]);
    expect(table.subsets).toHaveLength(15);
    expect(table.subsets[0]).toEqual([0]);
    const total = table.scores.reduce((a, b) => a + b, 0);
    expect(total).toBeCloseTo(0.75, 9);
  });
});

describe("losses", () => {
  it("reproduces the bag-max fixture value", () => {
    const logits = [
      [logit(0.8), logit(0.4)],
      [logit(0.6), logit(0.2)],
    ];
    const value = mimlLoss([1, 0], logits);
    expect(value).toBeCloseTo(0.36698458754, 9);
  });

  it("matches a direct CLI invocation exactly", () => {
    const payload = {
      y: [1, 0],
      logits: [
        [0.25, -1.5],
        [2.0, 0.75],
      ],
      assignments: [[0], [0, 1]],
      alpha: 0.3,
    };
    const bound = losses(payload.y, payload.logits, payload.assignments, payload.alpha);
    const raw = withTempFiles(
      { "frame.json": JSON.stringify(payload) },
      (paths) => runCli(["losses", paths["frame.json"]]),
    );
    const direct = JSON.parse(raw);
    expect(bound.miml).toBe(direct.miml);
    expect(bound.association).toBe(direct.association);
    expect(bound.combined).toBe(direct.combined);
    expect(bound.gradient).toEqual(direct.gradient);
  });

  it("reduces to the bag loss at alpha zero", () => {
    const breakdown = combinedLoss([1, 1], [[0.5, -0.5]], [[0]], 0.0);
    expect(breakdown.combined).toBe(breakdown.miml);
  });

  it("returns an actors-by-classes gradient", () => {
    const grad = lossGradients([1, 0, 1], [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]], null);
    expect(grad).toHaveLength(2);
    expect(grad[0]).toHaveLength(3);
  });
});

describe("meanAveragePrecision", () => {
  it("scores perfect predictions at 1.0", () => {
    const box: [number, number, number, number] = [0.1, 0.1, 0.4, 0.4];
    const report = meanAveragePrecision(
      [
        { frame: 0, box, classId: 0, score: 0.9 },
        { frame: 1, box, classId: 1, score: 0.9 },
      ],
      [
        { frame: 0, box, classId: 0 },
        { frame: 1, box, classId: 1 },
      ],
    );
    expect(report.map).toBe(1.0);
    expect(report.perClass).toHaveLength(2);
  });

  it("scores the FP-above-TP fixture at 0.5", () => {
    const hit: [number, number, number, number] = [0.1, 0.1, 0.4, 0.4];
    const miss: [number, number, number, number] = [0.6, 0.6, 0.9, 0.9];
    const report = meanAveragePrecision(
      [
        { frame: 5, box: miss, classId: 0, score: 0.9 },
        { frame: 0, box: hit, classId: 0, score: 0.8 },
      ],
      [{ frame: 0, box: hit, classId: 0 }],
    );
    expect(report.map).toBe(0.5);
  });
});

describe("cross-boundary equivalence", () => {
  it(
    "matches a batched CLI run exactly on 100 random instances",
    { timeout: 180_000 },
    () => {
      const rand = mulberry32(20240817);
      const instances: { logits: number[][]; confidences: number[]; labels: number[] }[] = [];
      const classCount = 6;
      for (let i = 0; i < 100; i++) {
        const n = 1 + Math.floor(rand() * 4);
        const k = 1 + Math.floor(rand() * 4);
        const pool = [0, 1, 2, 3, 4, 5];
        const labels: number[] = [];
        for (let j = 0; j < k; j++) {
          labels.push(pool.splice(Math.floor(rand() * pool.length), 1)[0]);
        }
        labels.sort((a, b) => a - b);
        instances.push({
          logits: Array.from({ length: n }, () =>
            Array.from({ length: classCount }, () => rand() * 8 - 4),
          ),
          confidences: Array.from({ length: n }, () => 0.05 + rand() * 0.95),
          labels,
        });
      }

      // one batched oracle run: every instance is a frame of one clip file
      const doc = JSON.stringify({
        format: "clipfile/v1",
        class_count: classCount,
        clips: instances.map((inst, i) => ({
          clip_id: `inst${i}`,
          labels: inst.labels,
          frames: [
            {
              frame_id: i,
              actors: inst.logits.map((row, a) => ({
                actor_id: a,
                box: null,
                confidence: inst.confidences[a],
                logits: row,
              })),
            },
          ],
        })),
      });
      const raw = withTempFiles({ "batch.json": doc }, (paths) =>
        runCli(["assign", paths["batch.json"], "--report", "json"]),
      );
      const oracle = JSON.parse(raw).results as {
        objective: number;
        assignments: { classes: number[] }[];
      }[];

      for (let i = 0; i < instances.length; i++) {
        const inst = instances[i];
        const bound = assign(inst.logits, inst.confidences, inst.labels);
        expect(bound.objective).toBe(oracle[i].objective);
        expect(bound.assignments).toEqual(oracle[i].assignments.map((e) => e.classes));
      }
    },
  );
});
