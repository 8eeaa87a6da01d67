import { mkdtempSync, writeFileSync, mkdirSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { aggregateCurves, crossCheckAgainstSummary, meanStd } from "../src/aggregate.js";
import { readLandscapeCsv, readRecordsJsonl, readSummaryCsv } from "../src/formats.js";
import { renderCurves } from "../src/curves.js";
import { renderSurface } from "../src/surface.js";
import { main } from "../src/cli.js";

function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "plotkit-"));
}

function writeGrid(path: string, size = 3): void {
  const lines = ["x,y,loss"];
  const coords = Array.from({ length: size }, (_, i) => i - (size - 1) / 2);
  for (const x of coords) for (const y of coords) lines.push(`${x},${y},${x * x + y * y}`);
  writeFileSync(path, lines.join("\n") + "\n");
}

function writeRun(dir: string, cell: string, seed: number, finals: number[]): string {
  const runDir = join(dir, cell, `seed${seed}`);
  mkdirSync(runDir, { recursive: true });
  const path = join(runDir, "records.jsonl");
  const lines = finals.map((acc, round) =>
    JSON.stringify({
      round,
      test_accuracy: round % 2 === 1 ? acc : null,
      mean_train_loss: 1.0 / (round + 1),
      mean_compression_error: 0.01,
      cos_theta: null,
    }),
  );
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

describe("landscape surfaces", () => {
  it("renders a 3x3 grid", () => {
    const dir = tempDir();
    const grid = join(dir, "g.csv");
    writeGrid(grid);
    const svg = renderSurface(readLandscapeCsv(grid), null, "t");
    expect(svg).toContain("<svg");
    expect(svg).toContain("polygon");
  });

  it("renders a two-surface overlay", () => {
    const dir = tempDir();
    const a = join(dir, "a.csv");
    const b = join(dir, "b.csv");
    writeGrid(a);
    writeGrid(b, 5);
    const svg = renderSurface(readLandscapeCsv(a), readLandscapeCsv(b), "overlayed");
    expect(svg).toContain("fill-opacity");
    expect(svg).toContain("overlay");
  });

  it("rejects a missing column with a clear error", () => {
    const dir = tempDir();
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, "x,loss\n0,1\n");
    expect(() => readLandscapeCsv(bad)).toThrow(/header x,y,loss/);
  });
});

describe("curves", () => {
  it("plots a single run without a band", () => {
    const dir = tempDir();
    const run = writeRun(dir, "avg", 0, [0.1, 0.2, 0.3, 0.4]);
    const bands = aggregateCurves([readRecordsJsonl(run)], "test_accuracy");
    expect(bands[0].seeds).toBe(1);
    const svg = renderCurves(bands, "test_accuracy", "t");
    expect(svg).toContain("polyline");
    expect(svg.includes("fill-opacity=\"0.18\"")).toBe(false);
  });

  it("draws a +/- std band for multiple seeds and cross-checks the summary", () => {
    const dir = tempDir();
    const runs = [0, 1, 2].map((s) => writeRun(dir, "avg", s, [0.1, 0.2 + 0.01 * s, 0.3, 0.4 + 0.02 * s]));
    const bands = aggregateCurves(runs.map(readRecordsJsonl), "test_accuracy");
    expect(bands[0].seeds).toBe(3);
    const finals = [0, 1, 2].map((s) => 0.4 + 0.02 * s);
    const { mean, std } = meanStd(finals);
    const summary = join(dir, "summary.csv");
    writeFileSync(
      summary,
      `cell,metric,mean,std,seeds\navg,final_accuracy,${mean},${std},3\n`,
    );
    crossCheckAgainstSummary(bands, readSummaryCsv(summary), "test_accuracy");
    const svg = renderCurves(bands, "test_accuracy", "t");
    expect(svg).toContain("fill-opacity=\"0.18\"");
  });

  it("fails loudly when the summary disagrees", () => {
    const dir = tempDir();
    const runs = [0, 1].map((s) => writeRun(dir, "avg", s, [0.1, 0.2, 0.3, 0.4]));
    const bands = aggregateCurves(runs.map(readRecordsJsonl), "test_accuracy");
    const summary = join(dir, "summary.csv");
    writeFileSync(summary, "cell,metric,mean,std,seeds\navg,final_accuracy,0.9,0.0,2\n");
    expect(() => crossCheckAgainstSummary(bands, readSummaryCsv(summary), "test_accuracy")).toThrow(
      /disagrees/,
    );
  });

  it("rejects an unknown metric listing the available keys", () => {
    const dir = tempDir();
    const run = writeRun(dir, "avg", 0, [0.1]);
    expect(() => aggregateCurves([readRecordsJsonl(run)], "bogus" as never)).toThrow(
      /available: test_accuracy/,
    );
  });

  it("rejects runs on different round grids", () => {
    const dir = tempDir();
    const a = writeRun(dir, "avg", 0, [0.1, 0.2, 0.3, 0.4]);
    const b = writeRun(dir, "avg", 1, [0.1, 0.2]);
    expect(() => aggregateCurves([a, b].map(readRecordsJsonl), "test_accuracy")).toThrow(
      /round grid/,
    );
  });

  it("rejects empty input", () => {
    expect(() => aggregateCurves([], "test_accuracy")).toThrow(/no input/);
  });
});

describe("cli", () => {
  it("runs surface and curves end to end", () => {
    const dir = tempDir();
    const grid = join(dir, "g.csv");
    writeGrid(grid);
    const out1 = join(dir, "surface.svg");
    expect(main(["surface", grid, "--out", out1, "--title", "demo"])).toBe(0);
    const run = writeRun(dir, "avg", 0, [0.1, 0.2, 0.3, 0.4]);
    const out2 = join(dir, "curves.svg");
    expect(main(["curves", run, "--metric", "test_accuracy", "--out", out2])).toBe(0);
  });

  it("returns nonzero on bad input", () => {
    expect(main(["surface"])).toBe(2);
    expect(main(["frobnicate"])).toBe(2);
    expect(main(["curves"])).toBe(2);
  });
});
