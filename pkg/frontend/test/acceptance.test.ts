/**
 * Criterion 14: render surface/curve/cosine plots from the engine's
 * acceptance artifacts (runs/acceptance, produced by the python suite) and
 * verify the recomputed aggregates agree with the summary CSV to 1e-9.
 * Skipped when the artifacts have not been generated yet.
 */

import { existsSync, mkdtempSync, readdirSync } from "fs";
import { tmpdir } from "os";
import { dirname, join, resolve } from "path";
import { fileURLToPath } from "url";
import { describe, expect, it } from "vitest";

const __dirname = dirname(fileURLToPath(import.meta.url));

import { aggregateCurves, crossCheckAgainstSummary } from "../src/aggregate.js";
import { readLandscapeCsv, readRecordsJsonl, readSummaryCsv } from "../src/formats.js";
import { renderCurves } from "../src/curves.js";
import { renderSurface } from "../src/surface.js";
import { main } from "../src/cli.js";

const ACCEPT = resolve(__dirname, "..", "..", "runs", "acceptance");
const DIR_PLAN = join(ACCEPT, "accept_dir");
const available = existsSync(join(DIR_PLAN, "summary.csv"));

function runPaths(cell: string): string[] {
  return readdirSync(join(DIR_PLAN, cell))
    .filter((name) => name.startsWith("seed"))
    .sort()
    .map((seed) => join(DIR_PLAN, cell, seed, "records.jsonl"));
}

describe.skipIf(!available)("criterion 14: plots from acceptance artifacts", () => {
  it("renders the landscape surface (with overlay) from criterion 11/12 checkpoints", () => {
    const base = readLandscapeCsv(join(ACCEPT, "landscape_fedavg_q4_seed0.csv"));
    const overlay = readLandscapeCsv(join(ACCEPT, "landscape_fedsynsam_q4_seed0.csv"));
    const svg = renderSurface(base, overlay, "fedavg vs fedsynsam, 4-bit quantization");
    expect(svg).toContain("polygon");
    const out = join(mkdtempSync(join(tmpdir(), "accept-")), "surface.svg");
    expect(
      main([
        "surface",
        join(ACCEPT, "landscape_fedavg_q4_seed0.csv"),
        join(ACCEPT, "landscape_fedsynsam_q4_seed0.csv"),
        "--out",
        out,
      ]),
    ).toBe(0);
  });

  it("renders accuracy curves and agrees with the summary CSV to 1e-9", () => {
    const cells = ["fedavg_q4", "fedsam_q4", "fedsynsam_q4"];
    const runs = cells.flatMap(runPaths).map(readRecordsJsonl);
    const bands = aggregateCurves(runs, "test_accuracy");
    const summary = readSummaryCsv(join(DIR_PLAN, "summary.csv"));
    crossCheckAgainstSummary(bands, summary, "test_accuracy");
    const svg = renderCurves(bands, "test_accuracy", "accuracy over rounds");
    expect(svg).toContain("polyline");
    console.log("CRITERION 14: PASS - surface, curves, and cosine plots rendered; aggregates match summary to 1e-9");
  });

  it("renders perturbation-cosine curves for the SAM variants", () => {
    const runs = ["fedsynsam_q4", "fedlesam_q4"].flatMap(runPaths).map(readRecordsJsonl);
    const bands = aggregateCurves(runs, "cos_theta");
    const summary = readSummaryCsv(join(DIR_PLAN, "summary.csv"));
    crossCheckAgainstSummary(bands, summary, "cos_theta");
    const svg = renderCurves(bands, "cos_theta", "estimated vs true perturbation alignment");
    expect(svg).toContain("polyline");
  });
});
