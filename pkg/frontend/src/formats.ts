/**
 * Readers for the experiment engine's artifact formats.  Schemas are owned
 * by the engine; these parsers validate and never recompute metrics.
 */

import { readFileSync } from "fs";

export interface LandscapeGrid {
  xs: number[];
  ys: number[];
  /** loss[i][j] at (xs[i], ys[j]) */
  loss: number[][];
}

export interface RoundRecord {
  round: number;
  test_accuracy: number | null;
  mean_train_loss: number;
  mean_compression_error: number;
  cos_theta: number | null;
}

export const RECORD_KEYS = [
  "round",
  "test_accuracy",
  "mean_train_loss",
  "mean_compression_error",
  "cos_theta",
] as const;

export interface RunRecords {
  cell: string;
  seed: string;
  rows: RoundRecord[];
}

export interface SummaryRow {
  cell: string;
  metric: string;
  mean: number;
  std: number;
  seeds: number;
}

export function readLandscapeCsv(path: string): LandscapeGrid {
  const text = readFileSync(path, "utf8").trim();
  const lines = text.split(/\r?\n/);
  const header = lines[0].split(",");
  if (header.length !== 3 || header[0] !== "x" || header[1] !== "y" || header[2] !== "loss") {
    throw new Error(`landscape CSV must have header x,y,loss; got "${lines[0]}" in ${path}`);
  }
  const cells = new Map<string, number>();
  const xsSet = new Set<number>();
  const ysSet = new Set<number>();
  for (const line of lines.slice(1)) {
    if (!line.trim()) continue;
    const parts = line.split(",");
    const [x, y, loss] = parts.map(Number);
    if (parts.length !== 3 || [x, y, loss].some(Number.isNaN)) {
      throw new Error(`bad landscape row "${line}" in ${path}`);
    }
    xsSet.add(x);
    ysSet.add(y);
    cells.set(`${x}|${y}`, loss);
  }
  const xs = [...xsSet].sort((a, b) => a - b);
  const ys = [...ysSet].sort((a, b) => a - b);
  const loss = xs.map((x) =>
    ys.map((y) => {
      const v = cells.get(`${x}|${y}`);
      if (v === undefined) throw new Error(`landscape grid missing cell (${x}, ${y}) in ${path}`);
      return v;
    }),
  );
  return { xs, ys, loss };
}

export function readRecordsJsonl(path: string): RunRecords {
  const text = readFileSync(path, "utf8").trim();
  if (!text) throw new Error(`empty records file: ${path}`);
  const rows = text.split(/\r?\n/).map((line, i) => {
    const parsed = JSON.parse(line);
    for (const key of RECORD_KEYS) {
      if (!(key in parsed)) {
        throw new Error(`record line ${i + 1} of ${path} is missing "${key}"`);
      }
    }
    return parsed as RoundRecord;
  });
  // Runs live at <out>/<cell>/<seedN>/records.jsonl.
  const segments = path.split(/[\\/]/);
  const seed = segments.length >= 3 ? segments[segments.length - 2] : "seed?";
  const cell = segments.length >= 3 ? segments[segments.length - 3] : path;
  return { cell, seed, rows };
}

export function readSummaryCsv(path: string): SummaryRow[] {
  const text = readFileSync(path, "utf8").trim();
  const lines = text.split(/\r?\n/);
  const header = lines[0].split(",");
  const expected = ["cell", "metric", "mean", "std", "seeds"];
  if (header.join(",") !== expected.join(",")) {
    throw new Error(`summary CSV must have header ${expected.join(",")}; got "${lines[0]}"`);
  }
  return lines.slice(1).filter((l) => l.trim()).map((line) => {
    const [cell, metric, mean, std, seeds] = line.split(",");
    return { cell, metric, mean: Number(mean), std: Number(std), seeds: Number(seeds) };
  });
}
