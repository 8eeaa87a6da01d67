/**
 * Band aggregation across seeds, with a loud cross-check against the
 * engine's own summary CSV (disagreement beyond 1e-9 is an error, never a
 * silent recompute).
 */

import { RoundRecord, RunRecords, SummaryRow } from "./formats.js";

export type MetricKey = "test_accuracy" | "mean_train_loss" | "mean_compression_error" | "cos_theta";

export const METRIC_KEYS: MetricKey[] = [
  "test_accuracy",
  "mean_train_loss",
  "mean_compression_error",
  "cos_theta",
];

/** Metric name -> the summary CSV row holding its final-round aggregate. */
const SUMMARY_METRIC: Partial<Record<MetricKey, string>> = {
  test_accuracy: "final_accuracy",
  mean_train_loss: "final_train_loss",
  cos_theta: "final_cos_theta",
};

export interface CellBand {
  cell: string;
  rounds: number[];
  mean: number[];
  std: number[];
  seeds: number;
}

export function meanStd(values: number[]): { mean: number; std: number } {
  const n = values.length;
  const mean = values.reduce((a, b) => a + b, 0) / n;
  const variance = values.reduce((a, b) => a + (b - mean) * (b - mean), 0) / n;
  return { mean, std: Math.sqrt(variance) };
}

export function aggregateCurves(runs: RunRecords[], metric: MetricKey): CellBand[] {
  if (runs.length === 0) throw new Error("no input runs");
  if (!METRIC_KEYS.includes(metric)) {
    throw new Error(`unknown metric "${metric}"; available: ${METRIC_KEYS.join(", ")}`);
  }
  const byCell = new Map<string, RunRecords[]>();
  for (const run of runs) {
    byCell.set(run.cell, [...(byCell.get(run.cell) ?? []), run]);
  }
  const bands: CellBand[] = [];
  for (const [cell, cellRuns] of [...byCell.entries()].sort()) {
    const grids = cellRuns.map((r) =>
      r.rows.filter((row) => row[metric] !== null).map((row) => row.round),
    );
    const rounds = grids[0];
    if (rounds.length === 0) throw new Error(`metric "${metric}" has no values for cell ${cell}`);
    for (const grid of grids.slice(1)) {
      if (grid.length !== rounds.length || grid.some((r, i) => r !== rounds[i])) {
        throw new Error(`seeds of cell ${cell} do not share a round grid for "${metric}"`);
      }
    }
    const perRound = rounds.map((round, _i) => {
      const values = cellRuns.map((r) => {
        const row = r.rows.find((x) => x.round === round) as RoundRecord;
        return row[metric] as number;
      });
      return meanStd(values);
    });
    bands.push({
      cell,
      rounds,
      mean: perRound.map((m) => m.mean),
      std: perRound.map((m) => m.std),
      seeds: cellRuns.length,
    });
  }
  return bands;
}

/**
 * Verify that the final-round aggregate this module computed agrees with
 * the engine's summary CSV to 1e-9.  Throws on disagreement.
 */
export function crossCheckAgainstSummary(
  bands: CellBand[],
  summary: SummaryRow[],
  metric: MetricKey,
): void {
  const summaryMetric = SUMMARY_METRIC[metric];
  if (!summaryMetric) return; // per-round metric with no final-round summary row
  for (const band of bands) {
    const row = summary.find((r) => r.cell === band.cell && r.metric === summaryMetric);
    if (!row) continue; // cell not in this summary (e.g., metric undefined for it)
    if (row.seeds !== band.seeds) {
      throw new Error(
        `summary has ${row.seeds} seeds for ${band.cell}/${summaryMetric}, plots aggregate ${band.seeds}`,
      );
    }
    const last = band.rounds.length - 1;
    const dMean = Math.abs(band.mean[last] - row.mean);
    const dStd = Math.abs(band.std[last] - row.std);
    if (dMean > 1e-9 || dStd > 1e-9) {
      throw new Error(
        `aggregate disagrees with summary for ${band.cell}/${summaryMetric}: ` +
          `mean ${band.mean[last]} vs ${row.mean}, std ${band.std[last]} vs ${row.std}`,
      );
    }
  }
}
