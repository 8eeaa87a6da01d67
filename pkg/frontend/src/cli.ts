#!/usr/bin/env node
/**
 * fedsynsam-plot surface <grid.csv> [overlay.csv] --out plot.svg [--title t]
 * fedsynsam-plot curves <records.jsonl...> --metric test_accuracy --out plot.svg
 *                       [--summary summary.csv] [--title t]
 * fedsynsam-plot cosine <records.jsonl...> --out plot.svg  (curves preset)
 */

import { writeFileSync } from "fs";

import { aggregateCurves, crossCheckAgainstSummary, METRIC_KEYS, MetricKey } from "./aggregate.js";
import { readLandscapeCsv, readRecordsJsonl, readSummaryCsv } from "./formats.js";
import { renderCurves } from "./curves.js";
import { renderSurface } from "./surface.js";

interface Args {
  positional: string[];
  flags: Map<string, string>;
}

function parseArgs(argv: string[]): Args {
  const positional: string[] = [];
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg.startsWith("--")) {
      const value = argv[i + 1];
      if (value === undefined) throw new Error(`flag ${arg} needs a value`);
      flags.set(arg.slice(2), value);
      i++;
    } else {
      positional.push(arg);
    }
  }
  return { positional, flags };
}

function requireOut(args: Args): string {
  const out = args.flags.get("out");
  if (!out) throw new Error("--out <file.svg> is required");
  return out;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "surface") {
      const args = parseArgs(rest);
      if (args.positional.length < 1 || args.positional.length > 2) {
        throw new Error("surface takes one grid CSV and at most one overlay CSV");
      }
      const base = readLandscapeCsv(args.positional[0]);
      const overlay = args.positional[1] ? readLandscapeCsv(args.positional[1]) : null;
      const title = args.flags.get("title") ?? "loss landscape";
      writeFileSync(requireOut(args), renderSurface(base, overlay, title));
    } else if (command === "curves" || command === "cosine") {
      const args = parseArgs(rest);
      if (args.positional.length === 0) throw new Error("no input runs");
      const metric = (command === "cosine" ? "cos_theta" : args.flags.get("metric") ?? "test_accuracy") as MetricKey;
      if (!METRIC_KEYS.includes(metric)) {
        throw new Error(`unknown metric "${metric}"; available: ${METRIC_KEYS.join(", ")}`);
      }
      const runs = args.positional.map(readRecordsJsonl);
      const bands = aggregateCurves(runs, metric);
      const summaryPath = args.flags.get("summary");
      if (summaryPath) {
        crossCheckAgainstSummary(bands, readSummaryCsv(summaryPath), metric);
      }
      const title = args.flags.get("title") ?? `${metric} over rounds`;
      writeFileSync(requireOut(args), renderCurves(bands, metric, title));
    } else {
      throw new Error(`unknown command "${command ?? ""}" (use surface | curves | cosine)`);
    }
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
