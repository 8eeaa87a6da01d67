/**
 * Mean +/- std curves across seeds per cell, for any per-round metric
 * (accuracy over rounds, perturbation-cosine over rounds, ...).
 */

import { CellBand } from "./aggregate.js";
import { PALETTE, Svg } from "./svg.js";

const WIDTH = 640;
const HEIGHT = 420;
const MARGIN = { left: 60, right: 20, top: 36, bottom: 44 };

export function renderCurves(bands: CellBand[], metric: string, title: string): string {
  if (bands.length === 0) throw new Error("nothing to plot");
  const allRounds = bands.flatMap((b) => b.rounds);
  const lows = bands.flatMap((b) => b.mean.map((m, i) => m - b.std[i]));
  const highs = bands.flatMap((b) => b.mean.map((m, i) => m + b.std[i]));
  const x0 = Math.min(...allRounds);
  const x1 = Math.max(...allRounds);
  let y0 = Math.min(...lows);
  let y1 = Math.max(...highs);
  if (y0 === y1) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const px = (r: number) => MARGIN.left + ((r - x0) / (x1 - x0 || 1)) * plotW;
  const py = (v: number) => MARGIN.top + (1 - (v - y0) / (y1 - y0)) * plotH;

  const svg = new Svg(WIDTH, HEIGHT);
  svg.line(MARGIN.left, MARGIN.top, MARGIN.left, HEIGHT - MARGIN.bottom);
  svg.line(MARGIN.left, HEIGHT - MARGIN.bottom, WIDTH - MARGIN.right, HEIGHT - MARGIN.bottom);
  for (const frac of [0, 0.25, 0.5, 0.75, 1]) {
    const v = y0 + frac * (y1 - y0);
    svg.line(MARGIN.left - 4, py(v), MARGIN.left, py(v));
    svg.text(MARGIN.left - 8, py(v) + 4, v.toPrecision(3), { size: 10, anchor: "end" });
    const r = x0 + frac * (x1 - x0);
    svg.line(px(r), HEIGHT - MARGIN.bottom, px(r), HEIGHT - MARGIN.bottom + 4);
    svg.text(px(r), HEIGHT - MARGIN.bottom + 16, Math.round(r).toString(), {
      size: 10,
      anchor: "middle",
    });
  }

  bands.forEach((band, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    if (band.seeds > 1) {
      const upper = band.rounds.map((r, i) => [px(r), py(band.mean[i] + band.std[i])] as [number, number]);
      const lower = band.rounds
        .map((r, i) => [px(r), py(band.mean[i] - band.std[i])] as [number, number])
        .reverse();
      svg.polygon([...upper, ...lower], color, { opacity: 0.18 });
    }
    svg.polyline(
      band.rounds.map((r, i) => [px(r), py(band.mean[i])] as [number, number]),
      color,
    );
    const lx = WIDTH - MARGIN.right - 150;
    const ly = MARGIN.top + 8 + idx * 16;
    svg.line(lx, ly - 4, lx + 18, ly - 4, color, 2);
    svg.text(lx + 24, ly, `${band.cell} (n=${band.seeds})`, { size: 11 });
  });

  svg.text(WIDTH / 2, 18, title, { size: 14, anchor: "middle" });
  svg.text(WIDTH / 2, HEIGHT - 8, "round", { size: 11, anchor: "middle" });
  svg.text(14, MARGIN.top - 10, metric, { size: 11 });
  return svg.render();
}
