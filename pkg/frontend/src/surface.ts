/**
 * 3-D loss-surface rendering from landscape CSV grids: isometric
 * projection, painter-ordered quads, optional translucent overlay of a
 * second surface for with/without-compression comparisons.
 */

import { LandscapeGrid } from "./formats.js";
import { Svg } from "./svg.js";

const WIDTH = 640;
const HEIGHT = 480;

interface Projected {
  quads: { depth: number; points: [number, number][]; height: number }[];
  zMin: number;
  zMax: number;
}

function project(grid: LandscapeGrid, zMin: number, zMax: number): Projected {
  const n = grid.xs.length;
  const m = grid.ys.length;
  const span = Math.max(n, m) - 1 || 1;
  const zSpan = zMax - zMin || 1;
  const cos = Math.cos(Math.PI / 6);
  const sin = Math.sin(Math.PI / 6);
  const scale = (WIDTH * 0.42) / span;
  const zScale = HEIGHT * 0.45;
  const cx = WIDTH / 2;
  const cy = HEIGHT * 0.78;

  const point = (i: number, j: number): [number, number] => {
    const z = (grid.loss[i][j] - zMin) / zSpan;
    return [cx + (i - j) * scale * cos, cy - (i + j) * scale * sin * 0.7 - z * zScale * 0.8];
  };

  const quads = [];
  for (let i = 0; i < n - 1; i++) {
    for (let j = 0; j < m - 1; j++) {
      const corners: [number, number][] = [
        point(i, j),
        point(i + 1, j),
        point(i + 1, j + 1),
        point(i, j + 1),
      ];
      const height =
        (grid.loss[i][j] + grid.loss[i + 1][j] + grid.loss[i + 1][j + 1] + grid.loss[i][j + 1]) / 4;
      quads.push({ depth: i + j, points: corners, height });
    }
  }
  quads.sort((a, b) => a.depth - b.depth);
  return { quads, zMin, zMax };
}

function heightColor(t: number): string {
  // Blue (low) to warm yellow (high).
  const r = Math.round(40 + 215 * t);
  const g = Math.round(80 + 140 * t);
  const b = Math.round(200 - 160 * t);
  return `rgb(${r},${g},${b})`;
}

export function renderSurface(
  base: LandscapeGrid,
  overlay: LandscapeGrid | null,
  title: string,
): string {
  const all = [base, ...(overlay ? [overlay] : [])];
  const zMin = Math.min(...all.map((g) => Math.min(...g.loss.flat())));
  const zMax = Math.max(...all.map((g) => Math.max(...g.loss.flat())));
  const svg = new Svg(WIDTH, HEIGHT);

  const baseProj = project(base, zMin, zMax);
  const zSpan = zMax - zMin || 1;
  for (const quad of baseProj.quads) {
    svg.polygon(quad.points, heightColor((quad.height - zMin) / zSpan), { stroke: "#ffffff" });
  }
  if (overlay) {
    const overlayProj = project(overlay, zMin, zMax);
    for (const quad of overlayProj.quads) {
      svg.polygon(quad.points, "#8a2be2", { opacity: 0.35 });
    }
    svg.polygon(
      [
        [WIDTH - 180, 18],
        [WIDTH - 160, 18],
        [WIDTH - 160, 30],
        [WIDTH - 180, 30],
      ],
      "#8a2be2",
      { opacity: 0.35 },
    );
    svg.text(WIDTH - 152, 28, "overlay");
  }
  svg.text(WIDTH / 2, 20, title, { size: 14, anchor: "middle" });
  svg.text(12, HEIGHT - 12, `loss range [${zMin.toPrecision(4)}, ${zMax.toPrecision(4)}]`, {
    size: 11,
  });
  return svg.render();
}
