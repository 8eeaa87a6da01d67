/** Tiny SVG scene builder; enough for surfaces, lines, and bands. */

export class Svg {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {}

  polygon(points: [number, number][], fill: string, opts: { stroke?: string; opacity?: number } = {}) {
    const pts = points.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
    const stroke = opts.stroke ? ` stroke="${opts.stroke}" stroke-width="0.4"` : "";
    const opacity = opts.opacity !== undefined ? ` fill-opacity="${opts.opacity}"` : "";
    this.parts.push(`<polygon points="${pts}" fill="${fill}"${stroke}${opacity}/>`);
  }

  polyline(points: [number, number][], stroke: string, width = 1.5) {
    const pts = points.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
    this.parts.push(`<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke = "#333", width = 1) {
    this.parts.push(
      `<line x1="${x1.toFixed(2)}" y1="${y1.toFixed(2)}" x2="${x2.toFixed(2)}" y2="${y2.toFixed(2)}" stroke="${stroke}" stroke-width="${width}"/>`,
    );
  }

  text(x: number, y: number, content: string, opts: { size?: number; anchor?: string } = {}) {
    const size = opts.size ?? 12;
    const anchor = opts.anchor ?? "start";
    this.parts.push(
      `<text x="${x.toFixed(2)}" y="${y.toFixed(2)}" font-size="${size}" text-anchor="${anchor}" font-family="sans-serif">${escapeXml(content)}</text>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" ` +
      `viewBox="0 0 ${this.width} ${this.height}">\n<rect width="100%" height="100%" fill="white"/>\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}

export function escapeXml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
