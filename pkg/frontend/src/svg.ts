/** Minimal headless SVG chart primitives (no DOM required). */

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGIN: Margin = { top: 30, right: 20, bottom: 42, left: 56 };

/** Categorical palette (colorblind-safe Okabe-Ito subset). */
export const PALETTE = ["#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9"];

export interface Scale {
  (value: number): number;
  domain: [number, number];
  range: [number, number];
  log: boolean;
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const f = (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
  return Object.assign(f, { domain, range, log: false });
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  if (d0 <= 0 || d1 <= 0) {
    throw new Error(`log scale needs a positive domain, got [${d0}, ${d1}]`);
  }
  const [r0, r1] = range;
  const span = Math.log10(d1 / d0) || 1;
  const f = (v: number) => r0 + (Math.log10(v / d0) / span) * (r1 - r0);
  return Object.assign(f, { domain, range, log: true });
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo)) throw new Error("extent of an empty sequence");
  return [lo, hi];
}

/** Round, human-scaled tick positions covering the domain. */
export function ticks(domain: [number, number], count = 6): number[] {
  const [lo, hi] = domain;
  if (lo === hi) return [lo];
  const step = tickStep(hi - lo, count);
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

function tickStep(span: number, count: number): number {
  const raw = span / count;
  const mag = 10 ** Math.floor(Math.log10(raw));
  const residual = raw / mag;
  if (residual > 5) return 10 * mag;
  if (residual > 2) return 5 * mag;
  if (residual > 1) return 2 * mag;
  return mag;
}

export function logTicks(domain: [number, number]): number[] {
  const out: number[] = [];
  const lo = Math.ceil(Math.log10(domain[0]) - 1e-9);
  const hi = Math.floor(Math.log10(domain[1]) + 1e-9);
  for (let e = lo; e <= hi; e++) out.push(10 ** e);
  return out.length > 0 ? out : [domain[0]];
}

export function formatTick(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 1e4 || abs < 1e-3) return v.toExponential(0).replace("+", "");
  return String(Number(v.toPrecision(4)));
}

const escapeText = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

/** Accumulates SVG elements and serializes the final document. */
export class SvgDocument {
  private parts: string[] = [];

  constructor(
    readonly width: number,
    readonly height: number,
  ) {}

  raw(element: string): void {
    this.parts.push(element);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.raw(
      `<line x1="${r(x1)}" y1="${r(y1)}" x2="${r(x2)}" y2="${r(y2)}" stroke="${stroke}" stroke-width="${width}"${d}/>`,
    );
  }

  polyline(xs: number[], ys: number[], stroke: string, width = 1.5, dash = ""): void {
    const pts = xs.map((x, i) => `${r(x)},${r(ys[i])}`).join(" ");
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.raw(`<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${width}"${d}/>`);
  }

  circle(cx: number, cy: number, radius: number, fill: string, opacity = 1): void {
    const o = opacity < 1 ? ` fill-opacity="${opacity}"` : "";
    this.raw(`<circle cx="${r(cx)}" cy="${r(cy)}" r="${radius}" fill="${fill}"${o}/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.raw(`<rect x="${r(x)}" y="${r(y)}" width="${r(w)}" height="${r(h)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, options: { size?: number; anchor?: string; rotate?: boolean } = {}): void {
    const size = options.size ?? 11;
    const anchor = options.anchor ?? "start";
    const transform = options.rotate ? ` transform="rotate(-90 ${r(x)} ${r(y)})"` : "";
    this.raw(
      `<text x="${r(x)}" y="${r(y)}" font-size="${size}" font-family="sans-serif" text-anchor="${anchor}"${transform}>${escapeText(content)}</text>`,
    );
  }

  toString(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" ` +
      `viewBox="0 0 ${this.width} ${this.height}">\n<rect width="100%" height="100%" fill="white"/>\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}

const r = (v: number) => String(Math.round(v * 100) / 100);

export interface AxesOptions {
  xLabel: string;
  yLabel: string;
  title?: string;
}

/** Draw axis lines, ticks, labels, and an optional title for a plot area. */
export function drawAxes(
  svg: SvgDocument,
  x: Scale,
  y: Scale,
  options: AxesOptions,
): void {
  const [x0, x1] = x.range;
  const [y0, y1] = y.range; // y0 is the bottom (larger pixel value)
  svg.line(x0, y0, x1, y0, "#333");
  svg.line(x0, y0, x0, y1, "#333");
  const xTicks = x.log ? logTicks(x.domain) : ticks(x.domain);
  for (const t of xTicks) {
    const px = x(t);
    svg.line(px, y0, px, y0 + 4, "#333");
    svg.text(px, y0 + 16, formatTick(t), { anchor: "middle" });
  }
  const yTicks = y.log ? logTicks(y.domain) : ticks(y.domain);
  for (const t of yTicks) {
    const py = y(t);
    svg.line(x0 - 4, py, x0, py, "#333");
    svg.text(x0 - 6, py + 3.5, formatTick(t), { anchor: "end" });
  }
  svg.text((x0 + x1) / 2, y0 + 32, options.xLabel, { anchor: "middle", size: 12 });
  svg.text(x0 - 44, (y0 + y1) / 2, options.yLabel, { anchor: "middle", size: 12, rotate: true });
  if (options.title) {
    svg.text((x0 + x1) / 2, y1 - 10, options.title, { anchor: "middle", size: 13 });
  }
}

export interface LegendItem {
  label: string;
  color: string;
  dash?: string;
}

export function drawLegend(svg: SvgDocument, x: number, y: number, items: LegendItem[]): void {
  items.forEach((item, i) => {
    const py = y + i * 16;
    svg.line(x, py, x + 22, py, item.color, 2, item.dash ?? "");
    svg.text(x + 28, py + 3.5, item.label);
  });
}

/** Blue-white-red diverging map on [-1, 1]. */
export function divergingColor(t: number): string {
  const u = Math.max(-1, Math.min(1, t));
  const mix = (a: number, b: number, w: number) => Math.round(a + (b - a) * w);
  if (u < 0) {
    const w = 1 + u;
    return `rgb(${mix(5, 255, w)},${mix(48, 255, w)},${mix(97, 255, w)})`;
  }
  const w = u;
  return `rgb(${mix(255, 103, w)},${mix(255, 0, w)},${mix(255, 31, w)})`;
}
