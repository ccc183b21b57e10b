/** Shared renderer for the 1D profile-overlay figures: a reference
 * profile drawn solid and comparison profiles drawn dashed, at a
 * handful of snapshot times colored from early to late. */

import { distinct, indicesWhere, numbers, requireColumns, Table } from "../csv.js";
import {
  DEFAULT_MARGIN,
  drawAxes,
  drawLegend,
  extent,
  linearScale,
  SvgDocument,
} from "../svg.js";

export interface ProfileFigureOptions {
  solid: string;
  dashed: string[];
  title: string;
  yLabel: string;
  maxTimes?: number;
  width?: number;
  height?: number;
}

const DASHES = ["5 3", "2 2", "7 2 2 2"];

/** Color ramp from dark blue (early) to light orange (late). */
function timeColor(fraction: number): string {
  const mix = (a: number, b: number) => Math.round(a + (b - a) * fraction);
  return `rgb(${mix(13, 240)},${mix(59, 140)},${mix(140, 40)})`;
}

export function profileFigure(table: Table, options: ProfileFigureOptions): string {
  requireColumns(table, ["t", "x", options.solid, ...options.dashed]);
  const width = options.width ?? 560;
  const height = options.height ?? 400;
  const m = DEFAULT_MARGIN;
  const t = numbers(table, "t");
  const x = numbers(table, "x");
  const series = [options.solid, ...options.dashed].map((name) => numbers(table, name));

  const times = distinct(t);
  const maxTimes = options.maxTimes ?? 5;
  const stride = Math.max(1, Math.floor((times.length - 1) / (maxTimes - 1)) || 1);
  const shown = times.filter((_, i) => i % stride === 0 || i === times.length - 1).slice(0, maxTimes + 1);

  const sx = linearScale(extent(x), [m.left, width - m.right]);
  const allValues = series.flat();
  const sy = linearScale(extent(allValues), [height - m.bottom, m.top]);

  const svg = new SvgDocument(width, height);
  for (const time of shown) {
    const idx = indicesWhere(t, time);
    const span = times[times.length - 1] - times[0] || 1;
    const color = timeColor((time - times[0]) / span);
    const px = idx.map((i) => sx(x[i]));
    series.forEach((values, s) => {
      const py = idx.map((i) => sy(values[i]));
      if (s === 0) {
        svg.polyline(px, py, color, 1.8);
      } else {
        svg.polyline(px, py, color, 1.4, DASHES[(s - 1) % DASHES.length]);
      }
    });
  }
  drawAxes(svg, sx, sy, { xLabel: "x", yLabel: options.yLabel, title: options.title });
  drawLegend(svg, width - m.right - 150, m.top + 8, [
    { label: options.solid, color: "#555" },
    ...options.dashed.map((name, s) => ({
      label: name,
      color: "#555",
      dash: DASHES[s % DASHES.length],
    })),
  ]);
  return svg.toString();
}
