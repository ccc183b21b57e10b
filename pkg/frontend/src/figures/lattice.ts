/** 2D lattice figures: dU/dt heatmaps and the error-magnitude scatter. */

import { distinct, numbers, readTable, strings } from "../csv.js";
import { artifactPath, Manifest } from "../manifest.js";
import {
  divergingColor,
  drawAxes,
  drawLegend,
  extent,
  linearScale,
  logScale,
  PALETTE,
  SvgDocument,
} from "../svg.js";

/** Truth, prediction, and difference heatmaps of one held-out snapshot. */
export function figHeatmap(manifest: Manifest): string {
  const table = readTable(artifactPath(manifest, "figures/fig6_heatmap.csv"));
  const i = numbers(table, "i");
  const j = numbers(table, "j");
  const truth = numbers(table, "dUdt_truth");
  const pred = numbers(table, "dUdt_pred");
  const diff = truth.map((v, k) => v - pred[k]);

  const n = Math.max(...i) + 1;
  const cell = Math.max(6, Math.floor(220 / n));
  const panelGap = 28;
  const panelTop = 40;
  const panels: { label: string; values: number[]; scale: number }[] = [
    { label: "recorded dU/dt", values: truth, scale: absMax(truth) },
    { label: "predicted dU/dt", values: pred, scale: absMax(truth) },
    { label: "difference", values: diff, scale: absMax(diff) },
  ];
  const panelSize = n * cell;
  const width = 20 + panels.length * (panelSize + panelGap);
  const svg = new SvgDocument(width, panelTop + panelSize + 24);

  panels.forEach((panel, p) => {
    const x0 = 20 + p * (panelSize + panelGap);
    svg.text(x0 + panelSize / 2, panelTop - 10, panel.label, { anchor: "middle", size: 12 });
    for (let k = 0; k < panel.values.length; k++) {
      const color = divergingColor(panel.values[k] / (panel.scale || 1));
      svg.rect(x0 + j[k] * cell, panelTop + i[k] * cell, cell, cell, color);
    }
    svg.text(x0 + panelSize / 2, panelTop + panelSize + 16,
      `peak ${panel.scale.toExponential(2)}`, { anchor: "middle", size: 10 });
  });
  return svg.toString();
}

/** Per-snapshot relative error against ||dU/dt||, one dot per record. */
export function figErrorScatter(manifest: Manifest): string {
  const table = readTable(artifactPath(manifest, "figures/fig6_error_scatter.csv"));
  const arch = strings(table, "arch");
  const mag = numbers(table, "dudt_rms");
  const err = numbers(table, "relative_error");

  const width = 560;
  const height = 420;
  const m = { top: 30, right: 20, bottom: 42, left: 64 };
  const sx = logScale(positiveExtent(mag), [m.left, width - m.right]);
  const sy = logScale(positiveExtent(err), [height - m.bottom, m.top]);
  const svg = new SvgDocument(width, height);

  const archs = distinct(arch);
  arch.forEach((a, k) => {
    if (mag[k] <= 0 || err[k] <= 0) return;
    const color = PALETTE[archs.indexOf(a) % PALETTE.length];
    svg.circle(sx(mag[k]), sy(err[k]), 3, color, 0.55);
  });
  drawAxes(svg, sx, sy, {
    xLabel: "||dU/dt|| (RMS)",
    yLabel: "relative error",
    title: "Prediction error vs dynamics magnitude",
  });
  drawLegend(svg, width - m.right - 110, m.top + 8,
    archs.map((a, k) => ({ label: a, color: PALETTE[k % PALETTE.length] })));
  return svg.toString();
}

/** Per-time MSE curves of the held-out predictions, log-scaled. */
export function figMseCurves(manifest: Manifest): string {
  const table = readTable(artifactPath(manifest, "figures/fig7a_mse.csv"));
  const arch = strings(table, "arch");
  const trajectory = strings(table, "trajectory");
  const t = numbers(table, "t");
  const mse = numbers(table, "mse");

  const width = 560;
  const height = 400;
  const m = { top: 30, right: 20, bottom: 42, left: 64 };
  const sx = linearScale(extent(t), [m.left, width - m.right]);
  const sy = logScale(positiveExtent(mse), [height - m.bottom, m.top]);
  const svg = new SvgDocument(width, height);

  const archs = distinct(arch);
  for (const a of archs) {
    const color = PALETTE[archs.indexOf(a) % PALETTE.length];
    for (const traj of distinct(trajectory)) {
      const xs: number[] = [];
      const ys: number[] = [];
      t.forEach((time, k) => {
        if (arch[k] === a && trajectory[k] === traj && mse[k] > 0) {
          xs.push(sx(time));
          ys.push(sy(mse[k]));
        }
      });
      if (xs.length > 0) svg.polyline(xs, ys, color, 1, "");
    }
  }
  drawAxes(svg, sx, sy, {
    xLabel: "t",
    yLabel: "MSE of predicted dU/dt",
    title: "Held-out prediction error over time",
  });
  drawLegend(svg, width - m.right - 110, m.top + 8,
    archs.map((a, k) => ({ label: a, color: PALETTE[k % PALETTE.length] })));
  return svg.toString();
}

/** Leading Fourier-mode amplitudes of a held-out trajectory. */
export function figModeAmplitudes(manifest: Manifest): string {
  const table = readTable(artifactPath(manifest, "figures/fig7b_modes.csv"));
  const t = numbers(table, "t");
  const mode = strings(table, "mode");
  const amplitude = numbers(table, "amplitude");

  const width = 560;
  const height = 400;
  const m = { top: 30, right: 20, bottom: 42, left: 64 };
  const sx = linearScale(extent(t), [m.left, width - m.right]);
  const sy = linearScale(extent(amplitude), [height - m.bottom, m.top]);
  const svg = new SvgDocument(width, height);

  const modes = distinct(mode);
  modes.forEach((name, k) => {
    const color = PALETTE[k % PALETTE.length];
    const xs: number[] = [];
    const ys: number[] = [];
    t.forEach((time, row) => {
      if (mode[row] === name) {
        xs.push(sx(time));
        ys.push(sy(amplitude[row]));
      }
    });
    svg.polyline(xs, ys, color, 1.5);
  });
  drawAxes(svg, sx, sy, {
    xLabel: "t",
    yLabel: "mode amplitude",
    title: "Leading Fourier modes of a held-out trajectory",
  });
  drawLegend(svg, width - m.right - 110, m.top + 8,
    modes.map((name, k) => ({ label: name, color: PALETTE[k % PALETTE.length] })));
  return svg.toString();
}

function absMax(values: number[]): number {
  return values.reduce((acc, v) => Math.max(acc, Math.abs(v)), 0);
}

function positiveExtent(values: number[]): [number, number] {
  const positive = values.filter((v) => v > 0);
  if (positive.length === 0) throw new Error("no positive values for a log scale");
  const [lo, hi] = extent(positive);
  return [lo, hi === lo ? lo * 10 : hi];
}
