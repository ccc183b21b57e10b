/** The three 1D overlay figures, thin wrappers over profileFigure. */

import { readTable, Table } from "../csv.js";
import { artifactPath, Manifest } from "../manifest.js";
import { profileFigure } from "./profiles.js";

function presentArchs(table: Table): string[] {
  return ["mlp", "stencil"].filter((arch) => table.columns.includes(arch));
}

/** Patch-dynamics snapshots against the homogenized solution. */
export function figSnapshots(manifest: Manifest): string {
  const table = readTable(artifactPath(manifest, "figures/fig2_snapshots.csv"));
  return profileFigure(table, {
    solid: "homogenized",
    dashed: ["patch_dynamics"],
    title: "Patch dynamics vs homogenized solution",
    yLabel: "U",
  });
}

/** Recorded dU/dt against the learned predictions on a held-out run. */
export function figRhs(manifest: Manifest): string {
  const table = readTable(artifactPath(manifest, "figures/fig4_rhs.csv"));
  return profileFigure(table, {
    solid: "truth",
    dashed: presentArchs(table),
    title: "Held-out dU/dt: recorded vs learned",
    yLabel: "dU/dt",
  });
}

/** Learned model rollouts against the homogenized reference. */
export function figRollout(manifest: Manifest): string {
  const table = readTable(artifactPath(manifest, "figures/fig5_rollout.csv"));
  return profileFigure(table, {
    solid: "reference",
    dashed: presentArchs(table),
    title: "Learned rollout vs homogenized reference",
    yLabel: "U",
  });
}
