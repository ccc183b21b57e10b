import { mkdirSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";

import { sha256File } from "../src/manifest.js";

/** Build a temp artifact directory with a correctly hashed manifest. */
export function makeArtifacts(files: Record<string, string>): string {
  const root = mkdtempSync(join(tmpdir(), "artifacts-"));
  const entries: Record<string, { kind: string; sha256: string }> = {};
  for (const [rel, content] of Object.entries(files)) {
    const path = join(root, rel);
    mkdirSync(dirname(path), { recursive: true });
    writeFileSync(path, content);
    entries[rel] = { kind: "figure-data", sha256: sha256File(path) };
  }
  writeFileSync(
    join(root, "manifest.json"),
    JSON.stringify({ seed: 0, config: {}, entries }, null, 2),
  );
  return root;
}

/** Small but complete figure CSVs for every family. */
export function sampleFigureCsvs(): Record<string, string> {
  const grid = (header: string, value: (t: number, x: number) => string) => {
    const lines = [header];
    for (const t of [0, 0.5, 1]) {
      for (const x of [0.05, 0.35, 0.65, 0.95]) {
        lines.push(`${t},${x},${value(t, x)}`);
      }
    }
    return lines.join("\n") + "\n";
  };
  const profile = (t: number, x: number) =>
    Math.exp(-t) * Math.sin(Math.PI * x);
  const heatmap = ["i,j,U,dUdt_truth,dUdt_pred"];
  for (let i = 0; i < 4; i++) {
    for (let j = 0; j < 4; j++) {
      const v = Math.sin(i + j);
      heatmap.push(`${i},${j},${v},${-2 * v},${-2 * v + 0.01}`);
    }
  }
  const scatter = ["arch,trajectory,t,dudt_rms,relative_error"];
  const mse = ["arch,trajectory,t,mse"];
  for (const arch of ["mlp", "stencil"]) {
    for (const t of [0.1, 0.5, 1]) {
      scatter.push(`${arch},0,${t},${Math.exp(-t)},${0.01 * Math.exp(t)}`);
      mse.push(`${arch},0,${t},${1e-4 * Math.exp(-t)}`);
    }
  }
  const modes = ["t,mode,amplitude"];
  for (const t of [0, 0.5, 1]) {
    for (const mode of ["1-0", "0-1"]) {
      modes.push(`${t},${mode},${Math.exp(-t)}`);
    }
  }
  return {
    "figures/fig2_snapshots.csv": grid(
      "t,x,patch_dynamics,homogenized",
      (t, x) => `${profile(t, x) + 0.01},${profile(t, x)}`,
    ),
    "figures/fig4_rhs.csv": grid(
      "t,x,truth,mlp,stencil",
      (t, x) => `${-profile(t, x)},${-profile(t, x) + 0.01},${-profile(t, x)}`,
    ),
    "figures/fig5_rollout.csv": grid(
      "t,x,reference,mlp,stencil",
      (t, x) => `${profile(t, x)},${profile(t, x) + 0.01},${profile(t, x)}`,
    ),
    "figures/fig6_heatmap.csv": heatmap.join("\n") + "\n",
    "figures/fig6_error_scatter.csv": scatter.join("\n") + "\n",
    "figures/fig7a_mse.csv": mse.join("\n") + "\n",
    "figures/fig7b_modes.csv": modes.join("\n") + "\n",
  };
}
