/** Render one figure family from an experiment artifact directory.
 *
 *   node dist/cli.js <family> --artifacts <dir> --out <file.svg>
 *
 * Families: snapshots, rhs, rollout, heatmap, error-scatter, mse,
 * modes.  Artifacts are hash-verified against manifest.json before
 * rendering; nothing is numerically recomputed here.
 */

import { writeFileSync } from "node:fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { ArtifactError } from "./csv.js";
import { loadManifest, Manifest } from "./manifest.js";
import { figRhs, figRollout, figSnapshots } from "./figures/overlays.js";
import {
  figErrorScatter,
  figHeatmap,
  figModeAmplitudes,
  figMseCurves,
} from "./figures/lattice.js";

export const FAMILIES: Record<string, (m: Manifest) => string> = {
  snapshots: figSnapshots,
  rhs: figRhs,
  rollout: figRollout,
  heatmap: figHeatmap,
  "error-scatter": figErrorScatter,
  mse: figMseCurves,
  modes: figModeAmplitudes,
};

export function renderFigure(
  family: string,
  artifactDir: string,
  outPath: string,
): void {
  const render = FAMILIES[family];
  if (!render) {
    throw new ArtifactError(
      `unknown figure family ${family} (have ${Object.keys(FAMILIES).join(", ")})`,
    );
  }
  const manifest = loadManifest(artifactDir);
  writeFileSync(outPath, render(manifest));
}

export function main(argv: string[]): number {
  try {
    const args = yargs(argv)
      .command("$0 <family>", "render one figure family to SVG", (y) =>
        y.positional("family", {
          type: "string",
          choices: Object.keys(FAMILIES),
          demandOption: true,
        }),
      )
      .option("artifacts", { type: "string", demandOption: true, describe: "experiment artifact directory" })
      .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
      .strict()
      .exitProcess(false)
      .fail((msg) => {
        throw new ArtifactError(msg);
      })
      .parseSync();
    renderFigure(args.family as string, args.artifacts, args.out);
    console.log(`wrote ${args.out}`);
    return 0;
  } catch (e) {
    if (e instanceof ArtifactError) {
      console.error(`artifact error: ${e.message}`);
      return 2;
    }
    throw e;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(hideBin(process.argv)));
}
