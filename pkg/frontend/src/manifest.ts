/** Loading and hash verification of an experiment artifact directory. */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";
import { join } from "node:path";

import { ArtifactError } from "./csv.js";

export interface ManifestEntry {
  kind: string;
  sha256: string;
}

export interface Manifest {
  root: string;
  seed: number | null;
  config: Record<string, unknown>;
  entries: Record<string, ManifestEntry>;
}

export function loadManifest(artifactDir: string): Manifest {
  const path = join(artifactDir, "manifest.json");
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new ArtifactError(`missing manifest ${path}`);
  }
  let doc: { seed?: number; config?: Record<string, unknown>; entries?: Record<string, ManifestEntry> };
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new ArtifactError(`${path}: ${(e as Error).message}`);
  }
  if (!doc.entries || typeof doc.entries !== "object") {
    throw new ArtifactError(`${path}: no entries table`);
  }
  return {
    root: artifactDir,
    seed: doc.seed ?? null,
    config: doc.config ?? {},
    entries: doc.entries,
  };
}

export function sha256File(path: string): string {
  return createHash("sha256").update(readFileSync(path)).digest("hex");
}

/** Check the named artifacts exist and hash to their manifest entries. */
export function verifyArtifacts(manifest: Manifest, names: string[]): void {
  for (const name of names) {
    const entry = manifest.entries[name];
    if (!entry) {
      throw new ArtifactError(`artifact ${name} not listed in the manifest`);
    }
    const path = join(manifest.root, name);
    let digest: string;
    try {
      digest = sha256File(path);
    } catch {
      throw new ArtifactError(`artifact ${name} missing on disk`);
    }
    if (digest !== entry.sha256) {
      throw new ArtifactError(
        `artifact ${name} does not match its manifest hash`,
      );
    }
  }
}

/** Load, verify, and return the absolute path of one artifact. */
export function artifactPath(manifest: Manifest, name: string): string {
  verifyArtifacts(manifest, [name]);
  return join(manifest.root, name);
}
