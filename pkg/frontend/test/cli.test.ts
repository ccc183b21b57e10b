import { existsSync, mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it, vi } from "vitest";

import { FAMILIES, main, renderFigure } from "../src/cli.js";
import { makeArtifacts, sampleFigureCsvs } from "./helpers.js";

const outFile = () => join(mkdtempSync(join(tmpdir(), "fig-")), "out.svg");

describe("renderFigure", () => {
  it("writes an SVG for every family", () => {
    const root = makeArtifacts(sampleFigureCsvs());
    for (const family of Object.keys(FAMILIES)) {
      const out = outFile();
      renderFigure(family, root, out);
      expect(existsSync(out)).toBe(true);
      expect(readFileSync(out, "utf-8")).toContain("<svg");
    }
  });

  it("rejects an unknown family", () => {
    expect(() => renderFigure("pie", makeArtifacts({}), outFile())).toThrow(
      /unknown figure family/,
    );
  });
});

describe("main", () => {
  it("returns 0 and reports the output path", () => {
    const root = makeArtifacts(sampleFigureCsvs());
    const out = outFile();
    const log = vi.spyOn(console, "log").mockImplementation(() => {});
    expect(main(["rollout", "--artifacts", root, "--out", out])).toBe(0);
    expect(log).toHaveBeenCalledWith(`wrote ${out}`);
    log.mockRestore();
  });

  it("returns 2 on a missing artifact directory", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    const code = main([
      "rollout",
      "--artifacts",
      "/nonexistent",
      "--out",
      outFile(),
    ]);
    expect(code).toBe(2);
    expect(err).toHaveBeenCalled();
    err.mockRestore();
  });

  it("returns 2 on a bad family name", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    const root = makeArtifacts(sampleFigureCsvs());
    expect(main(["pie", "--artifacts", root, "--out", outFile()])).toBe(2);
    err.mockRestore();
  });
});
