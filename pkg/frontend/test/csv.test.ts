import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  ArtifactError,
  distinct,
  indicesWhere,
  numbers,
  readTable,
  requireColumns,
  strings,
} from "../src/csv.js";

function writeCsv(content: string): string {
  const dir = mkdtempSync(join(tmpdir(), "csv-"));
  const path = join(dir, "table.csv");
  writeFileSync(path, content);
  return path;
}

describe("readTable", () => {
  it("parses header and rows", () => {
    const table = readTable(writeCsv("t,x,U\n0,0.05,1.5\n0,0.15,2.5\n"));
    expect(table.columns).toEqual(["t", "x", "U"]);
    expect(table.rows).toHaveLength(2);
    expect(numbers(table, "U")).toEqual([1.5, 2.5]);
  });

  it("fails on a missing file", () => {
    expect(() => readTable("/nonexistent/table.csv")).toThrow(ArtifactError);
  });

  it("fails on a ragged row with its location", () => {
    const path = writeCsv("a,b\n1,2\n3\n");
    expect(() => readTable(path)).toThrow(/:3:/);
  });

  it("round-trips scientific notation exactly", () => {
    const table = readTable(writeCsv("v\n1.2345678901234567e-08\n"));
    expect(numbers(table, "v")[0]).toBe(1.2345678901234567e-8);
  });
});

describe("column access", () => {
  const table = readTable(writeCsv("arch,rmse\nmlp,0.01\nstencil,0.02\n"));

  it("reads string columns", () => {
    expect(strings(table, "arch")).toEqual(["mlp", "stencil"]);
  });

  it("rejects a missing column by name", () => {
    expect(() => numbers(table, "loss")).toThrow(/missing column loss/);
    expect(() => requireColumns(table, ["arch", "loss"])).toThrow(ArtifactError);
  });

  it("rejects non-numeric entries", () => {
    expect(() => numbers(table, "arch")).toThrow(/not a number/);
  });
});

describe("helpers", () => {
  it("distinct keeps first-appearance order", () => {
    expect(distinct([3, 1, 3, 2, 1])).toEqual([3, 1, 2]);
  });

  it("indicesWhere finds matching rows", () => {
    expect(indicesWhere(["a", "b", "a"], "a")).toEqual([0, 2]);
    expect(indicesWhere([1, 2], 3)).toEqual([]);
  });
});
