/** Typed access to the experiment's figure and metric CSV tables. */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export class ArtifactError extends Error {}

export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

/** Parse one artifact CSV; fails loudly on a missing or malformed file. */
export function readTable(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new ArtifactError(`missing artifact ${path}`);
  }
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    delimiter: ",",
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new ArtifactError(`${path}:${(e.row ?? 0) + 2}: ${e.message}`);
  }
  const columns = parsed.meta.fields ?? [];
  if (columns.length === 0) {
    throw new ArtifactError(`${path}: no header row`);
  }
  return { columns, rows: parsed.data };
}

/** Numeric column; every entry must parse to a finite number. */
export function numbers(table: Table, name: string): number[] {
  requireColumns(table, [name]);
  return table.rows.map((row, i) => {
    const v = Number(row[name]);
    if (!Number.isFinite(v)) {
      throw new ArtifactError(
        `column ${name} row ${i + 1}: not a number (${row[name]})`,
      );
    }
    return v;
  });
}

export function strings(table: Table, name: string): string[] {
  requireColumns(table, [name]);
  return table.rows.map((row) => row[name]);
}

export function requireColumns(table: Table, names: string[]): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new ArtifactError(
        `missing column ${name} (have ${table.columns.join(", ")})`,
      );
    }
  }
}

/** Distinct values in first-appearance order. */
export function distinct<T>(values: T[]): T[] {
  return [...new Set(values)];
}

/** Row indices where the named column equals the given value. */
export function indicesWhere(
  values: (string | number)[],
  value: string | number,
): number[] {
  const out: number[] = [];
  values.forEach((v, i) => {
    if (v === value) out.push(i);
  });
  return out;
}
