/** Minimal reader for the harness CSV contract: a header row of column
 * names followed by numeric rows ("nan" allowed). */

export interface Table {
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV: no header row");
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows = lines.slice(1).map((line, r) => {
    const cells = line.split(",");
    if (cells.length !== columns.length) {
      throw new Error(`row ${r + 1}: expected ${columns.length} cells, got ${cells.length}`);
    }
    return cells.map(Number);
  });
  return { columns, rows };
}

export function requireColumn(table: Table, name: string): number {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new Error(`missing column "${name}" (have: ${table.columns.join(", ")})`);
  }
  return idx;
}

export function column(table: Table, name: string): number[] {
  const idx = requireColumn(table, name);
  return table.rows.map((r) => r[idx]);
}
