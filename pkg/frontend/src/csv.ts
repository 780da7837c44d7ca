/** Parser for the export endpoint's CSV: one x column followed by one column
 * per run; blank cells mean the run has no row at that x value. */

export interface ParsedCsv {
  xColumn: string;
  runIds: string[];
  /** Per run id, the (x, y) points present in the file, in file order. */
  points: Map<string, Array<[number, number]>>;
}

export function parseExportCsv(text: string): ParsedCsv {
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines.length === 0) throw new Error("empty CSV");
  const header = lines[0].split(",");
  const [xColumn, ...runIds] = header;
  const points = new Map<string, Array<[number, number]>>(
    runIds.map((id) => [id, []]),
  );
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    if (cells.length !== header.length) {
      throw new Error(`malformed CSV row: ${line}`);
    }
    const x = Number(cells[0]);
    runIds.forEach((id, i) => {
      const cell = cells[i + 1];
      if (cell !== "") points.get(id)!.push([x, Number(cell)]);
    });
  }
  return { xColumn, runIds, points };
}
