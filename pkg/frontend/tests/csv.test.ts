import { describe, expect, it } from "vitest";

import { parseExportCsv } from "../src/csv.js";

describe("parseExportCsv", () => {
  it("parses a two-run export with blank cells", () => {
    const text = "rounds,runA,runB\n0,1.5,2.5\n1,,2.0\n2,0.5,\n";
    const parsed = parseExportCsv(text);
    expect(parsed.xColumn).toBe("rounds");
    expect(parsed.runIds).toEqual(["runA", "runB"]);
    expect(parsed.points.get("runA")).toEqual([[0, 1.5], [2, 0.5]]);
    expect(parsed.points.get("runB")).toEqual([[0, 2.5], [1, 2.0]]);
  });

  it("round-trips exact float representations", () => {
    const y = 9.077046874999999e-17;
    const parsed = parseExportCsv(`rounds,r\n99,${y}\n`);
    expect(parsed.points.get("r")).toEqual([[99, y]]);
  });

  it("rejects ragged rows and empty input", () => {
    expect(() => parseExportCsv("rounds,a\n0,1,2\n")).toThrow(/malformed/);
    expect(() => parseExportCsv("")).toThrow(/empty/);
  });
});
