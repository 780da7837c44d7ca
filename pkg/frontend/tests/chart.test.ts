import { describe, expect, it } from "vitest";

import { layoutChart, renderChart } from "../src/chart.js";

const OPTS = {
  width: 640, height: 320, logScale: false,
  xLabel: "round", yLabel: "f",
};

describe("layoutChart", () => {
  it("keeps every point on a linear scale", () => {
    const layout = layoutChart(
      [{ id: "a", label: "a", points: [[0, -1], [1, 0], [2, 1]] }], OPTS);
    expect(layout.droppedPoints).toBe(0);
    expect(layout.series[0].points).toEqual([[0, -1], [1, 0], [2, 1]]);
    expect(layout.series[0].path.startsWith("M")).toBe(true);
  });

  it("drops non-positive values on a log scale and counts them", () => {
    const layout = layoutChart(
      [{ id: "a", label: "a", points: [[0, 1], [1, 0], [2, -3], [3, 0.5]] }],
      { ...OPTS, logScale: true });
    expect(layout.droppedPoints).toBe(2);
    expect(layout.series[0].points).toEqual([[0, 1], [3, 0.5]]);
  });

  it("preserves the caller's series order (legend reorder)", () => {
    const series = [
      { id: "b", label: "b", points: [[0, 2]] as Array<[number, number]> },
      { id: "a", label: "a", points: [[0, 1]] as Array<[number, number]> },
    ];
    const layout = layoutChart(series, OPTS);
    expect(layout.series.map((s) => s.id)).toEqual(["b", "a"]);
    expect(layout.series[0].color).not.toBe(layout.series[1].color);
  });

  it("maps larger y to smaller pixel y (SVG orientation)", () => {
    const layout = layoutChart(
      [{ id: "a", label: "a", points: [[0, 0], [1, 10]] }], OPTS);
    const [m, l] = layout.series[0].path.slice(1).split("L");
    const y0 = Number(m.split(",")[1]);
    const y1 = Number(l.split(",")[1]);
    expect(y1).toBeLessThan(y0);
  });
});

describe("renderChart", () => {
  it("renders one SVG path per non-empty series", () => {
    const container = document.createElement("div");
    renderChart(container, [
      { id: "a", label: "a", points: [[0, 1], [1, 2]] },
      { id: "b", label: "b", points: [[0, 3], [1, 1]] },
      { id: "empty", label: "empty", points: [] },
    ], OPTS);
    const paths = container.querySelectorAll("path[data-series]");
    expect(paths.length).toBe(2);
    expect(container.querySelector("svg")).not.toBeNull();
  });
});
