/** Dependency-free SVG line chart. Layout computation is a pure function so
 * tests can assert exactly which points are plotted (and which a log scale
 * drops) without a rendering pass. */

export interface Series {
  id: string;
  label: string;
  points: Array<[number, number]>;
}

export interface ChartOptions {
  width: number;
  height: number;
  logScale: boolean;
  xLabel: string;
  yLabel: string;
}

export interface LaidOutSeries {
  id: string;
  label: string;
  color: string;
  /** Data-space points that survived scale filtering, in draw order. */
  points: Array<[number, number]>;
  /** SVG path in pixel space, empty when no points survive. */
  path: string;
}

export interface ChartLayout {
  series: LaidOutSeries[];
  droppedPoints: number;
  xTicks: Array<{ pixel: number; label: string }>;
  yTicks: Array<{ pixel: number; label: string }>;
}

export const PALETTE = [
  "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const MARGIN = { top: 12, right: 16, bottom: 34, left: 64 };

function niceTicks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) return [lo];
  const step = Math.pow(10, Math.floor(Math.log10((hi - lo) / count)));
  const mult = [1, 2, 5, 10].find((m) => (hi - lo) / (step * m) <= count) ?? 10;
  const s = step * mult;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * s; v += s) {
    ticks.push(v);
  }
  return ticks;
}

function formatTick(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1e5 || abs < 1e-3) return value.toExponential(0);
  return String(Number(value.toPrecision(6)));
}

export function layoutChart(seriesList: Series[], opts: ChartOptions,
): ChartLayout {
  let dropped = 0;
  const kept = seriesList.map((s) => ({
    ...s,
    points: s.points.filter(([, y]) => {
      const ok = !opts.logScale || y > 0;
      if (!ok) dropped += 1;
      return ok;
    }),
  }));

  const all = kept.flatMap((s) => s.points);
  const xs = all.map(([x]) => x);
  const ys = all.map(([, y]) => (opts.logScale ? Math.log10(y) : y));
  const xLo = Math.min(...xs, 0);
  const xHi = Math.max(...xs, 1);
  let yLo = ys.length ? Math.min(...ys) : 0;
  let yHi = ys.length ? Math.max(...ys) : 1;
  if (yHi === yLo) {
    yLo -= 0.5;
    yHi += 0.5;
  }

  const plotW = opts.width - MARGIN.left - MARGIN.right;
  const plotH = opts.height - MARGIN.top - MARGIN.bottom;
  const px = (x: number) =>
    MARGIN.left + ((x - xLo) / (xHi - xLo || 1)) * plotW;
  const py = (y: number) =>
    MARGIN.top + plotH - ((y - yLo) / (yHi - yLo)) * plotH;
  const yv = (y: number) => (opts.logScale ? Math.log10(y) : y);

  const series = kept.map((s, i) => ({
    id: s.id,
    label: s.label,
    color: PALETTE[i % PALETTE.length],
    points: s.points,
    path: s.points
      .map(([x, y], j) =>
        `${j === 0 ? "M" : "L"}${px(x).toFixed(1)},${py(yv(y)).toFixed(1)}`)
      .join(""),
  }));

  const xTicks = niceTicks(xLo, xHi, 6).map((v) => ({
    pixel: px(v), label: formatTick(v),
  }));
  const yTicks = (opts.logScale
    ? niceTicks(yLo, yHi, 6).map((e) => ({
        pixel: py(e), label: `1e${formatTick(e)}`,
      }))
    : niceTicks(yLo, yHi, 6).map((v) => ({
        pixel: py(v), label: formatTick(v),
      })));

  return { series, droppedPoints: dropped, xTicks, yTicks };
}

export function renderChart(container: HTMLElement, seriesList: Series[],
                            opts: ChartOptions): ChartLayout {
  const layout = layoutChart(seriesList, opts);
  const { width, height } = opts;
  const parts: string[] = [];
  parts.push(
    `<svg viewBox="0 0 ${width} ${height}" class="chart" role="img">`);
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" ` +
    `width="${width - MARGIN.left - MARGIN.right}" ` +
    `height="${height - MARGIN.top - MARGIN.bottom}" class="chart-bg"/>`);
  for (const tick of layout.yTicks) {
    parts.push(
      `<line x1="${MARGIN.left}" x2="${width - MARGIN.right}" ` +
      `y1="${tick.pixel}" y2="${tick.pixel}" class="gridline"/>`);
    parts.push(
      `<text x="${MARGIN.left - 6}" y="${tick.pixel + 4}" ` +
      `text-anchor="end" class="tick">${tick.label}</text>`);
  }
  for (const tick of layout.xTicks) {
    parts.push(
      `<text x="${tick.pixel}" y="${height - MARGIN.bottom + 16}" ` +
      `text-anchor="middle" class="tick">${tick.label}</text>`);
  }
  for (const s of layout.series) {
    if (s.path) {
      parts.push(
        `<path d="${s.path}" fill="none" stroke="${s.color}" ` +
        `stroke-width="1.6" data-series="${s.id}"/>`);
    }
  }
  parts.push(
    `<text x="${width / 2}" y="${height - 4}" text-anchor="middle" ` +
    `class="axis-label">${opts.xLabel}</text>`);
  parts.push(
    `<text x="12" y="${height / 2}" text-anchor="middle" class="axis-label" ` +
    `transform="rotate(-90 12 ${height / 2})">${opts.yLabel}</text>`);
  parts.push("</svg>");
  container.innerHTML = parts.join("");
  return layout;
}
