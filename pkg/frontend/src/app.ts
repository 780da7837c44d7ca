/** Application shell: configure / progress / analysis tabs over the API.
 * The UI keeps no state the API cannot reconstruct — a reload rebuilds every
 * view from `GET /experiments` and per-run fetches. */

import { ApiClient, ApiError } from "./api.js";
import { renderChart, PALETTE, Series } from "./chart.js";
import { parseExportCsv } from "./csv.js";
import { RunPoller } from "./poller.js";
import {
  MetricsRow, RunConfig, RunSummary, XAxis, X_AXES, YAxis, Y_AXES, YScale,
  ALGORITHMS, defaultConfig, isTerminal,
} from "./types.js";
import { validateConfig } from "./validate.js";

type Tab = "configure" | "progress" | "analysis";

interface FieldSpec {
  path: string; // e.g. "global_lr" or "problem.d"
  label: string;
  kind: "int" | "float" | "text" | "select";
  options?: readonly string[];
  nullable?: boolean; // empty input -> null
}

const FORM_GROUPS: Array<{ title: string; fields: FieldSpec[] }> = [
  {
    title: "Server Optimizer",
    fields: [
      { path: "algorithm", label: "algorithm", kind: "select", options: ALGORITHMS },
      { path: "rounds", label: "rounds", kind: "int" },
      { path: "global_lr", label: "global lr", kind: "float" },
      { path: "clients_per_round", label: "clients per round", kind: "int", nullable: true },
      { path: "compressor", label: "compressor", kind: "text" },
      { path: "compressor_down", label: "downlink compressor", kind: "text", nullable: true },
      { path: "marina_p", label: "marina p", kind: "float" },
      { path: "diana_alpha", label: "diana alpha", kind: "float" },
      { path: "shift_init", label: "shift init", kind: "select", options: ["zero", "fullgrad"] },
    ],
  },
  {
    title: "Local Optimizer",
    fields: [
      { path: "local_lr", label: "local lr", kind: "float" },
      { path: "local_steps", label: "local steps", kind: "int" },
      { path: "local_epochs", label: "local epochs", kind: "int", nullable: true },
      { path: "prox_mu", label: "prox mu", kind: "float" },
      { path: "oracle", label: "gradient oracle", kind: "text" },
    ],
  },
  {
    title: "Model and Data",
    fields: [
      { path: "problem.family", label: "family", kind: "select", options: ["quad", "logreg"] },
      { path: "problem.d", label: "dimension d", kind: "int" },
      { path: "problem.clients", label: "clients", kind: "int" },
      { path: "problem.samples", label: "samples per client", kind: "int" },
      { path: "problem.split", label: "split", kind: "select", options: ["iid", "noniid"] },
      { path: "problem.mu", label: "mu", kind: "float" },
      { path: "problem.L", label: "L", kind: "float" },
      { path: "problem.l2", label: "l2", kind: "float" },
      { path: "problem.noise", label: "noise", kind: "float" },
      { path: "problem.seed", label: "problem seed", kind: "int", nullable: true },
      { path: "problem.weights", label: "weights", kind: "select", options: ["uniform", "by-dataset-size"] },
    ],
  },
  {
    title: "System Setup",
    fields: [
      { path: "seed", label: "run seed", kind: "int" },
      { path: "threads", label: "threads", kind: "int" },
      { path: "eval_every", label: "eval every", kind: "int" },
      { path: "group", label: "group", kind: "text", nullable: true },
      { path: "comment", label: "comment", kind: "text", nullable: true },
    ],
  },
];

function getPath(config: RunConfig, path: string): unknown {
  return path.split(".").reduce(
    (obj: any, key) => obj[key], config as any);
}

function setPath(config: RunConfig, path: string, value: unknown): void {
  const keys = path.split(".");
  const last = keys.pop()!;
  const target = keys.reduce((obj: any, key) => obj[key], config as any);
  target[last] = value;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  readonly config: RunConfig = defaultConfig();
  private readonly pollers = new Map<string, RunPoller>();
  private monitorRows: MetricsRow[] = [];
  private monitorId: string | null = null;
  private summaries: RunSummary[] = [];
  private legendOrder: string[] = [];
  private listTimer: ReturnType<typeof setInterval> | null = null;

  private readonly tabs: Record<Tab, HTMLElement>;
  private readonly tabButtons: Record<Tab, HTMLButtonElement>;

  constructor(private readonly root: HTMLElement,
              readonly api: ApiClient,
              private readonly confirmFn: (msg: string) => boolean =
                (msg) => window.confirm(msg)) {
    root.innerHTML = "";
    const nav = el("nav", { class: "tabs" });
    this.tabButtons = {} as Record<Tab, HTMLButtonElement>;
    this.tabs = {} as Record<Tab, HTMLElement>;
    for (const tab of ["configure", "progress", "analysis"] as Tab[]) {
      const btn = el("button", { class: "tab-btn", "data-tab": tab }, tab);
      btn.addEventListener("click", () => this.showTab(tab));
      nav.appendChild(btn);
      this.tabButtons[tab] = btn;
      const pane = el("section", { class: "pane", "data-pane": tab });
      this.tabs[tab] = pane;
    }
    root.appendChild(nav);
    for (const pane of Object.values(this.tabs)) root.appendChild(pane);

    this.buildConfigure();
    this.buildProgress();
    this.buildAnalysis();
    this.showTab((location.hash.slice(1) as Tab) || "configure");
  }

  async start(): Promise<void> {
    await this.refreshList();
    this.listTimer = setInterval(() => void this.refreshList(), 2000);
  }

  destroy(): void {
    if (this.listTimer !== null) clearInterval(this.listTimer);
    for (const poller of this.pollers.values()) poller.stop();
    this.pollers.clear();
  }

  showTab(tab: Tab): void {
    if (!(tab in this.tabs)) tab = "configure";
    for (const [name, pane] of Object.entries(this.tabs)) {
      pane.classList.toggle("active", name === tab);
      this.tabButtons[name as Tab].classList.toggle("active", name === tab);
    }
    location.hash = tab;
  }

  // ------------------------------------------------------------------ form

  private buildConfigure(): void {
    const pane = this.tabs.configure;
    const form = el("form", { class: "config-form", novalidate: "" });
    for (const group of FORM_GROUPS) {
      const fieldset = el("fieldset");
      fieldset.appendChild(el("legend", {}, group.title));
      for (const spec of group.fields) {
        const row = el("label", { class: "field" });
        row.appendChild(el("span", {}, spec.label));
        let input: HTMLInputElement | HTMLSelectElement;
        if (spec.kind === "select") {
          input = el("select", { name: spec.path });
          for (const opt of spec.options!) {
            input.appendChild(el("option", { value: opt }, opt));
          }
        } else {
          input = el("input", { name: spec.path, type: "text" });
        }
        const current = getPath(this.config, spec.path);
        input.value = current === null ? "" : String(current);
        input.addEventListener("input", () => {
          this.readField(spec, input.value);
          this.revalidate();
        });
        row.appendChild(input);
        fieldset.appendChild(row);
      }
      form.appendChild(fieldset);
    }
    const errors = el("ul", { class: "form-errors" });
    const launch = el("button", { type: "submit", class: "launch" }, "Launch");
    const note = el("p", { class: "launch-note" });
    form.appendChild(errors);
    form.appendChild(launch);
    form.appendChild(note);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.launch(note);
    });
    pane.appendChild(form);
    this.revalidate();
  }

  private readField(spec: FieldSpec, raw: string): void {
    const text = raw.trim();
    if (text === "" && spec.nullable) {
      setPath(this.config, spec.path, null);
      return;
    }
    let value: unknown = text;
    if (spec.kind === "int" || spec.kind === "float") {
      value = text === "" ? NaN : Number(text);
    }
    setPath(this.config, spec.path, value);
  }

  revalidate(): string[] {
    const errors = validateConfig(this.config);
    const list = this.root.querySelector(".form-errors")!;
    list.innerHTML = "";
    for (const err of errors) {
      list.appendChild(el("li", {}, `${err.field}: ${err.message}`));
    }
    const launch =
      this.root.querySelector<HTMLButtonElement>("button.launch")!;
    launch.disabled = errors.length > 0;
    return errors.map((e) => e.field);
  }

  private async launch(note: HTMLElement): Promise<void> {
    if (validateConfig(this.config).length > 0) return;
    try {
      const { id } = await this.api.launch(
        JSON.parse(JSON.stringify(this.config)));
      note.textContent = `launched ${id}`;
      await this.refreshList();
      this.selectRun(id);
      this.showTab("progress");
    } catch (err) {
      note.textContent =
        err instanceof ApiError ? `rejected: ${err.message}` : String(err);
    }
  }

  // -------------------------------------------------------------- progress

  private buildProgress(): void {
    const pane = this.tabs.progress;
    const layout = el("div", { class: "split" });
    const list = el("ul", { class: "run-list" });
    const detail = el("div", { class: "run-detail" });
    detail.appendChild(el("p", { class: "hint" }, "select a run"));
    layout.appendChild(list);
    layout.appendChild(detail);
    pane.appendChild(layout);
  }

  async refreshList(): Promise<void> {
    try {
      this.summaries = await this.api.list();
    } catch {
      return; // transient; next poll retries
    }
    this.renderRunList();
    this.renderAnalysisRuns();
  }

  private renderRunList(): void {
    const list = this.tabs.progress.querySelector(".run-list")!;
    list.innerHTML = "";
    for (const summary of this.summaries) {
      const item = el("li", { class: "run-item", "data-run": summary.id });
      const badge = el("span",
        { class: `badge badge-${summary.status}` }, summary.status);
      item.appendChild(badge);
      item.appendChild(el("span", { class: "run-title" },
        `${summary.id} — ${summary.algorithm} / ${summary.compressor}`));
      item.appendChild(el("span", { class: "run-meta" },
        `${summary.rounds_done} rows`));
      item.addEventListener("click", () => this.selectRun(summary.id));
      list.appendChild(item);
    }
  }

  selectRun(id: string): void {
    if (this.monitorId !== null) {
      this.pollers.get(this.monitorId)?.stop();
      this.pollers.delete(this.monitorId);
    }
    this.monitorId = id;
    this.monitorRows = [];

    const detail = this.tabs.progress.querySelector(".run-detail")!;
    detail.innerHTML = "";
    const head = el("div", { class: "detail-head" });
    head.appendChild(el("strong", {}, id));
    const status = el("span", { class: "badge", "data-role": "status" }, "…");
    head.appendChild(status);
    const stopBtn = el("button", { class: "stop" }, "Stop");
    stopBtn.addEventListener("click", () => {
      if (this.confirmFn(`Stop run ${id}?`)) void this.api.stop(id);
    });
    head.appendChild(stopBtn);
    const cliBtn = el("button", { class: "copy-cli" }, "Copy CLI");
    const cliOut = el("code", { class: "cli-line" });
    cliBtn.addEventListener("click", () => void this.showCli(id, cliOut));
    head.appendChild(cliBtn);
    detail.appendChild(head);
    detail.appendChild(cliOut);
    const chart = el("div", { class: "monitor-chart" });
    detail.appendChild(chart);
    const errorNote = el("p", { class: "run-error" });
    detail.appendChild(errorNote);

    const poller = new RunPoller(this.api, id, {
      onRows: (rows) => {
        this.monitorRows.push(...rows); // append-only: no history refetch
        this.renderMonitorChart(chart);
      },
      onStatus: (st, error) => {
        status.textContent = st;
        status.className = `badge badge-${st}`;
        errorNote.textContent = error ?? "";
        stopBtn.disabled = isTerminal(st);
      },
    });
    this.pollers.set(id, poller);
    poller.start();
  }

  private async showCli(id: string, out: HTMLElement): Promise<void> {
    const line = await this.api.cli(id);
    out.textContent = line;
    try {
      await navigator.clipboard.writeText(line);
    } catch {
      /* clipboard unavailable: the line stays visible for manual copy */
    }
  }

  private renderMonitorChart(container: HTMLElement): void {
    const series: Series[] = [{
      id: this.monitorId ?? "run",
      label: "‖∇F‖",
      points: this.monitorRows.map(
        (r) => [r.round, r.grad_norm_global] as [number, number]),
    }];
    renderChart(container, series, {
      width: 640, height: 320, logScale: true,
      xLabel: "round", yLabel: "grad norm",
    });
  }

  get monitorRowCount(): number {
    return this.monitorRows.length;
  }

  // -------------------------------------------------------------- analysis

  private buildAnalysis(): void {
    const pane = this.tabs.analysis;
    const controls = el("div", { class: "analysis-controls" });

    const runBox = el("div", { class: "analysis-runs" });
    controls.appendChild(runBox);

    const axes = el("div", { class: "axes" });
    const xSel = el("select", { "data-role": "x-axis" });
    for (const axis of X_AXES) xSel.appendChild(el("option", { value: axis }, axis));
    const ySel = el("select", { "data-role": "y-axis" });
    for (const axis of Y_AXES) ySel.appendChild(el("option", { value: axis }, axis));
    ySel.value = "grad_norm";
    const logToggle = el("input", { type: "checkbox", "data-role": "log" });
    const logLabel = el("label", {}, "log scale ");
    logLabel.prepend(logToggle);
    axes.appendChild(xSel);
    axes.appendChild(ySel);
    axes.appendChild(logLabel);
    controls.appendChild(axes);

    const plotBtn = el("button", { class: "plot", disabled: "" }, "Plot");
    const download = el("a", { class: "download", download: "export.csv" },
      "Download CSV");
    const droppedNote = el("p", { class: "dropped-note" });
    controls.appendChild(plotBtn);
    controls.appendChild(download);
    pane.appendChild(controls);
    const legend = el("ol", { class: "legend" });
    pane.appendChild(legend);
    const chart = el("div", { class: "analysis-chart" });
    pane.appendChild(chart);
    pane.appendChild(droppedNote);

    plotBtn.addEventListener("click", () => void this.plot());
    const update = () => void this.plot();
    xSel.addEventListener("change", update);
    ySel.addEventListener("change", update);
    logToggle.addEventListener("change", update);
  }

  private renderAnalysisRuns(): void {
    const box = this.tabs.analysis.querySelector(".analysis-runs")!;
    const checked = new Set(this.legendOrder);
    box.innerHTML = "";
    for (const summary of this.summaries) {
      const label = el("label", { class: "run-check" });
      const input = el("input",
        { type: "checkbox", value: summary.id }) as HTMLInputElement;
      input.checked = checked.has(summary.id);
      input.addEventListener("change", () => {
        if (input.checked) this.legendOrder.push(summary.id);
        else this.legendOrder = this.legendOrder.filter((x) => x !== summary.id);
        this.renderLegend();
        this.updatePlotButton();
      });
      label.appendChild(input);
      label.appendChild(el("span", {},
        `${summary.id} (${summary.algorithm} / ${summary.compressor})`));
      box.appendChild(label);
    }
    this.renderLegend();
    this.updatePlotButton();
  }

  private updatePlotButton(): void {
    const btn = this.tabs.analysis.querySelector<HTMLButtonElement>(".plot")!;
    btn.disabled = this.legendOrder.length === 0;
  }

  private labelFor(id: string): string {
    const summary = this.summaries.find((s) => s.id === id);
    return summary
      ? `${id} — ${summary.algorithm} / ${summary.compressor}`
      : id;
  }

  private renderLegend(): void {
    const legend = this.tabs.analysis.querySelector(".legend")!;
    legend.innerHTML = "";
    this.legendOrder.forEach((id, index) => {
      const item = el("li", { "data-run": id });
      const swatch = el("span", { class: "swatch" });
      swatch.style.background = PALETTE[index % PALETTE.length];
      item.appendChild(swatch);
      item.appendChild(el("span", {}, this.labelFor(id)));
      const up = el("button", { class: "reorder-up" }, "↑");
      up.disabled = index === 0;
      up.addEventListener("click", () => this.reorder(index, index - 1));
      const down = el("button", { class: "reorder-down" }, "↓");
      down.disabled = index === this.legendOrder.length - 1;
      down.addEventListener("click", () => this.reorder(index, index + 1));
      item.appendChild(up);
      item.appendChild(down);
      legend.appendChild(item);
    });
  }

  reorder(from: number, to: number): void {
    const [id] = this.legendOrder.splice(from, 1);
    this.legendOrder.splice(to, 0, id);
    this.renderLegend();
    void this.plot();
  }

  get legend(): readonly string[] {
    return this.legendOrder;
  }

  setLegend(ids: string[]): void {
    this.legendOrder = [...ids];
    this.renderLegend();
    this.updatePlotButton();
  }

  async plot(): Promise<void> {
    if (this.legendOrder.length === 0) return;
    const pane = this.tabs.analysis;
    const x = pane.querySelector<HTMLSelectElement>(
      "[data-role=x-axis]")!.value as XAxis;
    const y = pane.querySelector<HTMLSelectElement>(
      "[data-role=y-axis]")!.value as YAxis;
    const log = pane.querySelector<HTMLInputElement>("[data-role=log]")!.checked;
    const scale: YScale = log ? "log" : "linear";

    // the chart is always a view of the export endpoint's CSV
    const ids = [...this.legendOrder];
    const result = await this.api.export(ids, x, y, scale);
    const parsed = parseExportCsv(result.csv);
    const series: Series[] = ids.map((id) => ({
      id,
      label: this.labelFor(id),
      points: parsed.points.get(id) ?? [],
    }));
    const layout = renderChart(
      pane.querySelector<HTMLElement>(".analysis-chart")!, series, {
        width: 760, height: 380, logScale: log,
        xLabel: x, yLabel: y,
      });
    const note = pane.querySelector(".dropped-note")!;
    note.textContent = result.droppedPoints > 0 || layout.droppedPoints > 0
      ? `${Math.max(result.droppedPoints, layout.droppedPoints)} non-positive ` +
        "points hidden by the log scale"
      : "";
    const download = pane.querySelector<HTMLAnchorElement>(".download")!;
    download.href = this.api.exportUrl(ids, x, y, scale);
  }
}
