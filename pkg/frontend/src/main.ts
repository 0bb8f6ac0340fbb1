/**
 * DOM wiring for the what-if explorer: schema-driven form, per-scenario
 * survival chart with credible band, and shared-seed comparison.
 */

import {
  ApiError,
  getSchema,
  predict,
  predictBatch,
  resolveBaseUrl,
  type CurveResponse,
  type PredictRequest,
  type SchemaResponse,
} from "./api.js";
import {
  bandPath,
  curvePath,
  DEFAULT_LAYOUT,
  HORIZON_DAYS,
  horizonMarker,
  isMonotoneNonIncreasing,
  scenarioColor,
  thresholdLineY,
  THRESHOLD_REFERENCE,
  xScale,
  yScale,
} from "./chart.js";
import {
  buildFormModel,
  defaultInputs,
  validateInputs,
  type FormField,
} from "./form.js";
import {
  comparisonTable,
  formatDelta,
  ScenarioStore,
  SCENARIO_CAP,
  type Scenario,
} from "./scenarios.js";

const base = resolveBaseUrl(window.location.search, window.location.origin);
const store = new ScenarioStore();
let fields: FormField[] = [];
let activeId: number | null = null;
let compareMode = false;

const el = {
  banner: byId("banner"),
  form: byId("covariate-form"),
  scenarioList: byId("scenario-list"),
  chart: byId("chart"),
  readout: byId("readout"),
  warnings: byId("warnings"),
  compare: byId("compare-table"),
  addButton: byId("add-scenario") as HTMLButtonElement,
  runButton: byId("run-scenario") as HTMLButtonElement,
  compareButton: byId("compare-button") as HTMLButtonElement,
};

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function showBanner(message: string, retry: (() => void) | null): void {
  el.banner.replaceChildren();
  el.banner.classList.remove("hidden");
  const text = document.createElement("span");
  text.textContent = message;
  el.banner.appendChild(text);
  if (retry) {
    const button = document.createElement("button");
    button.textContent = "Retry";
    button.addEventListener("click", retry);
    el.banner.appendChild(button);
  }
}

function clearBanner(): void {
  el.banner.classList.add("hidden");
  el.banner.replaceChildren();
}

async function boot(): Promise<void> {
  let schema: SchemaResponse;
  try {
    schema = await getSchema(base);
  } catch (error) {
    showBanner(`Cannot reach the prediction service at ${base}: ${String(error)}`, () => {
      void boot();
    });
    return;
  }
  clearBanner();
  fields = buildFormModel(schema);
  renderForm(defaultInputs(fields));
  const first = store.add(readInputs());
  if (first) {
    activeId = first.id;
    renderScenarios();
    void runScenario(first.id);
  }
}

function renderForm(values: Record<string, string>): void {
  el.form.replaceChildren();
  for (const field of fields) {
    const row = document.createElement("label");
    row.className = "field";
    const caption = document.createElement("span");
    caption.textContent = field.name;
    row.appendChild(caption);
    let input: HTMLInputElement | HTMLSelectElement;
    if (field.control === "select") {
      input = document.createElement("select");
      for (const option of field.options) {
        const node = document.createElement("option");
        node.value = option;
        node.textContent = option;
        input.appendChild(node);
      }
    } else {
      input = document.createElement("input");
      if (field.control === "typeahead") {
        const listId = `options-${field.name}`;
        input.setAttribute("list", listId);
        const datalist = document.createElement("datalist");
        datalist.id = listId;
        for (const option of field.options) {
          const node = document.createElement("option");
          node.value = option;
          datalist.appendChild(node);
        }
        row.appendChild(datalist);
      } else {
        input.type = "text";
        input.inputMode = "decimal";
      }
    }
    input.name = field.name;
    input.value = values[field.name] ?? String(field.defaultValue);
    input.addEventListener("change", () => {
      if (activeId !== null) syncActiveScenario();
    });
    row.appendChild(input);
    const message = document.createElement("em");
    message.className = "field-error hidden";
    message.dataset["field"] = field.name;
    row.appendChild(message);
    el.form.appendChild(row);
  }
}

function readInputs(): Record<string, string> {
  const raw: Record<string, string> = {};
  el.form
    .querySelectorAll<HTMLInputElement | HTMLSelectElement>("input, select")
    .forEach((node) => {
      raw[node.name] = node.value;
    });
  return raw;
}

function showFieldErrors(errors: Record<string, string>): void {
  el.form.querySelectorAll<HTMLElement>(".field-error").forEach((node) => {
    const name = node.dataset["field"] ?? "";
    const message = errors[name];
    node.textContent = message ?? "";
    node.classList.toggle("hidden", !message);
  });
}

function syncActiveScenario(): void {
  if (activeId === null) return;
  const check = validateInputs(fields, readInputs());
  showFieldErrors(check.errors);
  if (check.ok) store.setCovariates(activeId, check.values);
}

async function runScenario(id: number): Promise<void> {
  const check = validateInputs(fields, readInputs());
  showFieldErrors(check.errors);
  if (!check.ok) return; // no request leaves the browser on bad input
  store.setCovariates(id, check.values);
  const token = store.beginRequest(id);
  renderScenarios();
  try {
    const curve = await predict(base, { covariates: check.values });
    if (store.applyCurve(id, token, curve)) {
      compareMode = false;
      render();
    }
  } catch (error) {
    if (error instanceof ApiError) {
      store.applyError(id, token, error.message, error.fieldErrors);
      showFieldErrors(error.fieldErrors);
    } else {
      store.applyError(id, token, String(error));
      showBanner(`Prediction failed: ${String(error)}`, null);
    }
    render();
  }
}

async function compareScenarios(): Promise<void> {
  const scenarios = [...store.list()];
  if (scenarios.length < 2) return;
  const sharedSeed = Math.floor(Math.random() * 2 ** 31);
  const requests: PredictRequest[] = scenarios.map((s) => ({
    covariates: s.covariates,
    seed: sharedSeed,
  }));
  const tokens = scenarios.map((s) => store.beginRequest(s.id));
  try {
    const items = await predictBatch(base, requests);
    items.forEach((item, index) => {
      const scenario = scenarios[index]!;
      const token = tokens[index]!;
      if ("error" in item) {
        const messages = Object.entries(item.error.errors)
          .map(([field, message]) => `${field}: ${message}`)
          .join("; ");
        store.applyError(scenario.id, token, messages || "request failed");
      } else {
        store.applyCurve(scenario.id, token, item);
      }
    });
    compareMode = true;
    render();
  } catch (error) {
    showBanner(`Comparison failed: ${String(error)}`, null);
  }
}

function renderScenarios(): void {
  el.scenarioList.replaceChildren();
  store.list().forEach((scenario, index) => {
    const chip = document.createElement("div");
    chip.className = "chip" + (scenario.id === activeId ? " active" : "");
    chip.style.borderColor = scenarioColor(index);
    const label = document.createElement("button");
    label.className = "chip-label";
    label.textContent =
      scenario.label + (store.hasPending(scenario.id) ? " …" : "");
    label.addEventListener("click", () => {
      activeId = scenario.id;
      const values: Record<string, string> = {};
      for (const [key, value] of Object.entries(scenario.covariates)) {
        values[key] = String(value);
      }
      renderForm(values);
      compareMode = false;
      render();
    });
    chip.appendChild(label);
    const close = document.createElement("button");
    close.className = "chip-close";
    close.textContent = "×";
    close.addEventListener("click", () => {
      store.remove(scenario.id);
      if (activeId === scenario.id) {
        activeId = store.list()[0]?.id ?? null;
      }
      render();
    });
    chip.appendChild(close);
    el.scenarioList.appendChild(chip);
  });
  el.compareButton.disabled = store.list().length < 2;
}

function svgNode(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS("http://www.w3.org/2000/svg", tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  return node;
}

function renderAxes(svg: SVGElement): void {
  const layout = DEFAULT_LAYOUT;
  const sx = xScale(layout);
  const sy = yScale(layout);
  for (const s of [0, 0.25, 0.5, 0.75, 1]) {
    svg.appendChild(
      svgNode("line", {
        x1: String(sx(0)), x2: String(sx(layout.tMax)),
        y1: String(sy(s)), y2: String(sy(s)),
        class: "gridline",
      }),
    );
    const label = svgNode("text", {
      x: String(sx(0) - 6), y: String(sy(s) + 4), class: "axis-label",
      "text-anchor": "end",
    });
    label.textContent = s.toFixed(2);
    svg.appendChild(label);
  }
  for (const t of [0, 90, 180, 270, 365]) {
    const label = svgNode("text", {
      x: String(sx(t)), y: String(sy(0) + 18), class: "axis-label",
      "text-anchor": "middle",
    });
    label.textContent = `${t}d`;
    svg.appendChild(label);
  }
}

function renderCurveInto(
  svg: SVGElement,
  curve: CurveResponse,
  color: string,
  withBand: boolean,
): void {
  if (withBand) {
    svg.appendChild(
      svgNode("path", {
        d: bandPath(curve.t, curve.lo, curve.hi),
        class: "band",
        fill: color,
      }),
    );
  }
  svg.appendChild(
    svgNode("path", {
      d: curvePath(curve.t, curve.s_hat),
      class: "mean-line",
      stroke: color,
    }),
  );
}

function renderChart(): void {
  el.chart.replaceChildren();
  const layout = DEFAULT_LAYOUT;
  const svg = svgNode("svg", {
    viewBox: `0 0 ${layout.width} ${layout.height}`,
    class: "chart-svg",
  });
  renderAxes(svg);

  const marker = horizonMarker();
  svg.appendChild(
    svgNode("line", {
      x1: String(marker.x), x2: String(marker.x),
      y1: String(marker.y0), y2: String(marker.y1),
      class: "horizon-line",
    }),
  );
  const thresholdY = thresholdLineY();
  svg.appendChild(
    svgNode("line", {
      x1: String(xScale(layout)(0)), x2: String(xScale(layout)(layout.tMax)),
      y1: String(thresholdY), y2: String(thresholdY),
      class: "threshold-line",
    }),
  );

  const scenarios = store.list();
  const drawn: Scenario[] = compareMode
    ? scenarios.filter((s) => s.curve !== null)
    : scenarios.filter((s) => s.id === activeId && s.curve !== null);
  let violation = false;
  drawn.forEach((scenario) => {
    const index = scenarios.indexOf(scenario);
    const curve = scenario.curve!;
    if (!isMonotoneNonIncreasing(curve.s_hat)) violation = true;
    renderCurveInto(svg, curve, scenarioColor(index), !compareMode);
  });
  el.chart.appendChild(svg);

  if (compareMode && drawn.length > 0) {
    const legend = document.createElement("div");
    legend.className = "legend";
    drawn.forEach((scenario) => {
      const index = scenarios.indexOf(scenario);
      const item = document.createElement("span");
      item.style.color = scenarioColor(index);
      item.textContent = `■ ${scenario.label}`;
      legend.appendChild(item);
    });
    el.chart.appendChild(legend);
  }
  if (violation) {
    showBanner(
      "Service bug: a returned survival curve is not non-increasing.",
      null,
    );
  }
}

function renderReadout(): void {
  const active = activeId !== null ? store.get(activeId) : undefined;
  const curve = active?.curve ?? null;
  if (!compareMode && curve && curve.s_at_horizon !== null) {
    el.readout.textContent =
      `S(${HORIZON_DAYS}d) = ${curve.s_at_horizon.toFixed(3)} ` +
      `(reference threshold ${THRESHOLD_REFERENCE})`;
  } else if (!compareMode && active?.error) {
    el.readout.textContent = `Error: ${active.error}`;
  } else {
    el.readout.textContent = "";
  }
  el.warnings.replaceChildren();
  if (!compareMode && curve) {
    for (const warning of curve.warnings) {
      const item = document.createElement("li");
      item.textContent = warning;
      el.warnings.appendChild(item);
    }
  }
}

function renderComparison(): void {
  el.compare.replaceChildren();
  if (!compareMode) return;
  const table = comparisonTable(store.list());
  const heading = document.createElement("h3");
  heading.textContent = `S(${HORIZON_DAYS}d) by scenario`;
  el.compare.appendChild(heading);
  const list = document.createElement("table");
  const header = document.createElement("tr");
  header.innerHTML = "<th>Scenario</th><th>S(180d)</th>";
  list.appendChild(header);
  for (const row of table.rows) {
    const tr = document.createElement("tr");
    const name = document.createElement("td");
    name.textContent = row.label;
    const value = document.createElement("td");
    value.textContent = row.error
      ? `error: ${row.error}`
      : row.sAtHorizon !== null
        ? row.sAtHorizon.toFixed(3)
        : "—";
    tr.append(name, value);
    list.appendChild(tr);
  }
  el.compare.appendChild(list);
  if (table.deltas.length > 0) {
    const deltas = document.createElement("table");
    const head = document.createElement("tr");
    head.innerHTML = "<th>Pair</th><th>ΔS(180d)</th>";
    deltas.appendChild(head);
    for (const delta of table.deltas) {
      const tr = document.createElement("tr");
      const pair = document.createElement("td");
      pair.textContent = `${delta.a} − ${delta.b}`;
      const value = document.createElement("td");
      value.textContent = formatDelta(delta.delta);
      tr.append(pair, value);
      deltas.appendChild(tr);
    }
    el.compare.appendChild(deltas);
  }
}

function render(): void {
  renderScenarios();
  renderChart();
  renderReadout();
  renderComparison();
}

el.runButton.addEventListener("click", () => {
  if (activeId !== null) void runScenario(activeId);
});

el.addButton.addEventListener("click", () => {
  const check = validateInputs(fields, readInputs());
  showFieldErrors(check.errors);
  if (!check.ok) return;
  const scenario = store.add(check.values);
  if (!scenario) {
    showBanner(`At most ${SCENARIO_CAP} scenarios; remove one first.`, null);
    return;
  }
  clearBanner();
  activeId = scenario.id;
  renderScenarios();
  void runScenario(scenario.id);
});

el.compareButton.addEventListener("click", () => {
  void compareScenarios();
});

void boot();
