/** Browser glue: wires the forms in index.html to the service client and
 * swaps rendered HTML into the result containers. All rendering logic lives
 * in render.ts; everything here is event handling and innerHTML assignment.
 */

import { ApiClient, ApiError, SnapshotMismatchError } from "./api.js";
import {
  aggregateRows,
  renderAggregate,
  renderBanner,
  renderErrorPanel,
  renderFlipPanel,
  renderHeatmap,
  renderHistory,
  renderWhatif,
  type AggRow,
} from "./render.js";
import {
  appendProbe,
  exportHistory,
  importHistory,
  initialState,
  probeFromResult,
  snapshotWarning,
  sortRows,
  type ViewState,
} from "./state.js";
import type { AggregateBody } from "./types.js";

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element: ${id}`);
  return el as T;
}

const client = new ApiClient("", (url, init) => fetch(url, init));

let state: ViewState = initialState();
let classNames: string[] | undefined;
let aggBody: AggregateBody | null = null;
let aggRows: AggRow[] = [];

function showBanner(kind: "retry" | "warning", message: string): void {
  must("banner").innerHTML = renderBanner(kind, message);
}

function clearBanner(): void {
  must("banner").innerHTML = "";
}

/** Run a service call; on failure show a banner and return null, leaving all
 * form inputs and previously rendered results exactly as they were. */
async function guarded<T>(run: () => Promise<T | null>): Promise<T | null> {
  try {
    const out = await run();
    clearBanner();
    return out;
  } catch (err) {
    if (err instanceof SnapshotMismatchError) {
      showBanner("warning", `${err.message} — reload the page to pin the new snapshot`);
    } else if (err instanceof ApiError) {
      showBanner("warning", err.message);
    } else {
      showBanner("retry", "service unreachable — is `artifact serve` running? click to retry");
    }
    return null;
  }
}

function optional(value: string): string | null {
  const trimmed = value.trim();
  return trimmed === "" ? null : trimmed;
}

async function runWhatif(): Promise<void> {
  const original = must<HTMLTextAreaElement>("wi-original").value.trim();
  const edited = must<HTMLTextAreaElement>("wi-edited").value.trim();
  if (original === "" || edited === "") {
    showBanner("warning", "enter both the original and the edited text");
    return;
  }
  const originalB = optional(must<HTMLInputElement>("wi-original-b").value);
  const editedB = optional(must<HTMLInputElement>("wi-edited-b").value);
  const out = await guarded(() => client.latest("whatif", () =>
    client.whatif({ original, edited, original_b: originalB, edited_b: editedB })));
  if (out === null) return;
  must("wi-result").innerHTML = renderWhatif(out, classNames);
  const entry = probeFromResult(state.history, original, edited, originalB, editedB, out);
  state = { ...state, history: appendProbe(state.history, entry) };
  must("wi-history").innerHTML = renderHistory(state.history, classNames);
}

function downloadHistory(): void {
  const blob = new Blob([exportHistory(state.history)], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = "probe-history.json";
  a.click();
  URL.revokeObjectURL(url);
}

function uploadHistory(file: File): void {
  const reader = new FileReader();
  reader.onload = () => {
    try {
      const probes = importHistory(String(reader.result));
      state = { ...state, history: probes };
      must("wi-history").innerHTML = renderHistory(state.history, classNames);
      clearBanner();
    } catch (err) {
      must("wi-history").innerHTML = renderErrorPanel(
        "History import failed", [err instanceof Error ? err.message : String(err)]);
    }
  };
  reader.readAsText(file);
}

async function runHeatmap(): Promise<void> {
  const text = must<HTMLTextAreaElement>("hm-text").value.trim();
  if (text === "") {
    showBanner("warning", "enter a test text to attribute");
    return;
  }
  const instanceMethod = must<HTMLSelectElement>("hm-instance-method").value as ViewState["instanceMethod"];
  const featureMethod = must<HTMLSelectElement>("hm-feature-method").value as ViewState["featureMethod"];
  const variant = must<HTMLSelectElement>("hm-variant").value as ViewState["variant"];
  const k = Math.max(1, Number(must<HTMLInputElement>("hm-k").value) || 5);
  const steps = Math.max(1, Number(must<HTMLInputElement>("hm-steps").value) || 32);
  const dimReserved = must<HTMLInputElement>("hm-dim-reserved").checked;
  state = { ...state, instanceMethod, featureMethod, variant, k, steps, dimReserved };
  const out = await guarded(() => client.latest("tfa", () => client.tfa({
    text, instance_method: instanceMethod, feature_method: featureMethod,
    variant, k, steps,
  })));
  if (out === null) return;
  must("hm-result").innerHTML = renderHeatmap(out, classNames, { dimReserved });
}

function redrawAggregate(): void {
  if (aggBody === null) return;
  const rows = state.sortColumn === null
    ? aggRows
    : sortRows(aggRows, state.sortColumn, state.sortDescending);
  must("agg-result").innerHTML = renderAggregate(aggBody, rows, state.sortColumn);
}

async function loadAggregate(): Promise<void> {
  const out = await guarded(() => client.aggregate());
  if (out === null) return;
  const warning = snapshotWarning(client.snapshot(), out.snapshot_hash);
  if (warning !== null) showBanner("warning", warning);
  aggBody = out.body;
  aggRows = aggregateRows(out.body);
  redrawAggregate();
}

async function maskToken(token: string): Promise<void> {
  const out = await guarded(() => client.verifyMask({ token }));
  if (out === null) return;
  must("agg-flip").innerHTML = renderFlipPanel(out);
}

function onAggregateClick(event: Event): void {
  const target = event.target as HTMLElement | null;
  if (target === null) return;
  const header = target.closest<HTMLElement>("th.sortable");
  if (header !== null && header.dataset["col"] !== undefined) {
    const col = header.dataset["col"];
    state = state.sortColumn === col
      ? { ...state, sortDescending: !state.sortDescending }
      : { ...state, sortColumn: col, sortDescending: true };
    redrawAggregate();
    return;
  }
  const cell = target.closest<HTMLElement>("td.tok-cell");
  if (cell !== null && cell.dataset["token"] !== undefined) {
    void maskToken(cell.dataset["token"]);
  }
}

function selectTab(name: string): void {
  for (const section of document.querySelectorAll<HTMLElement>("[data-tab-panel]")) {
    section.hidden = section.dataset["tabPanel"] !== name;
  }
  for (const button of document.querySelectorAll<HTMLElement>("[data-tab]")) {
    button.classList.toggle("active", button.dataset["tab"] === name);
  }
}

async function boot(): Promise<void> {
  const health = await guarded(() => client.health());
  if (health === null) return;
  classNames = health.classes;
  must("snapshot-badge").textContent =
    `${health.snapshot_hash.slice(0, 12)} · ${health.n_train} train · verify on ${health.study_role}`;
}

function wire(): void {
  must("wi-run").addEventListener("click", () => void runWhatif());
  must("wi-export").addEventListener("click", downloadHistory);
  must("wi-import").addEventListener("click", () => must<HTMLInputElement>("wi-import-file").click());
  must<HTMLInputElement>("wi-import-file").addEventListener("change", (e) => {
    const input = e.target as HTMLInputElement;
    const file = input.files?.[0];
    if (file !== undefined) uploadHistory(file);
    input.value = "";
  });
  must("hm-run").addEventListener("click", () => void runHeatmap());
  must("agg-load").addEventListener("click", () => void loadAggregate());
  must("agg-result").addEventListener("click", onAggregateClick);
  must("banner").addEventListener("click", () => void boot());
  for (const button of document.querySelectorAll<HTMLElement>("[data-tab]")) {
    button.addEventListener("click", () => {
      const tab = button.dataset["tab"];
      if (tab !== undefined) selectTab(tab);
    });
  }
  selectTab("whatif");
  must("wi-history").innerHTML = renderHistory(state.history, classNames);
  void boot();
}

wire();
