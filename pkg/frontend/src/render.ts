/** Pure renderers: (payload, params) -> HTML string.
 *
 * Every function here is a plain function of its inputs with no DOM access
 * and no attribution math of its own — all numbers shown come out of a
 * service response. app.ts owns the side effects.
 */

import { NEUTRAL, scoreColor } from "./colors.js";
import type {
  AggregateBody,
  HeatmapPayload,
  HeatmapTrainBlock,
  MaskOut,
  ProbeEntry,
  WhatifOut,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

/** Compact numeric display: fixed for ordinary magnitudes, scientific otherwise. */
export function fmtNum(x: number): string {
  if (!Number.isFinite(x)) return String(x);
  if (x === 0) return "0";
  const magnitude = Math.abs(x);
  if (magnitude >= 1e-3 && magnitude < 1e4) return x.toFixed(4);
  return x.toExponential(3);
}

function fmtSigned(x: number): string {
  return x > 0 ? `+${fmtNum(x)}` : fmtNum(x);
}

const INSTANCE_METHODS = ["IF", "RIF", "EUC"];
const FEATURE_METHODS = ["G", "IG"];
const HEATMAP_SCHEMA_VERSION = 1;

/** The vocabulary's reserved marker tokens, as they appear in payloads. */
export const RESERVED_TOKENS: ReadonlySet<string> = new Set([
  "<pad>", "<oov>", "<mask>", "<sep>",
]);

export interface RenderOptions {
  /** De-emphasize reserved marker tokens in token strips. */
  dimReserved?: boolean;
}

function isNumberArray(x: unknown): x is number[] {
  return Array.isArray(x) && x.every((v) => typeof v === "number" && Number.isFinite(v));
}

function isStringArray(x: unknown): x is string[] {
  return Array.isArray(x) && x.every((v) => typeof v === "string");
}

function checkScoredTokens(obj: Record<string, unknown>, where: string, out: string[]): void {
  const tokens = obj["tokens"];
  if (!isStringArray(tokens)) {
    out.push(`${where}: tokens must be an array of strings`);
    return;
  }
  for (const key of ["scores_raw", "scores_norm"]) {
    const scores = obj[key];
    if (!isNumberArray(scores)) {
      out.push(`${where}: ${key} must be an array of finite numbers`);
    } else if (scores.length !== tokens.length) {
      out.push(`${where}: ${key} has ${scores.length} entries for ${tokens.length} tokens`);
    }
  }
  const norm = obj["scores_norm"];
  if (isNumberArray(norm) && norm.some((v) => v < -1 || v > 1)) {
    out.push(`${where}: scores_norm out of [-1, 1]`);
  }
}

/** Structural checks mirroring the service's heatmap schema. Empty = valid. */
export function validateHeatmap(x: unknown): string[] {
  const problems: string[] = [];
  if (typeof x !== "object" || x === null || Array.isArray(x)) {
    return ["payload is not a JSON object"];
  }
  const p = x as Record<string, unknown>;
  for (const key of ["schema_version", "snapshot_hash", "instance_method",
                     "feature_method", "k", "steps", "test", "top", "bottom"]) {
    if (!(key in p)) problems.push(`missing required key: ${key}`);
  }
  if (problems.length > 0) return problems;

  if (p["schema_version"] !== HEATMAP_SCHEMA_VERSION) {
    problems.push(`unsupported schema_version: ${String(p["schema_version"])}`);
  }
  if (typeof p["snapshot_hash"] !== "string" || p["snapshot_hash"].length < 8) {
    problems.push("snapshot_hash must be a string of at least 8 characters");
  }
  if (!INSTANCE_METHODS.includes(p["instance_method"] as string)) {
    problems.push(`unknown instance_method: ${String(p["instance_method"])}`);
  }
  if (!FEATURE_METHODS.includes(p["feature_method"] as string)) {
    problems.push(`unknown feature_method: ${String(p["feature_method"])}`);
  }
  for (const key of ["k", "steps"]) {
    const v = p[key];
    if (typeof v !== "number" || !Number.isInteger(v) || v < 1) {
      problems.push(`${key} must be a positive integer`);
    }
  }

  const test = p["test"];
  if (typeof test !== "object" || test === null) {
    problems.push("test must be an object");
  } else {
    const t = test as Record<string, unknown>;
    for (const key of ["id", "tokens", "predicted", "probabilities", "scores_raw", "scores_norm"]) {
      if (!(key in t)) problems.push(`test: missing required key: ${key}`);
    }
    if (!("id" in t) || typeof t["id"] !== "string") {
      problems.push("test: id must be a string");
    }
    if ("probabilities" in t && !isNumberArray(t["probabilities"])) {
      problems.push("test: probabilities must be an array of finite numbers");
    }
    if ("tokens" in t && "scores_raw" in t && "scores_norm" in t) {
      checkScoredTokens(t, "test", problems);
    }
  }

  for (const side of ["top", "bottom"]) {
    const blocks = p[side];
    if (!Array.isArray(blocks)) {
      problems.push(`${side} must be an array`);
      continue;
    }
    blocks.forEach((block, i) => {
      const where = `${side}[${i}]`;
      if (typeof block !== "object" || block === null) {
        problems.push(`${where}: not an object`);
        return;
      }
      const b = block as Record<string, unknown>;
      for (const key of ["train_id", "rank", "influence", "label", "tokens", "scores_raw", "scores_norm"]) {
        if (!(key in b)) problems.push(`${where}: missing required key: ${key}`);
      }
      if ("influence" in b && typeof b["influence"] !== "number") {
        problems.push(`${where}: influence must be a number`);
      }
      if ("tokens" in b && "scores_raw" in b && "scores_norm" in b) {
        checkScoredTokens(b, where, problems);
      }
    });
  }
  return problems;
}

export function renderErrorPanel(title: string, problems: string[]): string {
  const items = problems.map((msg) => `<li>${escapeHtml(msg)}</li>`).join("");
  return `<div class="error-panel"><strong>${escapeHtml(title)}</strong><ul>${items}</ul></div>`;
}

export function renderBanner(kind: "retry" | "warning", message: string): string {
  return `<div class="banner banner-${kind}">${escapeHtml(message)}</div>`;
}

function tokenStrip(tokens: string[], norms: number[], raws: number[],
                    options?: RenderOptions): string {
  const spans = tokens.map((tok, i) => {
    const norm = norms[i] ?? 0;
    const raw = raws[i] ?? 0;
    const bg = scoreColor(norm);
    const style = bg === NEUTRAL ? "" : ` style="background:${bg}"`;
    const dimmed = options?.dimReserved === true && RESERVED_TOKENS.has(tok);
    const cls = dimmed ? "tok reserved" : "tok";
    return `<span class="${cls}"${style} title="${fmtNum(raw)}">${escapeHtml(tok)}</span>`;
  });
  return `<div class="token-strip">${spans.join(" ")}</div>`;
}

function className(label: number | null, classNames?: string[]): string {
  if (label === null) return "?";
  const name = classNames?.[label];
  return name !== undefined ? name : `class ${label}`;
}

function probBars(probs: number[], classNames?: string[]): string {
  const rows = probs.map((prob, i) => {
    const width = (Math.max(0, Math.min(1, prob)) * 100).toFixed(1);
    return (
      `<div class="prob-row"><span class="prob-label">${escapeHtml(className(i, classNames))}</span>` +
      `<div class="prob-bar"><div class="prob-fill" style="width:${width}%"></div></div>` +
      `<span class="prob-value">${prob.toFixed(4)}</span></div>`
    );
  });
  return `<div class="probs">${rows.join("")}</div>`;
}

function trainBlock(block: HeatmapTrainBlock, classNames?: string[],
                    options?: RenderOptions): string {
  return (
    `<div class="train-block" data-train-id="${escapeHtml(block.train_id)}">` +
    `<div class="block-head"><span class="rank">#${block.rank}</span>` +
    `<span class="influence">${fmtSigned(block.influence)}</span>` +
    `<span class="label-badge">${escapeHtml(className(block.label, classNames))}</span>` +
    `<span class="train-id">${escapeHtml(block.train_id)}</span></div>` +
    tokenStrip(block.tokens, block.scores_norm, block.scores_raw, options) +
    `</div>`
  );
}

/** Heatmap view: the test instance plus its most/least influential train blocks.
 *
 * Invalid payloads render as an error panel; this never throws on bad input.
 */
export function renderHeatmap(payload: unknown, classNames?: string[],
                              options?: RenderOptions): string {
  const problems = validateHeatmap(payload);
  if (problems.length > 0) {
    return renderErrorPanel("Heatmap payload failed validation", problems);
  }
  const p = payload as HeatmapPayload;
  const variant = p.variant ? ` variant=${p.variant}` : "";
  const meta =
    `${p.instance_method}/${p.feature_method}${variant} k=${p.k} steps=${p.steps}`;
  const header =
    `<div class="heatmap-meta">${escapeHtml(meta)} ` +
    `<span class="hash">${escapeHtml(p.snapshot_hash.slice(0, 12))}</span></div>`;
  const testSection =
    `<section class="test-section"><h3>Test instance ${escapeHtml(p.test.id)}</h3>` +
    `<div class="pred-line">predicted ${escapeHtml(className(p.test.predicted, classNames))}` +
    (p.test.label === null
      ? ""
      : `, labeled ${escapeHtml(className(p.test.label, classNames))}`) +
    `</div>` +
    probBars(p.test.probabilities, classNames) +
    tokenStrip(p.test.tokens, p.test.scores_norm, p.test.scores_raw, options) +
    `</section>`;
  const top = p.top.map((b) => trainBlock(b, classNames, options)).join("");
  const bottom = p.bottom.map((b) => trainBlock(b, classNames, options)).join("");
  return (
    `<div class="heatmap">${header}${testSection}` +
    `<section class="train-section"><h3>Most influential training instances</h3>${top}</section>` +
    `<section class="train-section"><h3>Least influential training instances</h3>${bottom}</section>` +
    `</div>`
  );
}

/** What-if result: prediction shift for one edit, with post-edit saliency. */
export function renderWhatif(out: WhatifOut, classNames?: string[],
                             options?: RenderOptions): string {
  const flipBadge = out.flipped
    ? `<span class="flip-badge flipped">prediction flipped</span>`
    : `<span class="flip-badge">prediction unchanged</span>`;
  const delta = `Δprob ${fmtSigned(out.delta_prob)}`;
  const norms = normalizeForDisplay(out.saliency_after.scores);
  return (
    `<div class="whatif-result">` +
    `<div class="whatif-head">${flipBadge}<span class="delta">${escapeHtml(delta)}</span></div>` +
    `<div class="whatif-cols">` +
    `<div><h4>Before: ${escapeHtml(className(out.pred_before, classNames))}</h4>` +
    probBars(out.probs_before, classNames) + `</div>` +
    `<div><h4>After: ${escapeHtml(className(out.pred_after, classNames))}</h4>` +
    probBars(out.probs_after, classNames) + `</div>` +
    `</div>` +
    `<h4>Saliency on the edited text (${escapeHtml(out.saliency_after.method)})</h4>` +
    tokenStrip(out.saliency_after.tokens, norms, out.saliency_after.scores, options) +
    `</div>`
  );
}

/** Rescale raw saliency to [-1, 1] for coloring only; displayed numbers stay raw. */
export function normalizeForDisplay(scores: number[]): number[] {
  const peak = Math.max(...scores.map(Math.abs), 0);
  if (peak === 0) return scores.map(() => 0);
  return scores.map((s) => s / peak);
}

export function renderHistory(history: readonly ProbeEntry[], classNames?: string[]): string {
  if (history.length === 0) {
    return `<p class="empty">No probes yet.</p>`;
  }
  const rows = history.map((e) => {
    const flip = e.flipped ? "yes" : "no";
    return (
      `<tr><td>${e.seq}</td>` +
      `<td>${escapeHtml(e.original)}</td><td>${escapeHtml(e.edited)}</td>` +
      `<td>${escapeHtml(className(e.pred_before, classNames))}</td>` +
      `<td>${escapeHtml(className(e.pred_after, classNames))}</td>` +
      `<td>${escapeHtml(fmtSigned(e.delta_prob))}</td><td>${flip}</td></tr>`
    );
  });
  return (
    `<table class="history"><thead><tr><th>#</th><th>original</th><th>edited</th>` +
    `<th>before</th><th>after</th><th>Δprob</th><th>flipped</th></tr></thead>` +
    `<tbody>${rows.join("")}</tbody></table>`
  );
}

export function renderFlipPanel(out: MaskOut): string {
  const pct = (out.flip_fraction * 100).toFixed(1);
  const what = out.trials === null
    ? `masking <strong>${escapeHtml(out.token)}</strong>`
    : `masking random positions (${out.trials} trials)`;
  return (
    `<div class="flip-panel">${what} flips <strong>${pct}%</strong> of ` +
    `${out.n_affected} affected instances on the ${escapeHtml(out.on)} split ` +
    `(mean Δprob ${escapeHtml(fmtNum(out.mean_delta))})</div>`
  );
}

/** Columns the aggregate dashboard shows, in display order. Methods that
 * ranked nothing contribute no column, so a single-method report renders
 * as a single-column table. */
export function aggregateColumns(body: AggregateBody): string[] {
  const columns: string[] = [];
  if (body.tfa.top_entries.length > 0) columns.push("tfa_top");
  if (body.tfa.bottom_entries.length > 0) columns.push("tfa_bottom");
  if (body.feature.entries.length > 0) columns.push("feature");
  for (const label of Object.keys(body.pmi).sort()) {
    if (body.pmi[label]!.length > 0) columns.push(`pmi:${label}`);
  }
  if (body.competency.length > 0) columns.push("competency");
  return columns;
}

export interface AggRow {
  token: string;
  cells: Record<string, number | null>;
}

/** Join every ranked table on token; null marks "not ranked by this method". */
export function aggregateRows(body: AggregateBody): AggRow[] {
  const columns = new Map<string, Map<string, number>>();
  columns.set("tfa_top", new Map(body.tfa.top_entries));
  columns.set("tfa_bottom", new Map(body.tfa.bottom_entries));
  columns.set("feature", new Map(body.feature.entries));
  for (const [label, stats] of Object.entries(body.pmi)) {
    columns.set(`pmi:${label}`, new Map(stats.map((s) => [s.token, s.value])));
  }
  columns.set("competency", new Map(body.competency.map((s) => [s.token, s.value])));

  const tokens: string[] = [];
  const seen = new Set<string>();
  for (const table of columns.values()) {
    for (const token of table.keys()) {
      if (!seen.has(token)) {
        seen.add(token);
        tokens.push(token);
      }
    }
  }
  return tokens.map((token) => {
    const cells: Record<string, number | null> = {};
    for (const [name, table] of columns.entries()) {
      cells[name] = table.get(token) ?? null;
    }
    return { token, cells };
  });
}

export function renderAggregate(body: AggregateBody, rows: AggRow[],
                                sortColumn: string | null): string {
  const cols = aggregateColumns(body);
  const head = cols.map((c) => {
    const marker = c === sortColumn ? " ▾" : "";
    return `<th class="sortable" data-col="${escapeHtml(c)}">${escapeHtml(c)}${marker}</th>`;
  });
  const bodyRows = rows.map((row) => {
    const cells = cols.map((c) => {
      const v = row.cells[c];
      if (v === null || v === undefined) return `<td class="na">–</td>`;
      return `<td>${escapeHtml(Number.isInteger(v) ? String(v) : fmtNum(v))}</td>`;
    });
    return (
      `<tr><td class="tok-cell" data-token="${escapeHtml(row.token)}">` +
      `${escapeHtml(row.token)}</td>${cells.join("")}</tr>`
    );
  });
  const caption =
    `ranked over ${body.n_study} ${escapeHtml(body.study_role)} instances; ` +
    `click a token to mask-verify it`;
  return (
    `<table class="aggregate"><caption>${caption}</caption>` +
    `<thead><tr><th>token</th>${head.join("")}</tr></thead>` +
    `<tbody>${bodyRows.join("")}</tbody></table>`
  );
}
