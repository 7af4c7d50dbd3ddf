/** View state and the append-only probe history.
 *
 * History entries are never edited or reordered after they are appended;
 * export/import round-trips them losslessly as JSON.
 */

import type { AggRow } from "./render.js";
import type { ProbeEntry, WhatifOut } from "./types.js";

export interface ViewState {
  instanceMethod: "IF" | "RIF" | "EUC";
  featureMethod: "G" | "IG";
  variant: "theta" | "ell";
  k: number;
  steps: number;
  dimReserved: boolean;
  history: readonly ProbeEntry[];
  sortColumn: string | null;
  sortDescending: boolean;
}

export function initialState(): ViewState {
  return {
    instanceMethod: "EUC",
    featureMethod: "IG",
    variant: "theta",
    k: 5,
    steps: 32,
    dimReserved: false,
    history: [],
    sortColumn: null,
    sortDescending: true,
  };
}

export function probeFromResult(history: readonly ProbeEntry[],
                                original: string, edited: string,
                                originalB: string | null, editedB: string | null,
                                result: WhatifOut): ProbeEntry {
  return {
    seq: history.length + 1,
    original,
    edited,
    original_b: originalB,
    edited_b: editedB,
    pred_before: result.pred_before,
    pred_after: result.pred_after,
    delta_prob: result.delta_prob,
    flipped: result.flipped,
  };
}

/** Returns a new array; the input is never mutated. */
export function appendProbe(history: readonly ProbeEntry[],
                            entry: ProbeEntry): ProbeEntry[] {
  return [...history, entry];
}

const EXPORT_VERSION = 1;

export function exportHistory(history: readonly ProbeEntry[]): string {
  return JSON.stringify({ version: EXPORT_VERSION, probes: history }, null, 2) + "\n";
}

function isProbeEntry(x: unknown): x is ProbeEntry {
  if (typeof x !== "object" || x === null) return false;
  const p = x as Record<string, unknown>;
  return (
    typeof p["seq"] === "number" &&
    typeof p["original"] === "string" &&
    typeof p["edited"] === "string" &&
    (p["original_b"] === null || typeof p["original_b"] === "string") &&
    (p["edited_b"] === null || typeof p["edited_b"] === "string") &&
    typeof p["pred_before"] === "number" &&
    typeof p["pred_after"] === "number" &&
    typeof p["delta_prob"] === "number" &&
    typeof p["flipped"] === "boolean"
  );
}

/** Parse an exported history; throws on anything that is not one. */
export function importHistory(json: string): ProbeEntry[] {
  let parsed: unknown;
  try {
    parsed = JSON.parse(json);
  } catch {
    throw new Error("history import: not valid JSON");
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new Error("history import: expected an object");
  }
  const doc = parsed as Record<string, unknown>;
  if (doc["version"] !== EXPORT_VERSION) {
    throw new Error(`history import: unsupported version ${String(doc["version"])}`);
  }
  const probes = doc["probes"];
  if (!Array.isArray(probes) || !probes.every(isProbeEntry)) {
    throw new Error("history import: malformed probe entries");
  }
  return probes;
}

/** Warning text when a report was computed on a different snapshot than the
 * one the client is pinned to; null when they agree or nothing is pinned. */
export function snapshotWarning(pinned: string | null,
                                reportHash: string): string | null {
  if (pinned === null || pinned === reportHash) return null;
  return (
    `report snapshot ${reportHash.slice(0, 12)} does not match the serving ` +
    `snapshot ${pinned.slice(0, 12)} — rerun the aggregate report`
  );
}

/** Sort dashboard rows by one column, unranked (null) last, ties kept in
 * their current order so repeated clicks re-sort stably. */
export function sortRows(rows: readonly AggRow[], column: string,
                         descending: boolean): AggRow[] {
  const indexed = rows.map((row, i) => ({ row, i }));
  indexed.sort((a, b) => {
    const va = a.row.cells[column] ?? null;
    const vb = b.row.cells[column] ?? null;
    if (va === null && vb === null) return a.i - b.i;
    if (va === null) return 1;
    if (vb === null) return -1;
    if (va !== vb) return descending ? vb - va : va - vb;
    return a.i - b.i;
  });
  return indexed.map((e) => e.row);
}
