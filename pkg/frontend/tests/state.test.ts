import { describe, expect, it } from "vitest";

import type { AggRow } from "../src/render.js";
import {
  appendProbe,
  exportHistory,
  importHistory,
  initialState,
  probeFromResult,
  snapshotWarning,
  sortRows,
} from "../src/state.js";
import type { ProbeEntry, WhatifOut } from "../src/types.js";

function entry(seq: number, original = "a", edited = "b"): ProbeEntry {
  return {
    seq, original, edited, original_b: null, edited_b: null,
    pred_before: 0, pred_after: 1, delta_prob: -0.12, flipped: true,
  };
}

describe("probe history", () => {
  it("appends without mutating the existing history", () => {
    const before = Object.freeze([entry(1)]) as readonly ProbeEntry[];
    const after = appendProbe(before, entry(2));
    expect(after.length).toBe(2);
    expect(before.length).toBe(1);
    expect(after[0]).toBe(before[0]);
  });

  it("numbers probes sequentially from the current history", () => {
    const result: WhatifOut = {
      pred_before: 1, pred_after: 1, probs_before: [0.4, 0.6],
      probs_after: [0.4, 0.6], delta_prob: 0, flipped: false,
      saliency_after: {
        instance_id: "whatif", method: "IG", target_class: 1,
        tokens: ["x"], scores: [0],
      },
      snapshot_hash: "deadbeefdeadbeef",
    };
    const probe = probeFromResult([entry(1), entry(2)], "x", "x", null, null, result);
    expect(probe.seq).toBe(3);
    expect(probe.delta_prob).toBe(0);
  });

  it("round-trips through export and import losslessly", () => {
    const history = [entry(1, "the dragon roared", "the lizard roared"), entry(2)];
    expect(importHistory(exportHistory(history))).toEqual(history);
    expect(importHistory(exportHistory([]))).toEqual([]);
  });

  it("rejects malformed imports", () => {
    expect(() => importHistory("not json {")).toThrow(/not valid JSON/);
    expect(() => importHistory("[1, 2]")).toThrow(/expected an object/);
    expect(() => importHistory('{"version": 7, "probes": []}')).toThrow(/version/);
    const missingField = '{"version": 1, "probes": [{"seq": 1}]}';
    expect(() => importHistory(missingField)).toThrow(/malformed/);
  });
});

function row(token: string, value: number | null): AggRow {
  return { token, cells: { col: value } };
}

describe("sortRows", () => {
  it("orders by the chosen column in either direction", () => {
    const rows = [row("a", 1), row("b", 3), row("c", 2)];
    expect(sortRows(rows, "col", true).map((r) => r.token)).toEqual(["b", "c", "a"]);
    expect(sortRows(rows, "col", false).map((r) => r.token)).toEqual(["a", "c", "b"]);
  });

  it("keeps tied rows in their current order", () => {
    const rows = [row("first", 5), row("second", 5), row("third", 5), row("top", 9)];
    const sorted = sortRows(rows, "col", true);
    expect(sorted.map((r) => r.token)).toEqual(["top", "first", "second", "third"]);
    // Re-sorting the already-sorted rows is a no-op: the tie order is stable.
    expect(sortRows(sorted, "col", true)).toEqual(sorted);
  });

  it("puts unranked rows last regardless of direction", () => {
    const rows = [row("missing", null), row("low", 1), row("high", 2)];
    expect(sortRows(rows, "col", true).map((r) => r.token)).toEqual(["high", "low", "missing"]);
    expect(sortRows(rows, "col", false).map((r) => r.token)).toEqual(["low", "high", "missing"]);
  });

  it("does not mutate its input", () => {
    const rows = [row("a", 1), row("b", 2)];
    const copy = rows.map((r) => r.token);
    sortRows(rows, "col", true);
    expect(rows.map((r) => r.token)).toEqual(copy);
  });
});

describe("initialState", () => {
  it("starts with an empty history and the service defaults", () => {
    const state = initialState();
    expect(state.history).toEqual([]);
    expect(state.instanceMethod).toBe("EUC");
    expect(state.featureMethod).toBe("IG");
    expect(state.dimReserved).toBe(false);
  });
});

describe("snapshotWarning", () => {
  const a = "a".repeat(64);
  const b = "b".repeat(64);

  it("is silent when nothing is pinned or hashes agree", () => {
    expect(snapshotWarning(null, a)).toBeNull();
    expect(snapshotWarning(a, a)).toBeNull();
  });

  it("names both hashes when they diverge", () => {
    const warning = snapshotWarning(a, b);
    expect(warning).toContain(a.slice(0, 12));
    expect(warning).toContain(b.slice(0, 12));
  });
});
