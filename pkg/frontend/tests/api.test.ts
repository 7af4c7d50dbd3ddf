import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, SnapshotMismatchError, type FetchLike } from "../src/api.js";
import { renderFlipPanel, renderWhatif } from "../src/render.js";
import type { MaskOut, WhatifOut } from "../src/types.js";

const HASH = "0123456789abcdef0123456789abcdef";

function jsonResponse(body: unknown, status = 200, hash: string | null = HASH): Response {
  const headers: Record<string, string> = { "Content-Type": "application/json" };
  if (hash !== null) headers["X-Snapshot-Hash"] = hash;
  return new Response(JSON.stringify(body), { status, headers });
}

interface Call {
  url: string;
  init: RequestInit | undefined;
}

/** Scripted fetch double: pops one response per call, records the requests. */
function scripted(responses: (Response | Error)[]): { fetchFn: FetchLike; calls: Call[] } {
  const calls: Call[] = [];
  const fetchFn: FetchLike = (url, init) => {
    calls.push({ url, init });
    const next = responses.shift();
    if (next === undefined) throw new Error("scripted fetch exhausted");
    if (next instanceof Error) return Promise.reject(next);
    return Promise.resolve(next);
  };
  return { fetchFn, calls };
}

const IDENTITY: WhatifOut = {
  pred_before: 1,
  pred_after: 1,
  probs_before: [0.3, 0.7],
  probs_after: [0.3, 0.7],
  delta_prob: 0.0,
  flipped: false,
  saliency_after: {
    instance_id: "whatif", method: "IG", target_class: 1,
    tokens: ["fine", "film"], scores: [0.01, 0.02],
  },
  snapshot_hash: HASH,
};

describe("whatif round-trip", () => {
  it("sends the edit pair and surfaces a zero delta for an identity edit", async () => {
    const { fetchFn, calls } = scripted([jsonResponse(IDENTITY)]);
    const client = new ApiClient("", fetchFn);
    const out = await client.whatif({ original: "fine film", edited: "fine film" });

    expect(calls[0]!.url).toBe("/whatif");
    expect(calls[0]!.init?.method).toBe("POST");
    const sent = JSON.parse(String(calls[0]!.init?.body)) as Record<string, unknown>;
    expect(sent["original"]).toBe("fine film");
    expect(sent["edited"]).toBe("fine film");

    expect(out.delta_prob).toBe(0);
    expect(out.flipped).toBe(false);
    const html = renderWhatif(out);
    expect(html).toContain("Δprob 0");
    expect(html).toContain("prediction unchanged");
  });
});

describe("mask verification wiring", () => {
  it("posts the clicked token and renders the service's flip report", async () => {
    const report: MaskOut = {
      token: "dragon", n_affected: 20, flip_fraction: 0.6, mean_delta: 0.41,
      trials: null, on: "validation", snapshot_hash: HASH,
    };
    const { fetchFn, calls } = scripted([jsonResponse(report)]);
    const client = new ApiClient("", fetchFn);
    const out = await client.verifyMask({ token: "dragon" });

    expect(calls[0]!.url).toBe("/verify/mask");
    const sent = JSON.parse(String(calls[0]!.init?.body)) as Record<string, unknown>;
    expect(sent["token"]).toBe("dragon");

    const html = renderFlipPanel(out);
    expect(html).toContain("60.0%");
    expect(html).toContain("20 affected");
  });
});

describe("snapshot pinning", () => {
  it("adopts the first hash seen and sends it on later requests", async () => {
    const { fetchFn, calls } = scripted([
      jsonResponse({ status: "ok" }),
      jsonResponse(IDENTITY),
    ]);
    const client = new ApiClient("", fetchFn);
    expect(client.snapshot()).toBeNull();

    await client.health();
    expect(client.snapshot()).toBe(HASH);

    await client.whatif({ original: "a", edited: "a" });
    const headers = calls[1]!.init?.headers as Record<string, string>;
    expect(headers["X-Snapshot-Hash"]).toBe(HASH);
  });

  it("raises SnapshotMismatchError on 409 with the serving hash", async () => {
    const other = "f".repeat(32);
    const { fetchFn } = scripted([
      jsonResponse({ status: "ok" }),
      jsonResponse({ error: "snapshot_mismatch", serving: other }, 409, other),
    ]);
    const client = new ApiClient("", fetchFn);
    await client.health();

    const err = await client.predict({ text: "x" }).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(SnapshotMismatchError);
    expect((err as SnapshotMismatchError).serving).toBe(other);
    expect((err as SnapshotMismatchError).pinned).toBe(HASH);
  });
});

describe("error mapping", () => {
  it("converts 400 bodies into ApiError with the domain message", async () => {
    const { fetchFn } = scripted([
      jsonResponse({ error: "bad_request", detail: "unknown token" }, 400),
    ]);
    const client = new ApiClient("", fetchFn);
    const err = await client.predict({ text: "x" }).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(400);
    expect((err as ApiError).message).toBe("unknown token");
  });

  it("propagates network failures unchanged", async () => {
    const { fetchFn } = scripted([new TypeError("fetch failed")]);
    const client = new ApiClient("", fetchFn);
    await expect(client.health()).rejects.toThrow("fetch failed");
  });
});

function deferred<T>(): { promise: Promise<T>; resolve: (v: T) => void; reject: (e: unknown) => void } {
  let resolve!: (v: T) => void;
  let reject!: (e: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

describe("latest", () => {
  it("discards a response that was overtaken by a newer request", async () => {
    const client = new ApiClient("", scripted([]).fetchFn);
    const slow = deferred<string>();
    const fast = deferred<string>();

    const first = client.latest("chan", () => slow.promise);
    const second = client.latest("chan", () => fast.promise);

    fast.resolve("new");
    await expect(second).resolves.toBe("new");

    slow.resolve("old");
    await expect(first).resolves.toBeNull();
  });

  it("swallows errors from stale requests but not from current ones", async () => {
    const client = new ApiClient("", scripted([]).fetchFn);
    const slow = deferred<string>();
    const fast = deferred<string>();

    const first = client.latest("chan", () => slow.promise);
    const second = client.latest("chan", () => fast.promise);

    slow.reject(new Error("stale failure"));
    await expect(first).resolves.toBeNull();

    fast.reject(new Error("current failure"));
    await expect(second).rejects.toThrow("current failure");
  });

  it("tracks channels independently", async () => {
    const client = new ApiClient("", scripted([]).fetchFn);
    const a = deferred<string>();
    const b = deferred<string>();

    const onA = client.latest("a", () => a.promise);
    const onB = client.latest("b", () => b.promise);

    a.resolve("a-result");
    b.resolve("b-result");
    await expect(onA).resolves.toBe("a-result");
    await expect(onB).resolves.toBe("b-result");
  });
});
