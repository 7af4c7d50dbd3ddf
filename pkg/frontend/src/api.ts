/** Thin typed client for the artifact service.
 *
 * The fetch implementation is injected so tests can drive the client with a
 * scripted double. The client pins the first snapshot hash it sees and sends
 * it with every later request; the service answers 409 if its snapshot no
 * longer matches, which surfaces here as SnapshotMismatchError.
 */

import type {
  AggregateEnvelope,
  FeatureIn,
  FeatureOut,
  HealthOut,
  HeatmapPayload,
  InstanceIn,
  InstanceOut,
  MaskIn,
  MaskOut,
  PredictIn,
  PredictOut,
  TfaIn,
  WhatifIn,
  WhatifOut,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class SnapshotMismatchError extends ApiError {
  constructor(public readonly pinned: string, public readonly serving: string) {
    super(409, `service restarted on a different snapshot (${serving.slice(0, 12)})`);
    this.name = "SnapshotMismatchError";
  }
}

function errorMessage(body: unknown, status: number): string {
  if (typeof body === "object" && body !== null) {
    const b = body as Record<string, unknown>;
    if (typeof b["detail"] === "string") return b["detail"];
    if (typeof b["error"] === "string") return b["error"];
  }
  return `request failed with status ${status}`;
}

export class ApiClient {
  private pinned: string | null = null;
  private sequence = new Map<string, number>();

  constructor(private readonly base: string, private readonly fetchFn: FetchLike) {}

  snapshot(): string | null {
    return this.pinned;
  }

  private async request<T>(path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.pinned !== null) {
      headers["X-Snapshot-Hash"] = this.pinned;
    }
    const init: RequestInit = body === undefined
      ? { method: "GET", headers }
      : { method: "POST", headers, body: JSON.stringify(body) };
    const res = await this.fetchFn(this.base + path, init);

    const served = res.headers.get("X-Snapshot-Hash");
    if (res.status === 409) {
      let serving = served ?? "";
      try {
        const payload = (await res.json()) as Record<string, unknown>;
        if (typeof payload["serving"] === "string") serving = payload["serving"];
      } catch {
        // body unreadable: the header copy is enough
      }
      throw new SnapshotMismatchError(this.pinned ?? "", serving);
    }
    if (!res.ok) {
      let payload: unknown = null;
      try {
        payload = await res.json();
      } catch {
        // non-JSON error body
      }
      throw new ApiError(res.status, errorMessage(payload, res.status));
    }
    if (this.pinned === null && served !== null) {
      this.pinned = served;
    }
    return (await res.json()) as T;
  }

  health(): Promise<HealthOut> {
    return this.request("/health");
  }

  predict(body: PredictIn): Promise<PredictOut> {
    return this.request("/predict", body);
  }

  feature(body: FeatureIn): Promise<FeatureOut> {
    return this.request("/attribute/feature", body);
  }

  instances(body: InstanceIn): Promise<InstanceOut> {
    return this.request("/attribute/instance", body);
  }

  tfa(body: TfaIn): Promise<HeatmapPayload> {
    return this.request("/attribute/tfa", body);
  }

  whatif(body: WhatifIn): Promise<WhatifOut> {
    return this.request("/whatif", body);
  }

  verifyMask(body: MaskIn): Promise<MaskOut> {
    return this.request("/verify/mask", body);
  }

  aggregate(): Promise<AggregateEnvelope> {
    return this.request("/report/aggregate");
  }

  /** Run a request on a named channel; if a newer request started on the same
   * channel before this one settled, its result (or error) is stale and is
   * dropped — the caller gets null and should leave the view alone. */
  async latest<T>(channel: string, run: () => Promise<T>): Promise<T | null> {
    const id = (this.sequence.get(channel) ?? 0) + 1;
    this.sequence.set(channel, id);
    try {
      const out = await run();
      return this.sequence.get(channel) === id ? out : null;
    } catch (err) {
      if (this.sequence.get(channel) === id) throw err;
      return null;
    }
  }
}
