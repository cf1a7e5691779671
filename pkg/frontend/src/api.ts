// Service client: one in-flight /tune request at a time; a newer apply
// cancels the outstanding one via AbortController.

import { TunerParams, TuneResponse, spacesOf } from "./state.js";

export interface TuneRequestBody {
  image_b64: string;
  points: number;
  radius: number;
  spaces: string[];
  color_buckets: number;
  lbp_buckets: number;
}

export interface TuneOutcome {
  ok: boolean;
  response?: TuneResponse;
  timingMs?: number;
  status?: number;
  error?: string;
  retryable?: boolean; // network failure: offer a retry
  cancelled?: boolean; // superseded by a newer request
}

export function buildTuneRequest(imageB64: string, params: TunerParams): TuneRequestBody {
  return {
    image_b64: imageB64,
    points: params.points,
    radius: params.radius,
    spaces: spacesOf(params),
    color_buckets: params.colorBuckets,
    lbp_buckets: params.lbpBuckets,
  };
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class TuneClient {
  private controller: AbortController | null = null;

  constructor(
    public baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** POST /tune; any outstanding request is aborted first. */
  async tune(imageB64: string, params: TunerParams): Promise<TuneOutcome> {
    if (this.controller) this.controller.abort();
    const controller = new AbortController();
    this.controller = controller;

    let resp: Response;
    try {
      resp = await this.fetchFn(`${this.baseUrl}/tune`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(buildTuneRequest(imageB64, params)),
        signal: controller.signal,
      });
    } catch (err) {
      if (controller.signal.aborted) return { ok: false, cancelled: true };
      return { ok: false, error: String(err), retryable: true };
    } finally {
      if (this.controller === controller) this.controller = null;
    }

    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = await resp.json();
        if (body && body.detail) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      return { ok: false, status: resp.status, error: detail };
    }
    const timing = Number(resp.headers.get("X-Tune-Ms") ?? "");
    const body = (await resp.json()) as TuneResponse;
    return {
      ok: true,
      response: body,
      timingMs: Number.isFinite(timing) ? timing : undefined,
    };
  }

  async health(): Promise<{ ok: boolean; modelLoaded?: boolean; version?: string }> {
    try {
      const resp = await this.fetchFn(`${this.baseUrl}/health`);
      if (!resp.ok) return { ok: false };
      const body = await resp.json();
      return { ok: true, modelLoaded: body.model_loaded, version: body.version };
    } catch {
      return { ok: false };
    }
  }
}
