// Tuner state: parameter set, selected frame, in-flight bookkeeping, and the
// last service response. Displayed numbers always come verbatim from the
// response object; nothing is recomputed client-side.

export interface TunerParams {
  points: number;
  radius: number;
  hsv: boolean;
  ycbcr: boolean;
  colorBuckets: number;
  lbpBuckets: number;
}

export interface ChannelResult {
  label: string;
  image_b64: string;
  lbp_image_b64: string;
  color_histogram: number[];
  lbp_histogram: number[];
}

export interface TuneResponse {
  channels: ChannelResult[];
  feature_dim: number;
  width: number;
  height: number;
}

export interface TunerState {
  params: TunerParams;
  imageB64: string | null;
  imageName: string | null;
  inFlight: boolean;
  response: TuneResponse | null;
  shownParams: TunerParams | null; // params the shown response was computed with
  timingMs: number | null;
  error: string | null;
  badParams: string[];
}

export const POINT_CHOICES = [8, 16, 32, 64];
export const RADIUS_MIN = 1;
export const RADIUS_MAX = 16;

export const DEFAULT_PARAMS: TunerParams = {
  points: 32,
  radius: 8,
  hsv: true,
  ycbcr: true,
  colorBuckets: 50,
  lbpBuckets: 34,
};

export function initialState(params?: TunerParams): TunerState {
  return {
    params: { ...DEFAULT_PARAMS, ...(params ?? {}) },
    imageB64: null,
    imageName: null,
    inFlight: false,
    response: null,
    shownParams: null,
    timingMs: null,
    error: null,
    badParams: [],
  };
}

export function spacesOf(params: TunerParams): string[] {
  const spaces: string[] = [];
  if (params.hsv) spaces.push("hsv");
  if (params.ycbcr) spaces.push("ycbcr");
  return spaces;
}

/** Names of invalid fields; empty means the parameter set is usable. */
export function validateParams(params: TunerParams): string[] {
  const bad: string[] = [];
  if (!POINT_CHOICES.includes(params.points)) bad.push("points");
  if (!(params.radius >= RADIUS_MIN && params.radius <= RADIUS_MAX)) bad.push("radius");
  if (!params.hsv && !params.ycbcr) bad.push("spaces");
  if (!(Number.isInteger(params.colorBuckets) && params.colorBuckets >= 2)) {
    bad.push("colorBuckets");
  }
  if (!(Number.isInteger(params.lbpBuckets) && params.lbpBuckets >= 2)) {
    bad.push("lbpBuckets");
  }
  return bad;
}

export function canApply(state: TunerState): boolean {
  return (
    state.imageB64 !== null &&
    !state.inFlight &&
    validateParams(state.params).length === 0
  );
}

// ---------------------------------------------------------------------------
// URL round-trip: the parameter set is shareable as a query string
// ---------------------------------------------------------------------------

export function paramsToQuery(params: TunerParams): string {
  const q = new URLSearchParams();
  q.set("p", String(params.points));
  q.set("r", String(params.radius));
  q.set("spaces", spacesOf(params).join(","));
  q.set("m1", String(params.colorBuckets));
  q.set("m2", String(params.lbpBuckets));
  return q.toString();
}

export function paramsFromQuery(query: string): TunerParams {
  const q = new URLSearchParams(query);
  const params = { ...DEFAULT_PARAMS };
  const num = (key: string, fallback: number) => {
    const raw = q.get(key);
    if (raw === null) return fallback;
    const value = Number(raw);
    return Number.isFinite(value) ? value : fallback;
  };
  params.points = num("p", params.points);
  params.radius = num("r", params.radius);
  params.colorBuckets = num("m1", params.colorBuckets);
  params.lbpBuckets = num("m2", params.lbpBuckets);
  const spaces = q.get("spaces");
  if (spaces !== null) {
    const parts = spaces.split(",").map((s) => s.trim().toLowerCase());
    params.hsv = parts.includes("hsv");
    params.ycbcr = parts.includes("ycbcr");
  }
  return params;
}
