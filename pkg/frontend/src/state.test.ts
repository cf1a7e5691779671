import { describe, expect, it } from "vitest";

import {
  DEFAULT_PARAMS,
  canApply,
  initialState,
  paramsFromQuery,
  paramsToQuery,
  spacesOf,
  validateParams,
} from "./state.js";

describe("defaults", () => {
  it("start at the tuned production parameters", () => {
    expect(DEFAULT_PARAMS.points).toBe(32);
    expect(DEFAULT_PARAMS.radius).toBe(8);
    expect(DEFAULT_PARAMS.colorBuckets).toBe(50);
    expect(DEFAULT_PARAMS.lbpBuckets).toBe(34);
    expect(spacesOf(DEFAULT_PARAMS)).toEqual(["hsv", "ycbcr"]);
  });

  it("initial state is valid but not applyable without a frame", () => {
    const state = initialState();
    expect(validateParams(state.params)).toEqual([]);
    expect(canApply(state)).toBe(false);
    state.imageB64 = "abc";
    expect(canApply(state)).toBe(true);
  });
});

describe("validateParams", () => {
  it("flags unsupported point counts", () => {
    expect(validateParams({ ...DEFAULT_PARAMS, points: 12 })).toContain("points");
  });

  it("flags radius out of range", () => {
    expect(validateParams({ ...DEFAULT_PARAMS, radius: 0 })).toContain("radius");
    expect(validateParams({ ...DEFAULT_PARAMS, radius: 17 })).toContain("radius");
  });

  it("flags both spaces off", () => {
    const bad = validateParams({ ...DEFAULT_PARAMS, hsv: false, ycbcr: false });
    expect(bad).toContain("spaces");
  });

  it("flags tiny bucket counts", () => {
    expect(validateParams({ ...DEFAULT_PARAMS, colorBuckets: 1 })).toContain("colorBuckets");
    expect(validateParams({ ...DEFAULT_PARAMS, lbpBuckets: 0 })).toContain("lbpBuckets");
  });
});

describe("canApply", () => {
  it("is false while a request is in flight", () => {
    const state = initialState();
    state.imageB64 = "abc";
    state.inFlight = true;
    expect(canApply(state)).toBe(false);
  });

  it("is false with both spaces toggled off", () => {
    const state = initialState();
    state.imageB64 = "abc";
    state.params.hsv = false;
    state.params.ycbcr = false;
    expect(canApply(state)).toBe(false);
  });
});

describe("URL round-trip", () => {
  it("serializes every parameter", () => {
    const q = paramsToQuery(DEFAULT_PARAMS);
    expect(q).toContain("p=32");
    expect(q).toContain("r=8");
    expect(q).toContain("m1=50");
    expect(q).toContain("m2=34");
    expect(q).toContain("spaces=hsv%2Cycbcr");
  });

  it("reconstructs state from a query string", () => {
    const params = { ...DEFAULT_PARAMS, points: 8, radius: 2, hsv: false };
    const back = paramsFromQuery(paramsToQuery(params));
    expect(back).toEqual(params);
  });

  it("falls back to defaults for missing or junk values", () => {
    expect(paramsFromQuery("")).toEqual(DEFAULT_PARAMS);
    const back = paramsFromQuery("p=abc&r=");
    expect(back.points).toBe(DEFAULT_PARAMS.points);
  });

  it("parses space lists case-insensitively", () => {
    const back = paramsFromQuery("spaces=YCBCR");
    expect(back.hsv).toBe(false);
    expect(back.ycbcr).toBe(true);
  });
});
