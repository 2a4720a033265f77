import { afterEach, describe, expect, it, vi } from "vitest";

import { fetchNextHit, submitSelection } from "../src/api.js";
import { STAGE1_HIT } from "./fixtures.js";

function mockFetch(status: number, body: unknown) {
  return vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    statusText: String(status),
    json: async () => body,
  })) as unknown as typeof fetch;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("submitSelection", () => {
  it("refuses option ids the server never offered", async () => {
    const spy = mockFetch(200, { ok: true });
    vi.stubGlobal("fetch", spy);
    const res = await submitSelection("", STAGE1_HIT, "a1", ["made-up"]);
    expect(res.ok).toBe(false);
    if (!res.ok) expect(res.error).toContain("made-up");
    expect(spy).not.toHaveBeenCalled();
  });

  it("refuses empty selections", async () => {
    const spy = mockFetch(200, { ok: true });
    vi.stubGlobal("fetch", spy);
    const res = await submitSelection("", STAGE1_HIT, "a1", []);
    expect(res.ok).toBe(false);
    expect(spy).not.toHaveBeenCalled();
  });

  it("posts exactly the server-provided id", async () => {
    const spy = mockFetch(200, { ok: true, hit: STAGE1_HIT });
    vi.stubGlobal("fetch", spy);
    const res = await submitSelection("", STAGE1_HIT, "a1", ["s2:2:4"]);
    expect(res.ok).toBe(true);
    const [url, init] = (spy as any).mock.calls[0];
    expect(url).toBe("/api/hits/h1-demo/response");
    expect(JSON.parse(init.body)).toEqual({
      annotator: "a1",
      selection: ["s2:2:4"],
    });
  });

  it("surfaces server-side errors", async () => {
    vi.stubGlobal("fetch", mockFetch(409, {
      ok: false, error: "annotator 'a1' already responded to h1-demo",
    }));
    const res = await submitSelection("", STAGE1_HIT, "a1", ["s2:2:4"]);
    expect(res.ok).toBe(false);
    if (!res.ok) {
      expect(res.status).toBe(409);
      expect(res.error).toContain("already responded");
    }
  });
});

describe("fetchNextHit", () => {
  it("passes annotator and stage as query params", async () => {
    const spy = mockFetch(200, { ok: true, hit: null });
    vi.stubGlobal("fetch", spy);
    const res = await fetchNextHit("http://x", "ann-1", 2);
    expect(res.ok).toBe(true);
    expect((spy as any).mock.calls[0][0])
      .toBe("http://x/api/hits/next?annotator=ann-1&stage=2");
  });

  it("reports network failures as errors", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new Error("connection refused");
    }) as unknown as typeof fetch);
    const res = await fetchNextHit("http://x", "a");
    expect(res.ok).toBe(false);
    if (!res.ok) expect(res.error).toContain("connection refused");
  });
});
