import { afterEach, describe, expect, it, vi } from "vitest";

import {
  ApiError,
  fetchEvidence,
  fetchHistory,
  fetchPending,
  fetchStatus,
  postDecision,
} from "../src/api.ts";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("read endpoints", () => {
  it("unwraps the history rows", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse({ rows: [{ iteration: 1 }] })));
    const rows = await fetchHistory("");
    expect(rows).toEqual([{ iteration: 1 }]);
    expect(fetch).toHaveBeenCalledWith("/history");
  });

  it("unwraps evidence and pending", async () => {
    vi.stubGlobal("fetch", vi.fn(async (url: string) =>
      url === "/evidence"
        ? jsonResponse({ evidences: [] })
        : jsonResponse({ pending: null }),
    ));
    expect(await fetchEvidence("")).toEqual([]);
    expect(await fetchPending("")).toBeNull();
  });

  it("prefixes the service base URL", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse({ status: "idle" })));
    await fetchStatus("http://localhost:8000");
    expect(fetch).toHaveBeenCalledWith("http://localhost:8000/status");
  });

  it("throws ApiError on a failed read", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse({}, 500)));
    await expect(fetchStatus("")).rejects.toBeInstanceOf(ApiError);
  });
});

describe("postDecision", () => {
  it("sends the decision body and resolves on 200", async () => {
    const mock = vi.fn(async () => jsonResponse({ ok: true }));
    vi.stubGlobal("fetch", mock);
    await postDecision("", { query_id: 2, action: "accept", label: "pos" });
    const [url, init] = mock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("/decision");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({
      query_id: 2,
      action: "accept",
      label: "pos",
    });
  });

  it("surfaces the conflict status for stale queries", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse({ detail: "no pending query with id 7" }, 409)),
    );
    const err = await postDecision("", { query_id: 7, action: "reject" }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.message).toContain("no pending query");
  });
});
