/** Thin typed client for the annotation service.
 *
 * Selections are validated against the option ids the server sent, so a
 * POST body can never contain an id the UI invented.
 */

import type { ApiResult, HitView, Progress } from "./types.js";

async function request<T>(base: string, path: string,
                          init?: RequestInit): Promise<ApiResult<T>> {
  let res: Response;
  try {
    res = await fetch(base + path, init);
  } catch (err) {
    return { ok: false, status: 0, error: String(err) };
  }
  let data: any = null;
  try {
    data = await res.json();
  } catch {
    return { ok: false, status: res.status, error: "invalid JSON response" };
  }
  if (!res.ok || data.ok === false) {
    return {
      ok: false,
      status: res.status,
      error: typeof data?.error === "string" ? data.error : res.statusText,
    };
  }
  return { ok: true, body: data as T };
}

export async function fetchNextHit(
  base: string, annotator: string, stage?: number,
): Promise<ApiResult<{ hit: HitView | null }>> {
  const params = new URLSearchParams({ annotator });
  if (stage !== undefined) params.set("stage", String(stage));
  return request(base, `/api/hits/next?${params}`);
}

export async function fetchHit(
  base: string, hitId: string,
): Promise<ApiResult<{ hit: HitView }>> {
  return request(base, `/api/hits/${encodeURIComponent(hitId)}`);
}

export async function submitSelection(
  base: string, hit: HitView, annotator: string, selection: string[],
): Promise<ApiResult<{ hit: HitView }>> {
  const known = new Set(hit.options.map((o) => o.id));
  const unknown = selection.filter((id) => !known.has(id));
  if (selection.length === 0 || unknown.length > 0) {
    return {
      ok: false,
      status: 0,
      error: unknown.length
        ? `selection not offered by server: ${unknown.join(", ")}`
        : "nothing selected",
    };
  }
  return request(base, `/api/hits/${encodeURIComponent(hit.id)}/response`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ annotator, selection }),
  });
}

export async function fetchProgress(
  base: string,
): Promise<ApiResult<{ progress: Progress }>> {
  return request(base, "/api/project/progress");
}
