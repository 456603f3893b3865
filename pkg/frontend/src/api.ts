import type {
  Decision,
  EvidenceRecord,
  HistoryRow,
  PendingQuery,
  StatusResponse,
} from "./types.ts";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function getJson<T>(base: string, path: string): Promise<T> {
  const res = await fetch(`${base}${path}`);
  if (!res.ok) {
    throw new ApiError(res.status, `${path}: ${res.status}`);
  }
  return res.json() as Promise<T>;
}

export function fetchStatus(base: string): Promise<StatusResponse> {
  return getJson(base, "/status");
}

export async function fetchHistory(base: string): Promise<HistoryRow[]> {
  const body = await getJson<{ rows: HistoryRow[] }>(base, "/history");
  return body.rows;
}

export async function fetchEvidence(base: string): Promise<EvidenceRecord[]> {
  const body = await getJson<{ evidences: EvidenceRecord[] }>(base, "/evidence");
  return body.evidences;
}

export async function fetchPending(base: string): Promise<PendingQuery | null> {
  const body = await getJson<{ pending: PendingQuery | null }>(base, "/pending");
  return body.pending;
}

export async function postDecision(base: string, decision: Decision): Promise<void> {
  const res = await fetch(`${base}/decision`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(decision),
  });
  if (!res.ok) {
    let detail = `decision: ${res.status}`;
    try {
      const body = await res.json();
      if (body.detail) detail = body.detail;
    } catch {
      // not JSON; keep the status line
    }
    throw new ApiError(res.status, detail);
  }
}
