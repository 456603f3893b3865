import {
  ApiError,
  fetchEvidence,
  fetchHistory,
  fetchPending,
  fetchStatus,
  postDecision,
} from "./api.ts";
import type {
  Decision,
  EvidenceRecord,
  HistoryRow,
  PendingQuery,
  StatusResponse,
} from "./types.ts";

export const POLL_INTERVAL_MS = 2000;

export interface AppState {
  status: StatusResponse | null;
  history: HistoryRow[];
  evidences: EvidenceRecord[];
  pending: PendingQuery | null;
  unreachable: boolean;
  submitting: boolean;
}

export function initialState(): AppState {
  return {
    status: null,
    history: [],
    evidences: [],
    pending: null,
    unreachable: false,
    submitting: false,
  };
}

/**
 * All view state is rebuilt from the API on every poll; nothing besides
 * the in-flight decision survives a page refresh.
 */
export class App {
  state: AppState = initialState();

  constructor(
    private base: string,
    private onChange: (state: AppState) => void = () => {},
  ) {}

  async poll(): Promise<void> {
    try {
      const [status, history, evidences, pending] = await Promise.all([
        fetchStatus(this.base),
        fetchHistory(this.base),
        fetchEvidence(this.base),
        fetchPending(this.base),
      ]);
      this.state = { ...this.state, status, history, evidences, pending, unreachable: false };
    } catch {
      // keep the last good view; just raise the banner
      this.state = { ...this.state, unreachable: true };
    }
    this.onChange(this.state);
  }

  /**
   * The panel clears only after the service acknowledges the decision:
   * a lost accept would silently change the learned model, so there is
   * no optimistic update. A stale-query conflict (409) means the loop
   * moved on; re-poll and render whatever is pending now.
   */
  async decide(action: "accept" | "reject", label?: string): Promise<void> {
    const pending = this.state.pending;
    if (pending === null || this.state.submitting) return;
    const decision: Decision =
      action === "accept"
        ? { query_id: pending.query_id, action, label: label ?? "" }
        : { query_id: pending.query_id, action };
    this.state = { ...this.state, submitting: true };
    this.onChange(this.state);
    try {
      await postDecision(this.base, decision);
      this.state = { ...this.state, pending: null, submitting: false };
    } catch (err) {
      this.state = { ...this.state, submitting: false };
      if (!(err instanceof ApiError && err.status === 409)) {
        throw err;
      }
    }
    this.onChange(this.state);
    await this.poll();
  }

  start(): () => void {
    void this.poll();
    const timer = setInterval(() => void this.poll(), POLL_INTERVAL_MS);
    return () => clearInterval(timer);
  }
}
