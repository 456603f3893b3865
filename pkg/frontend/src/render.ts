import type {
  EvidenceRecord,
  HistoryRow,
  PendingQuery,
  StatusResponse,
} from "./types.ts";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Wrap every whole-word occurrence of the queried tokens in <mark>. */
export function highlight(text: string, tokens: string[]): string {
  const wanted = new Set(tokens);
  return text
    .split(/\s+/)
    .map((word) =>
      wanted.has(word) ? `<mark>${escapeHtml(word)}</mark>` : escapeHtml(word),
    )
    .join(" ");
}

export function renderBanner(unreachable: boolean): string {
  if (!unreachable) return "";
  return `<div class="banner" role="alert">service unreachable — retrying…</div>`;
}

export function renderStatus(status: StatusResponse | null): string {
  if (status === null) return `<div class="status">connecting…</div>`;
  const err = status.error ? ` — ${escapeHtml(status.error)}` : "";
  return (
    `<div class="status">` +
    `<span class="state state-${status.status}">${status.status}</span>` +
    ` · iteration ${status.iterations}` +
    ` · ${status.evidence_count} active evidences${err}` +
    `</div>`
  );
}

export function renderQuery(pending: PendingQuery | null, submitting: boolean): string {
  if (pending === null) return "";
  const disabled = submitting ? " disabled" : "";
  const predicate = pending.predicate.map(escapeHtml).join(" ∧ ");
  const buttons = pending.labels
    .map(
      (l, i) =>
        `<button class="accept"${disabled} data-action="accept" data-label="${escapeHtml(l)}">` +
        `${escapeHtml(l)} (${(pending.avg_posterior[i] ?? 0).toFixed(2)})</button>`,
    )
    .join(" ");
  const examples = pending.examples
    .map(
      (ex) =>
        `<li class="example" data-instance="${ex.instance_id}">` +
        highlight(ex.text, ex.feature) +
        `</li>`,
    )
    .join("");
  return (
    `<section class="query" data-query-id="${pending.query_id}">` +
    `<h2>Does <code>${predicate}</code> indicate a label?</h2>` +
    `<p>average-posterior entropy: ${pending.entropy.toFixed(4)} nats</p>` +
    `<div class="decisions">${buttons} ` +
    `<button class="reject"${disabled} data-action="reject">reject</button></div>` +
    `<ul class="examples">${examples}</ul>` +
    `</section>`
  );
}

/** Inline SVG: accuracy (left axis, 0..1) and evidence count per iteration. */
export function renderHistoryChart(rows: HistoryRow[]): string {
  const w = 560;
  const h = 180;
  const pad = 30;
  if (rows.length === 0) return `<svg class="chart" width="${w}" height="${h}"></svg>`;
  const maxEv = Math.max(...rows.map((r) => r.evidence_count), 1);
  const x = (i: number) =>
    pad + (rows.length === 1 ? 0 : (i * (w - 2 * pad)) / (rows.length - 1));
  const yAcc = (a: number) => h - pad - a * (h - 2 * pad);
  const yEv = (c: number) => h - pad - (c / maxEv) * (h - 2 * pad);

  const accPts = rows
    .map((r, i) => (r.accuracy === null ? null : `${x(i)},${yAcc(r.accuracy)}`))
    .filter((p): p is string => p !== null)
    .join(" ");
  const evPts = rows.map((r, i) => `${x(i)},${yEv(r.evidence_count)}`).join(" ");
  return (
    `<svg class="chart" width="${w}" height="${h}" viewBox="0 0 ${w} ${h}">` +
    `<polyline class="evidence-line" fill="none" stroke="steelblue" points="${evPts}"/>` +
    (accPts ? `<polyline class="accuracy-line" fill="none" stroke="seagreen" points="${accPts}"/>` : "") +
    `<text x="${pad}" y="12" fill="steelblue">evidence (max ${maxEv})</text>` +
    (accPts ? `<text x="${w / 2}" y="12" fill="seagreen">accuracy</text>` : "") +
    `</svg>`
  );
}

function describe(e: EvidenceRecord): string {
  if (e.token !== undefined) return e.token;
  if (e.predicate !== undefined) return e.predicate.join(" ∧ ");
  if (e.instance !== undefined) return `instance ${e.instance}`;
  if (e.pair !== undefined) return `pair (${e.pair.join(", ")})`;
  return "?";
}

export function renderEvidenceTable(evidences: EvidenceRecord[]): string {
  const active = evidences.filter((e) => e.status === "active");
  const rows = active
    .map(
      (e) =>
        `<tr><td>${escapeHtml(describe(e))}</td><td>${escapeHtml(e.label ?? "—")}</td>` +
        `<td>${escapeHtml(e.kind)}</td><td>${e.weight.toFixed(3)}</td>` +
        `<td>${escapeHtml(e.source)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="evidence"><thead>` +
    `<tr><th>evidence</th><th>label</th><th>kind</th><th>weight</th><th>source</th></tr>` +
    `</thead><tbody>${rows}</tbody></table>`
  );
}

export function renderRejected(evidences: EvidenceRecord[]): string {
  const names = [
    ...new Set(
      evidences.filter((e) => e.status === "rejected").map((e) => describe(e)),
    ),
  ];
  if (names.length === 0) return "";
  const items = names.map((n) => `<li>${escapeHtml(n)}</li>`).join("");
  return `<div class="rejected"><h3>rejected predicates</h3><ul>${items}</ul></div>`;
}
