import { App } from "./app.ts";
import {
  renderBanner,
  renderEvidenceTable,
  renderHistoryChart,
  renderQuery,
  renderRejected,
  renderStatus,
} from "./render.ts";

const base = new URLSearchParams(window.location.search).get("service") ?? "";
const root = document.getElementById("app")!;

const app = new App(base, (state) => {
  root.innerHTML =
    renderBanner(state.unreachable) +
    renderStatus(state.status) +
    renderQuery(state.pending, state.submitting) +
    renderHistoryChart(state.history) +
    renderEvidenceTable(state.evidences) +
    renderRejected(state.evidences);
});

root.addEventListener("click", (ev) => {
  const el = (ev.target as HTMLElement).closest("button[data-action]");
  if (!(el instanceof HTMLButtonElement) || el.disabled) return;
  const action = el.dataset.action as "accept" | "reject";
  void app.decide(action, el.dataset.label);
});

app.start();
