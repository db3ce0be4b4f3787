/** DOM rendering. Values from the API are displayed verbatim, never recomputed. */

import { KEY_HELP, REFERENCE_KEYS } from "./keys.js";
import type { ReviewSession, UiSampleView } from "./state.js";
import type { MetricsResponse, ReferenceClass } from "./types.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(value: number | null): string {
  return value === null ? "-" : value.toFixed(2);
}

const KEY_FOR_REFERENCE = new Map<ReferenceClass, string>(
  Object.entries(REFERENCE_KEYS).map(([key, ref]) => [ref, key]),
);

function measurementsTable(view: UiSampleView, thresholdCm: number): HTMLElement {
  const table = el("table", "measurements");
  const head = el("tr");
  for (const column of ["model", "strategy", "step 1", "pred (cm)", "residual (cm)", ""]) {
    head.appendChild(el("th", undefined, column));
  }
  table.appendChild(head);
  for (const m of view.item.measurements) {
    const row = el("tr", m.miss ? "miss" : undefined);
    row.appendChild(el("td", undefined, m.model_id));
    row.appendChild(el("td", undefined, m.strategy));
    row.appendChild(
      el("td", undefined, m.step1_class ? m.step1_class + (m.degraded_step1 ? " (degraded)" : "") : "-"),
    );
    row.appendChild(el("td", undefined, m.miss ? `miss: ${m.miss_reason}` : fmt(m.pred_cm)));
    const residual = el("td", undefined, fmt(m.error_cm));
    if (m.error_cm !== null && Math.abs(m.error_cm) > thresholdCm) {
      residual.classList.add("outlier");
    }
    row.appendChild(residual);
    row.appendChild(el("td"));
    table.appendChild(row);
  }
  return table;
}

function classButtons(view: UiSampleView, onPick: (ref: ReferenceClass) => void): HTMLElement {
  const box = el("div", "classes");
  for (const [ref, key] of KEY_FOR_REFERENCE.entries()) {
    const button = el("button", view.draft.reference === ref ? "selected" : undefined);
    button.appendChild(el("kbd", undefined, key));
    button.appendChild(document.createTextNode(" " + ref.replaceAll("_", " ")));
    button.addEventListener("click", () => onPick(ref));
    box.appendChild(button);
  }
  return box;
}

export interface Handlers {
  onPick: (ref: ReferenceClass) => void;
  onToggleDistance: () => void;
  onConfirm: () => void;
  onFlag: () => void;
  onNext: () => void;
  onPrev: () => void;
}

export function renderSession(
  container: HTMLElement,
  session: ReviewSession,
  handlers: Handlers,
  triage: boolean,
): void {
  container.replaceChildren();
  const view = session.current;
  if (!view) {
    container.appendChild(el("p", "empty", triage ? "No outliers to triage." : "No samples."));
    return;
  }
  const header = el("div", "sample-header");
  header.appendChild(
    el(
      "span",
      "progress",
      `${session.cursor + 1} / ${session.views.length}` +
        (triage ? " outliers" : ` | annotated ${session.annotatedCount}`),
    ),
  );
  header.appendChild(el("span", "sample-id", `${view.item.sample_id} (truth ${view.item.truth_cm} cm)`));
  if (view.dirty) header.appendChild(el("span", "badge dirty", "unsaved"));
  if (view.saving) header.appendChild(el("span", "badge", "saving..."));
  if (view.item.flagged) header.appendChild(el("span", "badge flagged", "flagged"));
  if (view.error) {
    const retry = el("span", "badge error", `${view.error} - press Enter to retry`);
    header.appendChild(retry);
  }
  container.appendChild(header);

  const split = el("div", "split");
  const figure = el("figure");
  const img = el("img") as HTMLImageElement;
  img.src = view.item.image_url;
  img.alt = view.item.sample_id;
  figure.appendChild(img);
  split.appendChild(figure);

  const panel = el("div", "panel");
  if (!triage) {
    panel.appendChild(classButtons(view, handlers.onPick));
    const distance = el("button", "distance");
    distance.appendChild(el("kbd", undefined, "d"));
    distance.appendChild(document.createTextNode(` distance: ${view.draft.distance.replaceAll("_", " ")}`));
    distance.addEventListener("click", handlers.onToggleDistance);
    panel.appendChild(distance);
    const confirm = el("button", "confirm");
    confirm.appendChild(el("kbd", undefined, "Enter"));
    confirm.appendChild(document.createTextNode(" save and next"));
    confirm.addEventListener("click", handlers.onConfirm);
    panel.appendChild(confirm);
  } else {
    const flag = el("button", view.item.flagged ? "flag on" : "flag");
    flag.appendChild(el("kbd", undefined, "x"));
    flag.appendChild(
      document.createTextNode(view.item.flagged ? " unflag (in re-run list)" : " flag for re-run"),
    );
    flag.addEventListener("click", handlers.onFlag);
    panel.appendChild(flag);
  }
  panel.appendChild(measurementsTable(view, session.outlierThresholdCm));
  split.appendChild(panel);
  container.appendChild(split);

  const nav = el("div", "nav");
  const prev = el("button", undefined, "< prev (k)");
  prev.addEventListener("click", handlers.onPrev);
  const next = el("button", undefined, "next (j) >");
  next.addEventListener("click", handlers.onNext);
  nav.appendChild(prev);
  nav.appendChild(next);
  container.appendChild(nav);
}

export function renderCompletion(container: HTMLElement, metrics: MetricsResponse): void {
  container.replaceChildren();
  container.appendChild(el("h2", undefined, "All samples annotated"));
  const list = el("ul", "counts");
  for (const [cls, count] of Object.entries(metrics.annotation_counts)) {
    list.appendChild(el("li", undefined, `${cls.replaceAll("_", " ")}: ${count}`));
  }
  list.appendChild(el("li", undefined, `unannotated: ${metrics.unannotated}`));
  container.appendChild(list);
  container.appendChild(
    el("p", "hint", `run ${metrics.run_id} | policy ${metrics.policy} | counts from /api/metrics`),
  );
}

export function renderHelp(container: HTMLElement): void {
  const list = el("dl", "help");
  for (const [key, what] of KEY_HELP) {
    list.appendChild(el("dt", undefined, key));
    list.appendChild(el("dd", undefined, what));
  }
  container.replaceChildren(list);
}
