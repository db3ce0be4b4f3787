import { ApiClient } from "./api.js";
import { actionForKey } from "./keys.js";
import { renderCompletion, renderHelp, renderSession } from "./render.js";
import { ReviewSession } from "./state.js";

type Mode = "annotate" | "triage";

const api = new ApiClient("");
const content = document.getElementById("content") as HTMLElement;
const helpBox = document.getElementById("help") as HTMLElement;
const tabs = {
  annotate: document.getElementById("tab-annotate") as HTMLButtonElement,
  triage: document.getElementById("tab-triage") as HTMLButtonElement,
};

let mode: Mode = "annotate";
let session = new ReviewSession([]);

async function loadSession(): Promise<void> {
  const response = await api.listSamples(
    mode === "triage" ? { outliersOnly: true, limit: 10000 } : { limit: 10000 },
  );
  session = new ReviewSession(response.items, response.outlier_threshold_cm);
  if (mode === "annotate") session.seekUnannotated(0);
  await draw();
}

async function draw(): Promise<void> {
  tabs.annotate.classList.toggle("active", mode === "annotate");
  tabs.triage.classList.toggle("active", mode === "triage");
  if (mode === "annotate" && session.complete) {
    renderCompletion(content, await api.getMetrics());
    return;
  }
  renderSession(content, session, handlers, mode === "triage");
}

const handlers = {
  onPick: (reference: import("./types.js").ReferenceClass) => {
    session.setReference(reference);
    void draw();
  },
  onToggleDistance: () => {
    session.toggleDistance();
    void draw();
  },
  onConfirm: () => {
    void session.confirm(api).then(draw);
  },
  onFlag: () => {
    void session.flagCurrent(api).then(draw);
  },
  onNext: () => {
    session.next();
    void draw();
  },
  onPrev: () => {
    session.prev();
    void draw();
  },
};

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement || event.target instanceof HTMLTextAreaElement) {
    return;
  }
  const action = actionForKey(event.key);
  if (!action) return;
  event.preventDefault();
  switch (action.kind) {
    case "reference":
      if (mode === "annotate") handlers.onPick(action.reference);
      break;
    case "toggle_distance":
      if (mode === "annotate") handlers.onToggleDistance();
      break;
    case "confirm":
      if (mode === "annotate") handlers.onConfirm();
      break;
    case "flag":
      handlers.onFlag();
      break;
    case "next":
      handlers.onNext();
      break;
    case "prev":
      handlers.onPrev();
      break;
  }
});

tabs.annotate.addEventListener("click", () => {
  mode = "annotate";
  void loadSession();
});
tabs.triage.addEventListener("click", () => {
  mode = "triage";
  void loadSession();
});

renderHelp(helpBox);
void loadSession();
