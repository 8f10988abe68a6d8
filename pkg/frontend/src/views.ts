// DOM builders for every panel. Each builder is a function of server data
// plus callbacks, so the page is rebuilt from payloads alone and carries no
// hidden state of its own.

import {
  buildHighlightedTokens,
  formatDelta,
  highlightBackground,
  markFor,
  markSymbol,
  reportDeltas,
  taskColor,
} from "./highlight.js";
import type { HighlightedToken, Mark } from "./highlight.js";
import type {
  DebugReport,
  ExampleDetail,
  FeedbackVerb,
  InstanceItem,
  InstancePage,
  MarkMap,
  TaskExplanationResponse,
} from "./types.js";

type Child = Node | string | null;

export function h(
  tag: string,
  attrs: Record<string, string | null> = {},
  ...children: Child[]
): HTMLElement {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value === null) continue;
    if (key === "class") el.className = value;
    else el.setAttribute(key, value);
  }
  for (const child of children) {
    if (child === null) continue;
    el.append(child);
  }
  return el;
}

export interface TokenPickHandler {
  (word: string, verb: FeedbackVerb): void;
}

function tokenSpan(token: HighlightedToken, onPick: TokenPickHandler | null): HTMLElement {
  const span = h(
    "span",
    { class: "token", "data-word": token.text },
    token.text,
  );
  const background = highlightBackground(token.score);
  if (background !== null) span.style.background = background;
  span.title = `score ${token.score.toFixed(3)}`;
  if (token.mark !== "none") {
    span.append(h("span", { class: "mark" }, markSymbol(token.mark)));
    span.classList.add(`mark-${token.mark}`);
  }
  if (onPick !== null) {
    span.classList.add("clickable");
    span.addEventListener("click", (event) => {
      event.stopPropagation();
      openTokenPopup(span, token.text, onPick);
    });
  }
  return span;
}

/** One pop-up at a time, anchored to the clicked token. */
export function openTokenPopup(
  anchor: HTMLElement,
  word: string,
  onPick: TokenPickHandler,
): HTMLElement {
  closeTokenPopup(anchor.ownerDocument);
  const popup = h("div", { class: "token-popup", "data-word": word });
  for (const verb of ["add", "remove", "reset"] as const) {
    const button = h("button", { "data-verb": verb }, verb);
    button.addEventListener("click", (event) => {
      event.stopPropagation();
      closeTokenPopup(anchor.ownerDocument);
      onPick(word, verb);
    });
    popup.append(button);
  }
  anchor.append(popup);
  return popup;
}

export function closeTokenPopup(doc: Document): void {
  for (const open of Array.from(doc.querySelectorAll(".token-popup"))) {
    open.remove();
  }
}

/**
 * The two-deck instance card: the sentence with its gold label on top, the
 * same sentence re-rendered with score-proportional highlights and the
 * predicted label underneath.
 */
export function renderInstanceCard(
  item: InstanceItem,
  marks: MarkMap,
  labelName: (label: number) => string,
  onPick: TokenPickHandler,
): HTMLElement {
  const tokens = buildHighlightedTokens(item.tokens, item.scores, marks);
  const upper = h(
    "div",
    { class: "deck words-deck" },
    h("span", { class: "deck-title" }, "Words"),
    h(
      "span",
      { class: "token-row" },
      ...item.tokens.map((t) => h("span", { class: "token-plain" }, t)),
    ),
    h("span", { class: "gold-label" }, labelName(item.gold_label)),
  );
  const lower = h(
    "div",
    { class: "deck output-deck" },
    h("span", { class: "deck-title" }, "Model output"),
    h(
      "span",
      { class: "token-row" },
      ...tokens.map((t) => tokenSpan(t, onPick)),
    ),
    h("span", { class: "predicted-label" }, labelName(item.predicted_label)),
  );
  return h(
    "div",
    { class: "instance-card", "data-example": item.example_id },
    upper,
    lower,
  );
}

export interface InstanceViewHandlers {
  labelName: (label: number) => string;
  onPick: (exampleId: string, word: string, verb: FeedbackVerb) => void;
  onPage: (page: number) => void;
}

export function renderInstanceView(
  page: InstancePage,
  overlayMarks: (item: InstanceItem) => MarkMap,
  handlers: InstanceViewHandlers,
): HTMLElement {
  const cards = page.items.map((item) =>
    renderInstanceCard(item, overlayMarks(item), handlers.labelName, (word, verb) =>
      handlers.onPick(item.example_id, word, verb),
    ),
  );
  const lastPage = Math.max(1, Math.ceil(page.total / page.page_size));
  const prev = h("button", { class: "page-prev" }, "prev");
  const next = h("button", { class: "page-next" }, "next");
  if (page.page <= 1) prev.setAttribute("disabled", "");
  if (page.page >= lastPage) next.setAttribute("disabled", "");
  prev.addEventListener("click", () => handlers.onPage(page.page - 1));
  next.addEventListener("click", () => handlers.onPage(page.page + 1));
  return h(
    "section",
    { class: "instance-view" },
    h("h2", {}, `Instances (${page.total} correctly predicted)`),
    ...cards,
    h(
      "div",
      { class: "pager" },
      prev,
      h("span", { class: "page-number" }, `page ${page.page} / ${lastPage}`),
      next,
    ),
  );
}

export interface TaskPanelHandlers {
  onPick: (word: string, verb: FeedbackVerb) => void;
  onDrilldown: (word: string) => void;
}

/** Ranked word list; color mirrors the live task-scope op per word. */
export function renderTaskPanel(
  response: TaskExplanationResponse,
  marks: MarkMap,
  handlers: TaskPanelHandlers,
): HTMLElement {
  const rows = response.entries.map((entry) => {
    const mark = markFor(entry.word, marks);
    const color = taskColor(mark === "none" ? "none" : mark);
    const wordEl = h("span", { class: "task-word" }, entry.word);
    if (color !== null) wordEl.style.color = color;
    wordEl.addEventListener("click", () => handlers.onDrilldown(entry.word));
    const addBtn = h("button", { class: "task-add" }, "add");
    const removeBtn = h("button", { class: "task-remove" }, "remove");
    const resetBtn = h("button", { class: "task-reset" }, "reset");
    addBtn.addEventListener("click", () => handlers.onPick(entry.word, "add"));
    removeBtn.addEventListener("click", () =>
      handlers.onPick(entry.word, "remove"),
    );
    resetBtn.addEventListener("click", () =>
      handlers.onPick(entry.word, "reset"),
    );
    return h(
      "li",
      { class: "task-row", "data-word": entry.word },
      wordEl,
      h("span", { class: "mean-importance" }, entry.mean_importance.toFixed(3)),
      h("span", { class: "support-count" }, `${entry.support.length} examples`),
      addBtn,
      removeBtn,
      resetBtn,
    );
  });
  return h(
    "section",
    { class: "task-panel" },
    h("h2", {}, "Task explanation"),
    h("ol", { class: "task-list" }, ...rows),
  );
}

/** Every example containing the drilled-down word, with highlights. */
export function renderDrilldown(
  word: string,
  examples: ExampleDetail[],
  overlayMarks: (detail: ExampleDetail) => MarkMap,
  labelName: (label: number) => string,
  onClose: () => void,
): HTMLElement {
  const cards = examples.map((detail) => {
    const tokens = buildHighlightedTokens(
      detail.tokens,
      detail.scores,
      overlayMarks(detail),
    );
    return h(
      "div",
      {
        class: detail.correct ? "drill-example" : "drill-example incorrect",
        "data-example": detail.example_id,
      },
      h(
        "span",
        { class: "token-row" },
        ...tokens.map((t) => tokenSpan(t, null)),
      ),
      h("span", { class: "gold-label" }, labelName(detail.gold_label)),
      h("span", { class: "predicted-label" }, labelName(detail.predicted_label)),
    );
  });
  const close = h("button", { class: "drill-close" }, "close");
  close.addEventListener("click", onClose);
  return h(
    "section",
    { class: "drilldown", "data-word": word },
    h("h2", {}, `Examples containing "${word}" (${examples.length})`),
    close,
    ...cards,
  );
}

export interface RetrainState {
  round: number;
  liveOpCount: number;
  running: boolean;
  report: DebugReport | null;
  error: string | null;
}

export function renderRetrainControls(
  state: RetrainState,
  onStart: () => void,
): HTMLElement {
  const button = h("button", { class: "retrain-start" }, "Retrain");
  if (state.liveOpCount === 0 || state.running) {
    button.setAttribute("disabled", "");
  }
  button.addEventListener("click", onStart);
  const parts: Child[] = [
    h("span", { class: "round-badge" }, `round ${state.round}`),
    button,
  ];
  if (state.liveOpCount === 0) {
    parts.push(
      h(
        "span",
        { class: "retrain-hint" },
        "mark at least one word before retraining",
      ),
    );
  }
  if (state.running) {
    parts.push(h("span", { class: "retrain-progress" }, "retraining…"));
  }
  if (state.error !== null) {
    parts.push(h("div", { class: "retrain-error" }, state.error));
  }
  if (state.report !== null) {
    parts.push(
      h(
        "ul",
        { class: "report-deltas" },
        ...reportDeltas(state.report).map((row) =>
          h("li", {}, formatDelta(row)),
        ),
      ),
    );
  }
  return h("section", { class: "retrain-controls" }, ...parts);
}

export function renderBanner(): HTMLElement {
  return h(
    "div",
    { class: "banner retraining-banner" },
    "A retraining round is running; the view will refresh when it finishes.",
  );
}

export function showToast(root: HTMLElement, message: string): HTMLElement {
  const toast = h("div", { class: "toast" }, message);
  root.append(toast);
  return toast;
}
