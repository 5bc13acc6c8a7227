// DOM rendering. Every render rebuilds its screen from state, so the UI
// can never drift from the projected state.

import { aliasMap, displayName } from "./blind";
import {
  type AppState,
  decidable,
  hasDecided,
  tallyBadge,
  visibleTasks,
} from "./state";
import type { TaskPayload } from "./types";

export interface Handlers {
  openTask(articleId: string): void;
  decide(articleId: string, label: string, note: string): void;
  escalate(articleId: string): void;
  setFilter(name: "state" | "topic" | "source", value: string): void;
  toggleBlind(checked: boolean): void;
  refresh(): void;
  logout(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

const STATE_LABELS: Record<string, string> = {
  open: "Open",
  awaiting_escalation: "Awaiting escalation",
  resolved: "Resolved",
};

export function render(root: HTMLElement, state: AppState, handlers: Handlers): void {
  root.replaceChildren();
  root.append(renderHeader(state, handlers));
  if (state.banner) {
    root.append(renderBanner(state, handlers));
  }
  if (state.route.screen === "queue") {
    root.append(renderQueue(state, handlers));
  } else {
    const task = state.tasks.get(state.route.articleId);
    root.append(
      task
        ? renderTask(state, task, handlers)
        : el("p", { class: "empty" }, "Unknown task."),
    );
  }
}

function renderHeader(state: AppState, handlers: Handlers): HTMLElement {
  const who = state.reviewer
    ? `${state.reviewer.display_name} (${state.reviewer.role})`
    : "";
  const blindToggle = el("input", {
    type: "checkbox",
    id: "blind-toggle",
  }) as HTMLInputElement;
  blindToggle.checked = state.blind;
  blindToggle.addEventListener("change", () => handlers.toggleBlind(blindToggle.checked));
  const logout = el("button", { class: "link", id: "logout" }, "Sign out");
  logout.addEventListener("click", () => handlers.logout());
  return el(
    "header",
    {},
    el("h1", {}, "Review queue"),
    el(
      "div",
      { class: "header-right" },
      el("label", { for: "blind-toggle" }, blindToggle, " Blind mode"),
      el("span", { class: "who" }, who),
      logout,
    ),
  );
}

function renderBanner(state: AppState, handlers: Handlers): HTMLElement {
  const banner = state.banner!;
  const node = el("div", { class: `banner banner-${banner.kind}` }, banner.text);
  if (banner.retry) {
    const retry = el("button", { class: "retry" }, banner.kind === "conflict" ? "Refresh" : "Retry");
    retry.addEventListener("click", () => banner.retry!());
    node.append(" ", retry);
  }
  return node;
}

function renderFilters(state: AppState, handlers: Handlers): HTMLElement {
  const topics = new Set<string>();
  const sources = new Set<string>();
  for (const task of state.tasks.values()) {
    if (task.article) {
      topics.add(task.article.topic);
      sources.add(task.article.source);
    }
  }
  const make = (
    name: "state" | "topic" | "source",
    options: string[],
    labels?: Record<string, string>,
  ) => {
    const select = el("select", { id: `filter-${name}` }) as HTMLSelectElement;
    select.append(el("option", { value: "" }, `All ${name}s`));
    for (const option of options) {
      select.append(el("option", { value: option }, labels?.[option] ?? option));
    }
    select.value = state.filters[name];
    select.addEventListener("change", () => handlers.setFilter(name, select.value));
    return select;
  };
  return el(
    "div",
    { class: "filters" },
    make("state", ["open", "awaiting_escalation", "resolved"], STATE_LABELS),
    make("topic", [...topics].sort()),
    make("source", [...sources].sort()),
  );
}

function renderQueue(state: AppState, handlers: Handlers): HTMLElement {
  const section = el("section", { class: "queue" });
  section.append(renderFilters(state, handlers));
  const senior = state.reviewer?.role === "senior";

  const tasks = visibleTasks(state);
  if (tasks.length === 0) {
    section.append(el("p", { class: "empty" }, "No contested items."));
    return section;
  }

  const groups: [string, TaskPayload[]][] = senior
    ? [
        ["Awaiting escalation", tasks.filter((t) => t.state === "awaiting_escalation")],
        ["Open", tasks.filter((t) => t.state === "open")],
        ["Resolved", tasks.filter((t) => t.state === "resolved")],
      ]
    : [
        ["Open", tasks.filter((t) => t.state === "open")],
        ["Resolved", tasks.filter((t) => t.state === "resolved")],
      ];

  for (const [title, group] of groups) {
    if (group.length === 0 && title !== "Open") continue;
    const list = el("ul", { class: "task-list", "data-group": title });
    for (const task of group) {
      list.append(renderQueueRow(state, task, handlers));
    }
    section.append(el("h2", {}, `${title} (${group.length})`), list);
  }
  return section;
}

function renderQueueRow(state: AppState, task: TaskPayload, handlers: Handlers): HTMLElement {
  const row = el("li", {
    class: `task-row state-${task.state}${state.read.has(task.article_id) ? " read" : " unread"}`,
    "data-article-id": task.article_id,
  });
  const open = el("button", { class: "open-task" });
  open.append(
    el("span", { class: "task-title" }, task.article?.title ?? task.article_id),
    el("span", { class: "badge tally" }, tallyBadge(task)),
    el("span", { class: "badge state" }, STATE_LABELS[task.state] ?? task.state),
  );
  if (task.article) {
    open.append(
      el("span", { class: "meta" }, `${task.article.topic} · ${task.article.source}`),
    );
  }
  if (task.state === "resolved" && task.resolution) {
    open.append(el("span", { class: "badge resolution" }, task.resolution));
  }
  open.addEventListener("click", () => handlers.openTask(task.article_id));
  row.append(open);
  return row;
}

function renderTask(state: AppState, task: TaskPayload, handlers: Handlers): HTMLElement {
  const aliases = aliasMap(task);
  const section = el("section", { class: "task-detail", "data-article-id": task.article_id });

  const back = el("button", { class: "link back" }, "← Back to queue");
  back.addEventListener("click", () => handlers.refresh());
  section.append(back);

  if (task.article) {
    section.append(
      el("h2", {}, task.article.title),
      el(
        "p",
        { class: "meta" },
        `${task.article.topic} · ${task.article.source} · ${task.article.published_at}`,
      ),
      el("article", { class: "article-text" }, task.article.text),
    );
  } else {
    section.append(el("h2", {}, task.article_id));
  }

  section.append(
    el(
      "p",
      { class: "vote-summary" },
      `Panel: ${tallyBadge(task)} · majority: ${task.vote_record.majority_label}`,
    ),
  );

  const annotationList = el("ul", { class: "annotations" });
  for (const annotation of task.annotations) {
    const name = displayName(annotation.endpoint, aliases, state.blind);
    const item = el("li", { class: "annotation" });
    item.append(
      el("span", { class: "model-name" }, name),
      el(
        "span",
        { class: "annotation-label" },
        annotation.label ?? `no parseable label (${annotation.failure ?? "failed"})`,
      ),
    );
    if (annotation.explanation) {
      item.append(el("p", { class: "explanation" }, annotation.explanation));
    }
    annotationList.append(item);
  }
  section.append(el("h3", {}, "Model annotations"), annotationList);

  if (task.state === "resolved") {
    section.append(
      el(
        "p",
        { class: "resolved-note" },
        `Resolved: ${task.resolution} (${task.resolved_by ?? ""})`,
      ),
    );
  }

  const canDecide = decidable(state, task);
  const note = el("textarea", {
    class: "note",
    id: "decision-note",
    placeholder: "Optional note",
  }) as HTMLTextAreaElement;
  const buttons = el("div", { class: "decision-buttons" });
  for (const label of ["Factually Correct", "Factually Incorrect"]) {
    const button = el(
      "button",
      { class: "decide", "data-label": label },
      label,
    ) as HTMLButtonElement;
    button.disabled = !canDecide;
    button.addEventListener("click", () => {
      if (!decidable(state, task)) return; // duplicate clicks are no-ops
      handlers.decide(task.article_id, label, note.value);
    });
    buttons.append(button);
  }
  section.append(el("h3", {}, "Your decision"), note, buttons);

  if (hasDecided(state, task) && task.state !== "resolved") {
    section.append(
      el("p", { class: "decided-note" }, "Your decision is recorded; waiting for others."),
    );
  }

  if (task.state === "open" && state.reviewer?.role !== "senior") {
    const escalate = el("button", { class: "escalate" }, "Flag for senior review");
    escalate.addEventListener("click", () => handlers.escalate(task.article_id));
    section.append(escalate);
  }

  const decisions = el("ul", { class: "decisions" });
  for (const decision of task.decisions) {
    decisions.append(
      el(
        "li",
        {},
        `${decision.reviewer_id === state.reviewer?.id ? "you" : "another reviewer"}: ${decision.label}` +
          (decision.note ? ` — ${decision.note}` : ""),
      ),
    );
  }
  if (task.decisions.length > 0) {
    section.append(el("h3", {}, `Decisions (${task.decisions.length})`), decisions);
  }
  return section;
}

export function renderLogin(root: HTMLElement, onSubmit: (token: string) => void, error?: string): void {
  root.replaceChildren();
  const input = el("input", {
    type: "password",
    id: "token-input",
    placeholder: "Reviewer token",
  }) as HTMLInputElement;
  const button = el("button", { id: "login" }, "Sign in");
  button.addEventListener("click", () => onSubmit(input.value));
  const form = el(
    "section",
    { class: "login" },
    el("h1", {}, "Reviewer sign-in"),
    input,
    button,
  );
  if (error) form.append(el("p", { class: "login-error" }, error));
  root.append(form);
}
