// Application state. The rendered UI is always a pure projection of the
// last confirmed server state plus pending optimistic actions; a hard
// refresh re-fetches the server state and loses nothing that was recorded.

import type { ReviewerPayload, TaskPayload } from "./types";

export interface PendingDecision {
  articleId: string;
  label: string;
  note: string;
}

export interface Filters {
  state: string; // "", "open", "awaiting_escalation", "resolved"
  topic: string;
  source: string;
}

export interface Banner {
  kind: "error" | "info" | "conflict";
  text: string;
  retry?: () => void;
}

export interface AppState {
  reviewer: ReviewerPayload | null;
  tasks: Map<string, TaskPayload>; // last confirmed server state
  pending: Map<string, PendingDecision>; // optimistic, not yet confirmed
  read: Set<string>;
  filters: Filters;
  banner: Banner | null;
  blind: boolean;
  route: { screen: "queue" } | { screen: "task"; articleId: string };
}

export function initialState(): AppState {
  return {
    reviewer: null,
    tasks: new Map(),
    pending: new Map(),
    read: new Set(),
    filters: { state: "", topic: "", source: "" },
    banner: null,
    blind: true,
    route: { screen: "queue" },
  };
}

export function confirmTask(state: AppState, task: TaskPayload): void {
  state.tasks.set(task.article_id, task);
  state.pending.delete(task.article_id);
}

export function rollbackPending(state: AppState, articleId: string): void {
  state.pending.delete(articleId);
}

/** Has this reviewer already decided (confirmed or optimistically)? */
export function hasDecided(state: AppState, task: TaskPayload): boolean {
  if (state.pending.has(task.article_id)) return true;
  const me = state.reviewer?.id;
  return task.decisions.some((d) => d.reviewer_id === me);
}

/** A task is decidable for me iff it is not resolved and I have not decided. */
export function decidable(state: AppState, task: TaskPayload): boolean {
  if (task.state === "resolved") return false;
  if (state.reviewer?.role === "senior" && task.state !== "awaiting_escalation") {
    return false; // seniors decide escalated tasks only
  }
  return !hasDecided(state, task);
}

export function visibleTasks(state: AppState): TaskPayload[] {
  const { filters } = state;
  return [...state.tasks.values()].filter((task) => {
    if (filters.state && task.state !== filters.state) return false;
    if (filters.topic && task.article?.topic !== filters.topic) return false;
    if (filters.source && task.article?.source !== filters.source) return false;
    return true;
  });
}

export function tallyBadge(task: TaskPayload): string {
  const counts = new Map<string, number>();
  for (const label of Object.values(task.vote_record.votes)) {
    counts.set(label, (counts.get(label) ?? 0) + 1);
  }
  const ordered = [...counts.values()].sort((a, b) => b - a);
  while (ordered.length < 2) ordered.push(0);
  const base = ordered.join("–"); // e.g. "2–2"
  const excluded = task.vote_record.excluded_count;
  return excluded > 0 ? `${base}, ${excluded} excluded` : base;
}
