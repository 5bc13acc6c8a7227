// App controller: authentication, routing, data loading, and the
// optimistic decision flow with rollback, conflict prompts, and offline
// replay. All server interaction goes through the ReviewApi client.

import { ApiError, NetworkError, ReviewApi } from "./api";
import { OfflineQueue } from "./offline";
import {
  type AppState,
  confirmTask,
  initialState,
  rollbackPending,
} from "./state";
import { render, renderLogin, type Handlers } from "./views";

export interface AppOptions {
  root: HTMLElement;
  baseUrl?: string;
  storage?: Storage;
}

const TOKEN_KEY = "factpanel.token";
const BLIND_KEY = "factpanel.blind";

export class App {
  readonly state: AppState;
  private api: ReviewApi | null = null;
  private readonly root: HTMLElement;
  private readonly baseUrl: string;
  private readonly storage: Storage;
  readonly offline: OfflineQueue;

  constructor(options: AppOptions) {
    this.root = options.root;
    this.baseUrl = options.baseUrl ?? "";
    this.storage = options.storage ?? window.localStorage;
    this.offline = new OfflineQueue(this.storage);
    this.state = initialState();
    this.state.blind = (this.storage.getItem(BLIND_KEY) ?? "on") !== "off";
  }

  /** Entry point: restore the session or show the login screen. */
  async start(): Promise<void> {
    const token = this.storage.getItem(TOKEN_KEY);
    if (token) {
      await this.login(token);
    } else {
      renderLogin(this.root, (value) => void this.login(value));
    }
  }

  async login(token: string): Promise<void> {
    const api = new ReviewApi(this.baseUrl, token);
    try {
      this.state.reviewer = await api.me();
    } catch (err) {
      const message =
        err instanceof ApiError ? "Token not recognized." : "Service unreachable.";
      renderLogin(this.root, (value) => void this.login(value), message);
      return;
    }
    this.api = api;
    this.storage.setItem(TOKEN_KEY, token);
    await this.offline.replay(api); // deliver anything parked while offline
    await this.reloadTasks();
  }

  logout(): void {
    this.storage.removeItem(TOKEN_KEY);
    this.api = null;
    this.state.reviewer = null;
    this.state.tasks.clear();
    this.state.pending.clear();
    renderLogin(this.root, (value) => void this.login(value));
  }

  async reloadTasks(): Promise<void> {
    if (!this.api) return;
    try {
      const tasks = await this.api.listTasks();
      this.state.tasks.clear();
      for (const task of tasks) {
        this.state.tasks.set(task.article_id, task);
      }
      this.state.banner = null;
    } catch (err) {
      // Keep whatever we already have; no data loss, just a retry banner.
      this.state.banner = {
        kind: "error",
        text: "Could not reach the review service.",
        retry: () => void this.reloadTasks(),
      };
    }
    this.render();
  }

  private handlers: Handlers = {
    openTask: (articleId) => void this.openTask(articleId),
    decide: (articleId, label, note) => void this.decide(articleId, label, note),
    escalate: (articleId) => void this.escalate(articleId),
    setFilter: (name, value) => {
      this.state.filters[name] = value;
      this.render();
    },
    toggleBlind: (checked) => {
      this.state.blind = checked;
      this.storage.setItem(BLIND_KEY, checked ? "on" : "off");
      this.render();
    },
    refresh: () => {
      this.state.route = { screen: "queue" };
      void this.reloadTasks();
    },
    logout: () => this.logout(),
  };

  async openTask(articleId: string): Promise<void> {
    if (!this.api) return;
    try {
      const task = await this.api.getTask(articleId);
      confirmTask(this.state, task);
      this.state.read.add(articleId);
      this.state.route = { screen: "task", articleId };
      this.state.banner = null;
    } catch {
      this.state.banner = {
        kind: "error",
        text: "Could not load the task.",
        retry: () => void this.openTask(articleId),
      };
    }
    this.render();
  }

  /**
   * Optimistic submit: the pending decision disables the buttons
   * immediately; the server's answer either confirms (task replaced by
   * the authoritative copy) or rolls the optimistic state back.
   */
  async decide(articleId: string, label: string, note: string): Promise<void> {
    if (!this.api) return;
    const task = this.state.tasks.get(articleId);
    if (!task || this.state.pending.has(articleId)) return;
    this.state.pending.set(articleId, { articleId, label, note });
    this.render();
    try {
      const updated = await this.api.submitDecision(articleId, {
        label,
        note,
        version: task.version,
      });
      confirmTask(this.state, updated);
      this.state.banner = null;
    } catch (err) {
      rollbackPending(this.state, articleId);
      if (err instanceof ApiError && err.code === "version_conflict") {
        this.state.banner = {
          kind: "conflict",
          text: "This task changed while you were deciding. Refresh to see the latest state.",
          retry: () => void this.openTask(articleId),
        };
      } else if (err instanceof ApiError && err.code === "duplicate_decision") {
        this.state.banner = {
          kind: "info",
          text: "Your decision was already recorded.",
          retry: () => void this.openTask(articleId),
        };
      } else if (err instanceof NetworkError) {
        this.offline.enqueue({
          articleId,
          label,
          note,
          queuedAt: new Date().toISOString(),
        });
        this.state.banner = {
          kind: "info",
          text: "You appear to be offline; the decision is queued and will be sent once.",
          retry: () => void this.replayOffline(),
        };
      } else if (err instanceof ApiError) {
        this.state.banner = { kind: "error", text: err.message };
      } else {
        throw err;
      }
    }
    this.render();
  }

  async replayOffline(): Promise<void> {
    if (!this.api) return;
    await this.offline.replay(this.api);
    await this.reloadTasks();
  }

  async escalate(articleId: string): Promise<void> {
    if (!this.api) return;
    try {
      const updated = await this.api.escalate(articleId);
      confirmTask(this.state, updated);
    } catch (err) {
      this.state.banner = {
        kind: "error",
        text: err instanceof ApiError ? err.message : "Escalation failed.",
      };
    }
    this.render();
  }

  render(): void {
    render(this.root, this.state, this.handlers);
  }
}

export function mount(options: AppOptions): App {
  const app = new App(options);
  void app.start();
  return app;
}

declare global {
  interface Window {
    factpanelApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.factpanelApp = mount({ root: document.getElementById("app")! });
}
