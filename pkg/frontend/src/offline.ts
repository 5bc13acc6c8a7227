// Offline decision queue: submissions that failed with a network error
// are parked in storage and replayed once connectivity returns. The
// server's duplicate rejection makes replay exactly-once in effect, so a
// queued entry is dropped on success AND on duplicate_decision.

import { ApiError, NetworkError, type ReviewApi } from "./api";

export interface QueuedDecision {
  articleId: string;
  label: string;
  note: string;
  queuedAt: string;
}

const STORAGE_KEY = "factpanel.offline_decisions";

export class OfflineQueue {
  constructor(private storage: Storage) {}

  list(): QueuedDecision[] {
    try {
      return JSON.parse(this.storage.getItem(STORAGE_KEY) ?? "[]");
    } catch {
      return [];
    }
  }

  private save(entries: QueuedDecision[]): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify(entries));
  }

  enqueue(entry: QueuedDecision): void {
    const entries = this.list();
    // One pending decision per task: later attempts replace earlier ones.
    this.save([...entries.filter((e) => e.articleId !== entry.articleId), entry]);
  }

  /** Replay queued decisions; returns how many were delivered or settled. */
  async replay(api: ReviewApi): Promise<number> {
    const entries = this.list();
    if (entries.length === 0) return 0;
    const remaining: QueuedDecision[] = [];
    let settled = 0;
    for (const entry of entries) {
      try {
        await api.submitDecision(entry.articleId, {
          label: entry.label,
          note: entry.note,
        });
        settled += 1;
      } catch (err) {
        if (err instanceof NetworkError) {
          remaining.push(entry); // still offline, keep for the next replay
        } else if (err instanceof ApiError) {
          // duplicate_decision means the original submit did land; any
          // other API rejection is final too. Either way: settled.
          settled += 1;
        } else {
          throw err;
        }
      }
    }
    this.save(remaining);
    return settled;
  }

  clear(): void {
    this.storage.removeItem(STORAGE_KEY);
  }
}
