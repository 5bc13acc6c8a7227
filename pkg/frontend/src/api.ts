// Thin typed client over the review service HTTP JSON API.
// The UI talks to the primary system exclusively through these calls.

import type { ReviewerPayload, TaskPayload } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class NetworkError extends Error {}

export interface DecisionRequest {
  label: string;
  note?: string;
  version?: number;
}

export class ReviewApi {
  constructor(
    private baseUrl: string,
    private token: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, {
        method,
        headers: {
          Authorization: `Bearer ${this.token}`,
          ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        },
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok) {
      let code = `http_${response.status}`;
      let message = response.statusText;
      try {
        const payload = await response.json();
        const detail = payload?.detail;
        if (typeof detail === "string") {
          message = detail;
        } else if (detail) {
          code = detail.code ?? code;
          message = detail.message ?? message;
        }
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  me(): Promise<ReviewerPayload> {
    return this.request("GET", "/reviewers/me");
  }

  async listTasks(state?: string): Promise<TaskPayload[]> {
    const query = state ? `?state=${encodeURIComponent(state)}` : "";
    const body = await this.request<{ tasks: TaskPayload[] }>("GET", `/tasks${query}`);
    return body.tasks;
  }

  getTask(articleId: string): Promise<TaskPayload> {
    return this.request("GET", `/tasks/${encodeURIComponent(articleId)}`);
  }

  submitDecision(articleId: string, decision: DecisionRequest): Promise<TaskPayload> {
    return this.request("POST", `/tasks/${encodeURIComponent(articleId)}/decisions`, decision);
  }

  escalate(articleId: string): Promise<TaskPayload> {
    return this.request("POST", `/tasks/${encodeURIComponent(articleId)}/escalate`, {});
  }
}
