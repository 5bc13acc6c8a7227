// Wire types mirroring the review service JSON API.

export type LabelValue = "Factually Correct" | "Factually Incorrect";
export type TaskStateValue = "open" | "awaiting_escalation" | "resolved";

export interface ArticlePayload {
  id: string;
  url: string;
  source: string;
  topic: string;
  published_at: string;
  title: string;
  text: string;
}

export interface AnnotationPayload {
  article_id: string;
  endpoint: string;
  shot_mode: string;
  label: LabelValue | null;
  failure: string | null;
  explanation: string;
  raw_response: string;
  exchange_ref: string;
  truncated: boolean;
  error: string;
}

export interface VoteRecordPayload {
  article_id: string;
  votes: Record<string, LabelValue>;
  majority_label: LabelValue | "tie";
  unanimous: boolean;
  valid_vote_count: number;
  excluded_count: number;
}

export interface DecisionPayload {
  article_id: string;
  reviewer_id: string;
  label: LabelValue;
  note: string;
  decided_at: string;
}

export interface TaskPayload {
  article_id: string;
  vote_record: VoteRecordPayload;
  annotations: AnnotationPayload[];
  state: TaskStateValue;
  decisions: DecisionPayload[];
  resolution: LabelValue | null;
  resolved_by: string | null;
  opened_at: string;
  version: number;
  article: ArticlePayload | null;
}

export interface ReviewerPayload {
  id: string;
  display_name: string;
  role: "reviewer" | "senior";
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
