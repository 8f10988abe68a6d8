// Payload shapes of the debugging service API. Field names mirror the
// server's JSON exactly; everything here is data, no behavior.

export type LiveOp = "add" | "remove";
export type FeedbackScope = "task" | "instance";
export type FeedbackVerb = "add" | "remove" | "reset";
export type SessionState = "idle" | "retraining";

/** Lowercased word -> live op, as served per example or for the task. */
export type MarkMap = Record<string, LiveOp>;

export interface InstanceItem {
  example_id: string;
  tokens: string[];
  gold_label: number;
  predicted_label: number;
  scores: number[];
  marks: MarkMap;
}

export interface InstancePage {
  round: number;
  page: number;
  page_size: number;
  total: number;
  items: InstanceItem[];
}

export interface TaskEntry {
  word: string;
  mean_importance: number;
  support: string[];
}

export interface TaskExplanationResponse {
  round: number;
  entries: TaskEntry[];
  marks: MarkMap;
}

export interface ExampleDetail {
  round: number;
  example_id: string;
  tokens: string[];
  gold_label: number;
  predicted_label: number;
  correct: boolean;
  scores: number[];
  marks: MarkMap;
}

export interface FeedbackRequest {
  scope: FeedbackScope;
  op: FeedbackVerb;
  word: string;
  example_id?: string;
}

export interface FeedbackAck {
  recorded: {
    scope: FeedbackScope;
    op: FeedbackVerb;
    word: string;
    example_id: string | null;
    timestamp: number;
  };
  live_op: LiveOp | null;
}

export interface DebugReport {
  epochs_run: number;
  final_task_loss: number | null;
  final_er_loss: number | null;
  task_loss_history: number[];
  er_loss_history: number[];
  pre_id_accuracy: number | null;
  post_id_accuracy: number | null;
  pre_ood_accuracy: number | null;
  post_ood_accuracy: number | null;
  pre_target_attribution: number | null;
  post_target_attribution: number | null;
  display_method: string;
  training_method: string;
}

export interface SessionStatus {
  status: SessionState;
  round: number;
  report: DebugReport | null;
  error: string | null;
}

export interface RetrainRequest {
  policy?: string;
  config?: Record<string, number | string>;
}

export interface RetrainAck {
  job_id: string;
  status: SessionState;
}
