// Thin typed client over the debugging service. Every method maps to one
// route; non-2xx responses become ApiError with the server's detail text.

import type {
  ExampleDetail,
  FeedbackAck,
  FeedbackRequest,
  InstancePage,
  RetrainAck,
  RetrainRequest,
  SessionStatus,
  TaskExplanationResponse,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }

  /** The server rejects reads and writes with 409 while a round is running. */
  get retraining(): boolean {
    return this.status === 409;
  }
}

async function toError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) throw await toError(response);
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getInstances(sessionId: string, page = 1): Promise<InstancePage> {
    return this.request(`/sessions/${sessionId}/instances?page=${page}`);
  }

  getTaskExplanation(
    sessionId: string,
    topK = 50,
  ): Promise<TaskExplanationResponse> {
    return this.request(`/sessions/${sessionId}/task-explanation?top_k=${topK}`);
  }

  getExample(sessionId: string, exampleId: string): Promise<ExampleDetail> {
    return this.request(`/sessions/${sessionId}/examples/${exampleId}`);
  }

  postFeedback(sessionId: string, op: FeedbackRequest): Promise<FeedbackAck> {
    return this.post(`/sessions/${sessionId}/feedback`, op);
  }

  startRetrain(
    sessionId: string,
    request: RetrainRequest = {},
  ): Promise<RetrainAck> {
    return this.post(`/sessions/${sessionId}/retrain`, request);
  }

  getStatus(sessionId: string): Promise<SessionStatus> {
    return this.request(`/sessions/${sessionId}/status`);
  }

  exportUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/export`;
  }
}
