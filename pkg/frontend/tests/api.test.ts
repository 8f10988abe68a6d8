import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import type { FetchLike } from "../src/api.js";

interface Captured {
  input: string;
  init?: RequestInit;
}

function capture(
  status: number,
  body: unknown,
): { fetch: FetchLike; calls: Captured[] } {
  const calls: Captured[] = [];
  const fetch: FetchLike = (input, init) => {
    calls.push({ input, init });
    return Promise.resolve(
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      }),
    );
  };
  return { fetch, calls };
}

describe("ApiClient", () => {
  it("builds the instances URL with the page parameter", async () => {
    const { fetch, calls } = capture(200, { items: [] });
    const client = new ApiClient("http://api", fetch);
    await client.getInstances("s1", 3);
    expect(calls[0]?.input).toBe("http://api/sessions/s1/instances?page=3");
  });

  it("posts feedback as JSON with the content-type header", async () => {
    const { fetch, calls } = capture(200, { recorded: {}, live_op: "remove" });
    const client = new ApiClient("http://api", fetch);
    const ack = await client.postFeedback("s1", {
      scope: "task",
      op: "remove",
      word: "decoy",
    });
    expect(ack.live_op).toBe("remove");
    const init = calls[0]?.init;
    expect(init?.method).toBe("POST");
    expect(new Headers(init?.headers).get("Content-Type")).toBe(
      "application/json",
    );
    expect(JSON.parse(String(init?.body))).toEqual({
      scope: "task",
      op: "remove",
      word: "decoy",
    });
  });

  it("passes top_k through to the task explanation route", async () => {
    const { fetch, calls } = capture(200, { entries: [], marks: {} });
    const client = new ApiClient("http://api", fetch);
    await client.getTaskExplanation("s1", 7);
    expect(calls[0]?.input).toBe(
      "http://api/sessions/s1/task-explanation?top_k=7",
    );
  });

  it("turns a non-2xx response into ApiError with the server detail", async () => {
    const { fetch } = capture(422, { detail: "word 'x' is not in the vocabulary" });
    const client = new ApiClient("http://api", fetch);
    const failure = client.getStatus("s1");
    await expect(failure).rejects.toBeInstanceOf(ApiError);
    await expect(failure).rejects.toMatchObject({
      status: 422,
      detail: "word 'x' is not in the vocabulary",
    });
  });

  it("flags 409 as the retraining signal", async () => {
    const { fetch } = capture(409, { detail: "a retraining job is already running" });
    const client = new ApiClient("http://api", fetch);
    try {
      await client.getInstances("s1");
      expect.unreachable();
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
      expect((error as ApiError).retraining).toBe(true);
    }
  });

  it("falls back to the status text when the error body is not JSON", async () => {
    const fetch: FetchLike = () =>
      Promise.resolve(
        new Response("<html>oops</html>", {
          status: 500,
          statusText: "Internal Server Error",
        }),
      );
    const client = new ApiClient("http://api", fetch);
    await expect(client.getStatus("s1")).rejects.toMatchObject({
      status: 500,
      detail: "Internal Server Error",
    });
  });

  it("exposes the export download URL", () => {
    const client = new ApiClient("http://api", capture(200, {}).fetch);
    expect(client.exportUrl("s1")).toBe("http://api/sessions/s1/export");
  });
});
