import {
  labelAckSchema,
  metricsSchema,
  queryViewSchema,
  type LabelAck,
  type Metrics,
  type QueryView,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The label targeted a query the service no longer holds. */
export class StaleQueryError extends ApiError {
  constructor(message: string) {
    super(message, 409);
    this.name = "StaleQueryError";
  }
}

async function errorBody(response: Response): Promise<{ error?: string; reason?: string }> {
  try {
    return (await response.json()) as { error?: string; reason?: string };
  } catch {
    return {};
  }
}

/**
 * Typed client for the streaming service. Reads /queries and /metrics;
 * the only mutation it can perform is POST /labels.
 */
export class ConsoleApi {
  constructor(
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private readonly base: string = "",
  ) {}

  async pendingQuery(): Promise<QueryView | null> {
    const response = await this.fetchImpl(`${this.base}/queries`);
    if (!response.ok) {
      throw new ApiError(`queries request failed (${response.status})`, response.status);
    }
    const body = (await response.json()) as { pending: unknown };
    if (body.pending === null || body.pending === undefined) {
      return null;
    }
    return queryViewSchema.parse(body.pending);
  }

  async metrics(): Promise<Metrics> {
    const response = await this.fetchImpl(`${this.base}/metrics`);
    if (!response.ok) {
      throw new ApiError(`metrics request failed (${response.status})`, response.status);
    }
    return metricsSchema.parse(await response.json());
  }

  async submitLabel(index: number, label: string): Promise<LabelAck> {
    const response = await this.fetchImpl(`${this.base}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ index, label }),
    });
    if (response.status === 409) {
      const body = await errorBody(response);
      throw new StaleQueryError(body.error ?? "query is no longer pending");
    }
    if (!response.ok) {
      const body = await errorBody(response);
      throw new ApiError(body.error ?? `label rejected (${response.status})`, response.status);
    }
    return labelAckSchema.parse(await response.json());
  }
}
