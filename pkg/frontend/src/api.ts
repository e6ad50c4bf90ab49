import {
  DecisionResponse,
  PendingItem,
  PendingPayload,
  Progress,
  toPendingItem,
  Verdict,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** The server answered with a non-2xx status: the request was received. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Thin typed client over the review service HTTP API. */
export class ReviewApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchImpl?: FetchLike,
  ) {
    // Wrap the global so fetch is not invoked with a broken `this`.
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  imageUrl(id: string): string {
    return `${this.baseUrl}/api/image/${encodeURIComponent(id)}`;
  }

  async pending(limit?: number): Promise<PendingItem[]> {
    const query = limit === undefined ? "" : `?limit=${limit}`;
    const payload = (await this.request(`/api/pending${query}`)) as PendingPayload[];
    return payload.map((raw) => toPendingItem(raw, this.imageUrl(raw.id)));
  }

  async decide(id: string, verdict: Verdict, annotator = ""): Promise<DecisionResponse> {
    const body = JSON.stringify({ id, verdict, annotator });
    return (await this.request("/api/decision", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body,
    })) as DecisionResponse;
  }

  async progress(): Promise<Progress> {
    return (await this.request("/api/progress")) as Progress;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, `${path} returned ${response.status}`);
    }
    return response.json();
  }
}
