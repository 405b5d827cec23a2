/** Thin typed client over the annotation service; fetch is injectable for tests. */

import type { DocDetail, DocSummary, Proposal, Stats } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** 409 from optimistic concurrency; the caller should reload the record. */
export class ConflictError extends ApiError {}

/** 422 from BIO validation; carries the violated rule. */
export class ValidationError extends ApiError {}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      const detail = await errorDetail(response);
      if (response.status === 409) throw new ConflictError(409, detail);
      if (response.status === 422) throw new ValidationError(422, detail);
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listDocs(): Promise<DocSummary[]> {
    return this.request<DocSummary[]>("/api/docs");
  }

  getDoc(id: number): Promise<DocDetail> {
    return this.request<DocDetail>(`/api/docs/${id}`);
  }

  saveScope(
    id: number,
    target: number,
    bio: string[],
    version?: number,
  ): Promise<unknown> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (version !== undefined) headers["If-Match"] = String(version);
    return this.request(`/api/docs/${id}/targets/${target}/scope`, {
      method: "POST",
      headers,
      body: JSON.stringify({ bio }),
    });
  }

  preAnnotate(id: number, target: number): Promise<Proposal> {
    return this.request<Proposal>(`/api/docs/${id}/targets/${target}/pre-annotate`, {
      method: "POST",
    });
  }

  stats(): Promise<Stats> {
    return this.request<Stats>("/api/stats");
  }

  exportUrl(): string {
    return this.base + "/api/export";
  }
}
