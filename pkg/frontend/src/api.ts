// Thin typed client for the review service. One method per endpoint and
// nothing else: every mutation the app performs maps to exactly one
// documented /v1 call, and responses are returned verbatim so view state
// stays byte-comparable with a direct API read.

import type {
  ArticleDetail,
  ArticlesBody,
  DecisionBody,
  FlagPayload,
  MappingsBody,
  ProposeBody,
  QueueBody,
  ResolveBody,
  SchemaBody,
  StatsBody,
  SupersedeBody,
} from "./types.js";
import type { UiConfig } from "./config.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Server answered with a non-2xx status. */
export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`HTTP ${status}: ${typeof detail === "string" ? detail : JSON.stringify(detail)}`);
    this.name = "ApiError";
  }
}

/** Server did not answer at all (connection refused, DNS, offline). */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`API unreachable: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "NetworkError";
  }
}

export interface ReviewApi {
  getQueue(): Promise<QueueBody>;
  getArticles(): Promise<ArticlesBody>;
  getArticle(articleId: string): Promise<ArticleDetail>;
  getFlag(flagId: string): Promise<FlagPayload>;
  getSchema(): Promise<SchemaBody>;
  getStats(): Promise<StatsBody>;
  resolveFlag(flagId: string, resolution: string): Promise<ResolveBody>;
  postRecords(
    articleId: string,
    records: Record<string, string>[],
    expectedRevision: number,
    provenance?: string,
  ): Promise<SupersedeBody>;
  getMappings(field?: string, status?: string): Promise<MappingsBody>;
  addProposal(field: string, alias: string, canonical: string, note?: string): Promise<unknown>;
  proposeForField(field: string): Promise<ProposeBody>;
  decideProposal(
    proposalId: string,
    accept: boolean,
    correctedCanonical?: string,
  ): Promise<DecisionBody>;
}

export class ApiClient implements ReviewApi {
  constructor(private cfg: UiConfig, private fetchFn: FetchLike) {}

  private async req(method: string, path: string, body?: unknown): Promise<any> {
    const headers: Record<string, string> = {};
    // the token only ever travels in the Authorization header
    if (this.cfg.token) headers["Authorization"] = `Bearer ${this.cfg.token}`;
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    let res: Response;
    try {
      res = await this.fetchFn(`${this.cfg.apiBase}${path}`, init);
    } catch (err) {
      throw new NetworkError(err);
    }
    if (!res.ok) {
      let detail: unknown;
      try {
        detail = (await res.json()).detail;
      } catch {
        detail = res.statusText;
      }
      throw new ApiError(res.status, detail);
    }
    return res.json();
  }

  getQueue(): Promise<QueueBody> {
    return this.req("GET", "/v1/queue");
  }

  getArticles(): Promise<ArticlesBody> {
    return this.req("GET", "/v1/articles");
  }

  getArticle(articleId: string): Promise<ArticleDetail> {
    return this.req("GET", `/v1/articles/${encodeURIComponent(articleId)}`);
  }

  getFlag(flagId: string): Promise<FlagPayload> {
    return this.req("GET", `/v1/flags/${encodeURIComponent(flagId)}`);
  }

  getSchema(): Promise<SchemaBody> {
    return this.req("GET", "/v1/schema");
  }

  getStats(): Promise<StatsBody> {
    return this.req("GET", "/v1/stats");
  }

  resolveFlag(flagId: string, resolution: string): Promise<ResolveBody> {
    return this.req("POST", `/v1/flags/${encodeURIComponent(flagId)}/resolution`, {
      resolution,
    });
  }

  postRecords(
    articleId: string,
    records: Record<string, string>[],
    expectedRevision: number,
    provenance = "human",
  ): Promise<SupersedeBody> {
    return this.req("POST", `/v1/articles/${encodeURIComponent(articleId)}/records`, {
      records,
      expected_revision: expectedRevision,
      provenance,
    });
  }

  getMappings(field?: string, status?: string): Promise<MappingsBody> {
    const params = new URLSearchParams();
    if (field) params.set("field", field);
    if (status) params.set("status", status);
    const qs = params.toString();
    return this.req("GET", `/v1/mappings${qs ? `?${qs}` : ""}`);
  }

  addProposal(field: string, alias: string, canonical: string, note = ""): Promise<unknown> {
    return this.req("POST", "/v1/mappings/proposals", { field, alias, canonical, note });
  }

  proposeForField(field: string): Promise<ProposeBody> {
    return this.req("POST", "/v1/mappings/propose", { field });
  }

  decideProposal(
    proposalId: string,
    accept: boolean,
    correctedCanonical?: string,
  ): Promise<DecisionBody> {
    const body: Record<string, unknown> = { accept };
    if (correctedCanonical !== undefined) body["corrected_canonical"] = correctedCanonical;
    return this.req("POST", `/v1/mappings/${encodeURIComponent(proposalId)}/decision`, body);
  }
}
