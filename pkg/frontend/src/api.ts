/**
 * Typed client for the generation service. All server interaction in the
 * app goes through this module, and only via the documented /v1 endpoints,
 * so tests can substitute a recorded-fixture fetch with zero app changes.
 */

import type { GenerateResponse, HealthResponse, Post } from './types';

/** Non-2xx response, carrying the server's {"error": ...} message. */
export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ServiceError';
  }
}

export interface GenerateOptions {
  beam?: number;
  maxLen?: number;
}

export interface DraftFields {
  title?: string;
  summary?: string;
  text: string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async health(): Promise<HealthResponse> {
    return this.request<HealthResponse>('GET', '/v1/health');
  }

  async generate(
    text: string,
    tasks: string[],
    options: GenerateOptions = {},
  ): Promise<GenerateResponse> {
    const body: Record<string, unknown> = { text, tasks };
    if (options.beam !== undefined) body.beam = options.beam;
    if (options.maxLen !== undefined) body.max_len = options.maxLen;
    return this.request<GenerateResponse>('POST', '/v1/generate', body);
  }

  async createPost(draft: DraftFields): Promise<Post> {
    return this.request<Post>('POST', '/v1/posts', draft);
  }

  async listPosts(): Promise<Post[]> {
    return this.request<Post[]>('GET', '/v1/posts');
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'content-type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let message = `request failed with status ${response.status}`;
      try {
        const parsed = (await response.json()) as { error?: string };
        if (parsed.error) message = parsed.error;
      } catch {
        // keep the generic message when the body is not the documented shape
      }
      throw new ServiceError(response.status, message);
    }
    return (await response.json()) as T;
  }
}
