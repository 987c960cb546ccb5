import type {
  Answer,
  Assignment,
  HierarchyView,
  Registration,
  SessionView,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export interface ClientConfig {
  baseUrl: string;
  campaignId: string;
  token?: string;
  fetchFn?: FetchFn;
}

/** Thin typed client over the annotation service HTTP API. */
export class ServiceClient {
  private readonly baseUrl: string;
  private readonly campaignId: string;
  private readonly fetchFn: FetchFn;
  token: string;

  constructor(config: ClientConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, '');
    this.campaignId = config.campaignId;
    this.token = config.token ?? '';
    this.fetchFn = config.fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    if (body !== undefined) headers['Content-Type'] = 'application/json';
    const response = await this.fetchFn(
      `${this.baseUrl}/api/v1/campaigns/${this.campaignId}${path}`,
      {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      },
    );
    const text = await response.text();
    if (!response.ok) {
      let code = 'error';
      let message = text || response.statusText;
      try {
        const parsed = JSON.parse(text);
        if (parsed && typeof parsed.code === 'string') code = parsed.code;
        if (parsed && typeof parsed.message === 'string') message = parsed.message;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(response.status, code, message);
    }
    return JSON.parse(text) as T;
  }

  async register(name: string): Promise<Registration> {
    const registration = await this.call<Registration>('POST', '/annotators', { name });
    this.token = registration.token;
    return registration;
  }

  hierarchy(): Promise<HierarchyView> {
    return this.call('GET', '/hierarchy');
  }

  async claim(): Promise<Assignment | null> {
    const body = await this.call<{ assignment: Assignment | null }>('POST', '/claims');
    return body.assignment;
  }

  async currentClaim(): Promise<Assignment | null> {
    const body = await this.call<{ assignment: Assignment | null }>('GET', '/claims/current');
    return body.assignment;
  }

  async abandon(taskId: string): Promise<Assignment | null> {
    const body = await this.call<{ assignment: Assignment | null }>('POST', '/claims/abandon', {
      task_id: taskId,
    });
    return body.assignment;
  }

  startSession(imageId: string): Promise<SessionView> {
    return this.call('POST', '/sessions', { image_id: imageId });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.call('GET', `/sessions/${sessionId}`);
  }

  answer(sessionId: string, sequenceNo: number, answer: Answer): Promise<SessionView> {
    return this.call('POST', `/sessions/${sessionId}/answers`, {
      sequence_no: sequenceNo,
      answer,
    });
  }
}
