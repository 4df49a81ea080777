import type {
  AlertView,
  CandidateView,
  DecisionItem,
  DecisionsResponse,
  SessionView,
  StepResponse,
  TermRecordView,
} from './types';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private base: string = '') {}

  getSession(): Promise<SessionView> {
    return request(`${this.base}/api/session`);
  }

  getCandidates(status?: string): Promise<CandidateView[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : '';
    return request(`${this.base}/api/candidates${query}`);
  }

  getTermdb(): Promise<TermRecordView[]> {
    return request(`${this.base}/api/termdb`);
  }

  getAlerts(): Promise<AlertView[]> {
    return request(`${this.base}/api/alerts`);
  }

  postDecisions(items: DecisionItem[]): Promise<DecisionsResponse> {
    return request(`${this.base}/api/decisions`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(items),
    });
  }

  step(): Promise<StepResponse> {
    return request(`${this.base}/api/session/step`, { method: 'POST' });
  }
}
