// Thin JSON client for the session API.

import { SessionEvent, Snapshot } from "./state.js";

export interface VocabEntry {
  word: string;
  role: string;
  column: string | null;
}

export interface FullSnapshot extends Snapshot {
  best_rating: number | null;
  accept_threshold: number;
  vocab: VocabEntry[];
}

export interface FeedbackDraft {
  rating: number;
  words: string[];
  targets: [string, string, string, number][];
  decision: string;
}

export class ApiClient {
  constructor(private base: string) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method,
      headers: body !== undefined ? { "Content-Type": "application/json" } : {},
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await response.text();
    const payload = text ? JSON.parse(text) : {};
    if (!response.ok) {
      const message = payload && payload.message ? payload.message : response.statusText;
      throw new Error(`${payload.code ?? response.status}: ${message}`);
    }
    return payload as T;
  }

  createSession(config: Record<string, unknown>): Promise<{ id: string }> {
    return this.call("POST", "/api/v1/sessions", { config });
  }

  snapshot(id: string): Promise<FullSnapshot> {
    return this.call("GET", `/api/v1/sessions/${id}`);
  }

  events(id: string, since: number): Promise<{ events: SessionEvent[] }> {
    return this.call("GET", `/api/v1/sessions/${id}/events?since=${since}`);
  }

  submitFeedback(id: string, draft: FeedbackDraft): Promise<{ ok: boolean; stage: string }> {
    return this.call("POST", `/api/v1/sessions/${id}/feedback`, {
      rating: draft.rating,
      judgement: { text: draft.words, targets: draft.targets },
      decision: draft.decision,
    });
  }
}
